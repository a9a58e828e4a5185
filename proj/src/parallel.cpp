#include "plencal/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>

namespace plencal {

static int env_thread_cap() {
  const char* env = std::getenv("PLENCAL_THREADS");
  if (env == nullptr) return 0;
  try {
    const int n = std::stoi(env);
    return n > 0 ? n : 1;
  } catch (...) {
    return 0;
  }
}

int default_thread_count() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n <= 0) n = 1;
  const int cap = env_thread_cap();
  if (cap > 0) n = std::min(n, cap);
  return n;
}

int resolve_thread_count(int requested) {
  if (requested <= 0) return default_thread_count();
  const int cap = env_thread_cap();
  return cap > 0 ? std::min(requested, cap) : requested;
}

void parallel_chunks(std::size_t n, int threads,
                     const std::function<void(int, std::size_t, std::size_t)>& fn) {
  threads = std::max(1, threads);
  if (n == 0) return;
  if (threads == 1) {
    fn(0, 0, n);
    return;
  }
  const std::size_t chunk = (n + static_cast<std::size_t>(threads) - 1) / threads;
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    const std::size_t begin = std::min(n, static_cast<std::size_t>(t) * chunk);
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    workers.emplace_back(fn, t, begin, end);
  }
  for (std::thread& w : workers) w.join();
}

}  // namespace plencal
