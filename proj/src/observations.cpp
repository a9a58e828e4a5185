#include "plencal/observations.hpp"

#include <algorithm>
#include <set>

namespace plencal {

ObservationSet::ObservationSet(std::vector<Observation> records) : records_(std::move(records)) {
  std::sort(records_.begin(), records_.end(), [](const Observation& a, const Observation& b) {
    return std::tie(a.point_id, a.view_id, a.lens_id) < std::tie(b.point_id, b.view_id, b.lens_id);
  });
  for (std::size_t i = 1; i < records_.size(); ++i) {
    const Observation& a = records_[i - 1];
    const Observation& b = records_[i];
    if (a.point_id == b.point_id && a.view_id == b.view_id && a.lens_id == b.lens_id) {
      throw ConfigError("duplicate (point, view, lens) observation");
    }
  }
  build_index();
}

void ObservationSet::build_index() {
  track_ranges_.clear();
  cluster_ranges_.clear();
  cluster_keys_.clear();
  point_ids_.clear();
  view_ids_.clear();
  std::set<int> views;
  std::size_t i = 0;
  while (i < records_.size()) {
    const int point = records_[i].point_id;
    const std::size_t track_begin = i;
    while (i < records_.size() && records_[i].point_id == point) {
      const int view = records_[i].view_id;
      views.insert(view);
      const std::size_t cluster_begin = i;
      while (i < records_.size() && records_[i].point_id == point && records_[i].view_id == view) {
        ++i;
      }
      cluster_ranges_[{point, view}] = {cluster_begin, i};
      cluster_keys_.emplace_back(point, view);
    }
    track_ranges_[point] = {track_begin, i};
    point_ids_.push_back(point);
  }
  view_ids_.assign(views.begin(), views.end());
}

std::span<const Observation> ObservationSet::cluster(int point_id, int view_id) const {
  const auto it = cluster_ranges_.find({point_id, view_id});
  if (it == cluster_ranges_.end()) return {};
  return {records_.data() + it->second.first, it->second.second - it->second.first};
}

std::span<const Observation> ObservationSet::track(int point_id) const {
  const auto it = track_ranges_.find(point_id);
  if (it == track_ranges_.end()) return {};
  return {records_.data() + it->second.first, it->second.second - it->second.first};
}

int ObservationSet::view_count(int point_id) const {
  int n = 0;
  int last_view = -1;
  bool first = true;
  for (const Observation& r : track(point_id)) {
    if (first || r.view_id != last_view) ++n;
    last_view = r.view_id;
    first = false;
  }
  return n;
}

ObservationSet ObservationSet::filter_min_views(int min_views, FilterReport* report) const {
  std::vector<Observation> kept;
  kept.reserve(records_.size());
  FilterReport local;
  for (const int point : point_ids_) {
    if (view_count(point) >= min_views) {
      const auto range = track(point);
      kept.insert(kept.end(), range.begin(), range.end());
    } else {
      local.dropped_points.push_back(point);
      local.dropped_records += track(point).size();
    }
  }
  if (report != nullptr) *report = std::move(local);
  return ObservationSet(std::move(kept));
}

}  // namespace plencal
