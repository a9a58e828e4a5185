#pragma once

#include <map>
#include <span>
#include <vector>

#include "plencal/types.hpp"

namespace plencal {

/// One raw-image measurement of a tracked point inside one micro image.
struct Observation {
  int point_id = 0;
  int view_id = 0;
  int lens_id = 0;
  double x = 0.0;  // x_Rd [px]
  double y = 0.0;  // y_Rd [px]

  Vec2 xy() const { return Vec2(x, y); }
};

/// Feature tracks over micro images; this is the masking function in data
/// form: a record exists exactly where theta = 1.
///
/// Records are kept sorted by (point, view, lens) and the (point, view)
/// clusters are contiguous, so per-track and per-cluster access are ranges.
class ObservationSet {
 public:
  ObservationSet() = default;
  explicit ObservationSet(std::vector<Observation> records);

  const std::vector<Observation>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  const std::vector<int>& point_ids() const { return point_ids_; }
  const std::vector<int>& view_ids() const { return view_ids_; }

  /// Contiguous range of records for one (point, view) cluster.
  std::span<const Observation> cluster(int point_id, int view_id) const;

  /// All records of one point, across views.
  std::span<const Observation> track(int point_id) const;

  /// Number of distinct views observing a point.
  int view_count(int point_id) const;

  /// (point, view) pairs with at least one record, sorted.
  const std::vector<std::pair<int, int>>& clusters() const { return cluster_keys_; }

  struct FilterReport {
    std::vector<int> dropped_points;  // points seen in fewer than min_views views
    std::size_t dropped_records = 0;
  };

  /// Copy containing only points observed in at least `min_views` views.
  ObservationSet filter_min_views(int min_views, FilterReport* report = nullptr) const;

 private:
  void build_index();

  std::vector<Observation> records_;
  std::vector<int> point_ids_;
  std::vector<int> view_ids_;
  std::map<int, std::pair<std::size_t, std::size_t>> track_ranges_;
  std::map<std::pair<int, int>, std::pair<std::size_t, std::size_t>> cluster_ranges_;
  std::vector<std::pair<int, int>> cluster_keys_;
};

/// Known metric distance between two reconstructed points.
struct ScaleConstraint {
  int point_a = 0;
  int point_b = 0;
  double distance = 0.0;  // [mm]
  double weight = 1.0;
};

}  // namespace plencal
