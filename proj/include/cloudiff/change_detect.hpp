#pragma once

#include "cloudiff/depth_filter.hpp"
#include "cloudiff/geometry.hpp"
#include "cloudiff/kdtree.hpp"
#include "cloudiff/occupancy.hpp"
#include "cloudiff/registration.hpp"

#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>

namespace cloudiff {

struct ChangeConfig {
  double change_threshold = 3.2;        // th_ch, m
  double downsample_resolution = 0.8;   // rho_p, m
  double octree_resolution = 0.8;       // rho_o, m
  double max_depth = 30.0;              // th_d, m
  double probe_depth = 20.0;            // th_f, m
  bool align_to_prior = true;
  RegistrationConfig alignment;
  int threads = 0;

  void validate() const;
  [[nodiscard]] ObservedAreaConfig observed_area() const {
    return {max_depth, probe_depth, octree_resolution};
  }
};

// A_obs as seen from the (possibly re-aligned) global-cloud frame: queries
// are mapped back into the frame the occupancy map was built in.
class ObservedArea {
 public:
  ObservedArea() = default;
  ObservedArea(std::shared_ptr<const OccupancyMap> map, const Pose& map_from_query)
      : map_(std::move(map)), map_from_query_(map_from_query) {}

  [[nodiscard]] bool contains(const Point3& p) const {
    return map_ != nullptr && map_->contains(map_from_query_ * p);
  }
  [[nodiscard]] const OccupancyMap* map() const { return map_.get(); }
  [[nodiscard]] const Pose& map_from_query() const { return map_from_query_; }

 private:
  std::shared_ptr<const OccupancyMap> map_;
  Pose map_from_query_;
};

struct ChangeReport {
  PointCloud global_cloud;    // aligned P_g
  PointCloud prior_cloud;     // P_p at rho_p
  PointCloud observed_prior;  // P_p^obs
  PointCloud new_points;      // P_new
  PointCloud removed_points;  // P_rm
  ObservedArea observed_area;
  RegistrationResult alignment;
  bool aligned = false;  // alignment attempted and accepted
  std::vector<std::string> warnings;
};

/// Pipeline failure tagged with the step that raised it.
class PipelineError : public std::runtime_error {
 public:
  PipelineError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  [[nodiscard]] const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Union of depth_to_cloud over all keyframes (poses[k] replaces the
/// keyframe pose), voxel-downsampled at rho_p.
PointCloud build_global_cloud(std::span<const Keyframe> keyframes,
                              std::span<const Pose> poses, double max_depth,
                              double downsample_resolution);

struct Alignment {
  PointCloud aligned;
  RegistrationResult registration;
  bool accepted = false;
};

/// GICP of P_g onto P_p from the identity. A rejected registration leaves
/// P_g untouched.
Alignment align_global_to_prior(const PointCloud& global_cloud,
                                const PointCloud& prior_cloud,
                                const RegistrationConfig& config);

/// { p in P_p : p in A_obs  or  nearest_distance(p, P_g) <= th_ch }, order
/// preserved. An empty P_g leaves only the A_obs clause.
PointCloud build_observed_prior(const PointCloud& prior_cloud,
                                const KdTree& global_index,
                                const ObservedArea& observed,
                                double change_threshold, int threads = 0);

struct Classification {
  PointCloud new_points;
  PointCloud removed_points;
};

/// P_new = { p in P_g : d(p, P_p^obs) >= th_ch },
/// P_rm  = { p in P_p^obs : d(p, P_g) >= th_ch }.
/// An empty opposing cloud marks every point as changed.
Classification classify_changes(const PointCloud& global_cloud,
                                const PointCloud& observed_prior,
                                double change_threshold, int threads = 0);

/// The four detection steps composed. `prior_cloud` is downsampled at rho_p
/// before use. `raw` (optional) are the unfiltered depth images, forwarded to
/// build_observed_area.
ChangeReport detect(std::span<const Keyframe> keyframes,
                    std::span<const Pose> poses, const PointCloud& prior_cloud,
                    const Bounds& bounds, const ChangeConfig& config,
                    std::span<const DepthImage> raw = {});

}  // namespace cloudiff
