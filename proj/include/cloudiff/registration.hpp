#pragma once

#include "cloudiff/geometry.hpp"
#include "cloudiff/kdtree.hpp"

#include <vector>

namespace cloudiff {

// Plane-to-plane covariance conditioning: eigenvalues become (eps, 1, 1).
inline constexpr double kCovarianceEpsilon = 1e-3;

// Keyframes aggregated into one local cloud before prior registration.
inline constexpr int kLocalCloudWindow = 5;

struct RegistrationConfig {
  int max_iterations = 64;
  double translation_epsilon = 1e-4;  // m
  double rotation_epsilon = 1e-4;     // rad
  double correspondence_distance = 1.0;
  int knn_for_covariance = 20;
  double fitness_threshold = 0.5;  // m
  double max_translation = 1.0;    // m, displacement from the initial guess
  int thread_count = 0;            // 0 = OpenMP default

  /// Throws std::invalid_argument when a threshold is out of range.
  void validate() const;
};

// The normal matrix and covariance are expressed in the increment
// [d_theta; d_t], where the estimate is updated as
//   R <- Exp(d_theta) * R,  t <- t + d_t
// i.e. a world-frame rotation about the local cloud's origin followed by a
// world-frame translation of that origin.
struct RegistrationResult {
  Pose transform;                   // maps local-cloud coordinates to prior
  bool converged = false;
  double fitness = 0.0;             // mean NN distance local -> prior
  Matrix6 hessian = Matrix6::Zero();  // Gauss-Newton normal matrix (PD)
  Matrix6 covariance = Matrix6::Zero();
  bool has_covariance = false;
  int iterations = 0;
  double translation_length = 0.0;  // |t - t_initial|
  std::size_t correspondences = 0;
  bool accepted = false;
};

/// Sample covariance of the k nearest neighbours of point `i` (the point
/// itself included). Not regularized.
Matrix3 neighborhood_covariance(const PointCloud& cloud, const KdTree& tree,
                                std::size_t i, int k);

/// Replace the eigenvalues of `cov` by (eps, 1, 1), keeping its eigenbasis.
Matrix3 regularize_plane(const Matrix3& cov, double eps = kCovarianceEpsilon);

/// Regularized per-point covariances. Throws if the cloud has fewer than k
/// points.
std::vector<Matrix3> estimate_point_covariances(const PointCloud& cloud,
                                                int k, int threads = 0);

// A registration target prepared once and reused across many registrations
// (the prior cloud is shared by every local-cloud registration).
class GicpTarget {
 public:
  GicpTarget(PointCloud cloud, int k, int threads = 0);

  [[nodiscard]] const PointCloud& cloud() const { return cloud_; }
  [[nodiscard]] const KdTree& tree() const { return tree_; }
  [[nodiscard]] const std::vector<Matrix3>& covariances() const {
    return covariances_;
  }

 private:
  PointCloud cloud_;
  KdTree tree_;
  std::vector<Matrix3> covariances_;
};

/// Generalized-ICP: Gauss-Newton over the summed plane-to-plane Mahalanobis
/// residuals. Both clouds need at least 50 points.
RegistrationResult register_gicp(const PointCloud& local,
                                 const GicpTarget& prior,
                                 const Pose& initial_guess,
                                 const RegistrationConfig& config);

RegistrationResult register_gicp(const PointCloud& local,
                                 const PointCloud& prior,
                                 const Pose& initial_guess,
                                 const RegistrationConfig& config);

/// converged && fitness < fitness_threshold && translation < max_translation
bool validate_registration(const RegistrationResult& result,
                           const RegistrationConfig& config);

}  // namespace cloudiff
