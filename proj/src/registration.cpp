#include "cloudiff/registration.hpp"

#include "cloudiff/kernels.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cloudiff {
namespace {

constexpr std::size_t kMinPoints = 50;
constexpr double kMaxCondition = 1e12;
// Fixed reduction granularity: partial sums are formed per chunk and added in
// chunk order, so the result does not depend on the thread count.
constexpr std::size_t kChunk = 256;

struct Normals {
  Matrix6 H = Matrix6::Zero();
  Vector6 g = Vector6::Zero();
  double cost = 0.0;
  std::size_t count = 0;

  void add(const Normals& o) {
    H += o.H;
    g += o.g;
    cost += o.cost;
    count += o.count;
  }
};

Normals accumulate(const PointCloud& local,
                   const std::vector<Matrix3>& local_cov,
                   const GicpTarget& target, const Pose& T,
                   double max_corr_dist, int threads) {
  const Matrix3 R = T.rotation();
  const double max_d2 = max_corr_dist * max_corr_dist;
  const std::size_t n = local.size();
  const auto chunks = static_cast<std::ptrdiff_t>((n + kChunk - 1) / kChunk);
  std::vector<Normals> partial(static_cast<std::size_t>(chunks));

#pragma omp parallel for schedule(static) \
    num_threads(kernels::resolve_threads(threads))
  for (std::ptrdiff_t c = 0; c < chunks; ++c) {
    Normals acc;
    const std::size_t end = std::min(n, (static_cast<std::size_t>(c) + 1) * kChunk);
    for (std::size_t i = static_cast<std::size_t>(c) * kChunk; i < end; ++i) {
      const Point3 ra = R * local.points[i];
      const Point3 x = ra + T.t;
      const auto nn = target.tree().nearest(x);
      if (nn.squared_distance > max_d2) continue;
      const Point3 d = target.cloud().points[nn.index] - x;
      const Matrix3 C =
          target.covariances()[nn.index] + R * local_cov[i] * R.transpose();
      const Matrix3 M = C.inverse();
      Eigen::Matrix<double, 3, 6> J;
      J.leftCols<3>() = so3::hat(ra);
      J.rightCols<3>() = -Matrix3::Identity();
      const Eigen::Matrix<double, 6, 3> JtM = J.transpose() * M;
      acc.H.noalias() += JtM * J;
      acc.g.noalias() += JtM * d;
      acc.cost += d.dot(M * d);
      ++acc.count;
    }
    partial[static_cast<std::size_t>(c)] = acc;
  }

  Normals total;
  for (const auto& p : partial) total.add(p);
  return total;
}

double condition_number(const Matrix6& H) {
  Eigen::SelfAdjointEigenSolver<Matrix6> es(H, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

double mean_nn_distance(const PointCloud& local, const KdTree& tree,
                        const Pose& T, int threads) {
  const auto d =
      kernels::nearest_distances(transform_cloud(local, T), tree, threads);
  double sum = 0.0;
  for (double v : d) sum += v;  // fixed order
  return d.empty() ? 0.0 : sum / static_cast<double>(d.size());
}

}  // namespace

void RegistrationConfig::validate() const {
  if (max_iterations <= 0 || !(translation_epsilon > 0.0) ||
      !(rotation_epsilon > 0.0) || !(correspondence_distance > 0.0) ||
      !(fitness_threshold > 0.0) || !(max_translation > 0.0)) {
    throw std::invalid_argument(
        "RegistrationConfig: all thresholds must be positive");
  }
  if (knn_for_covariance < 4) {
    throw std::invalid_argument("RegistrationConfig: knn_for_covariance < 4");
  }
  if (thread_count < 0) {
    throw std::invalid_argument("RegistrationConfig: negative thread_count");
  }
}

Matrix3 neighborhood_covariance(const PointCloud& cloud, const KdTree& tree,
                                std::size_t i, int k) {
  const auto nbrs = tree.knn(cloud.points[i], static_cast<std::size_t>(k));
  Point3 mean = Point3::Zero();
  for (const auto& nb : nbrs) mean += tree.point(nb.index);
  mean /= static_cast<double>(nbrs.size());
  Matrix3 cov = Matrix3::Zero();
  for (const auto& nb : nbrs) {
    const Point3 d = tree.point(nb.index) - mean;
    cov.noalias() += d * d.transpose();
  }
  return cov / static_cast<double>(nbrs.size());
}

Matrix3 regularize_plane(const Matrix3& cov, double eps) {
  Eigen::SelfAdjointEigenSolver<Matrix3> es(cov);
  const Matrix3& V = es.eigenvectors();  // ascending eigenvalues
  const Eigen::Vector3d values(eps, 1.0, 1.0);
  return V * values.asDiagonal() * V.transpose();
}

std::vector<Matrix3> estimate_point_covariances(const PointCloud& cloud, int k,
                                                int threads) {
  if (k < 1 || cloud.size() < static_cast<std::size_t>(k)) {
    throw std::invalid_argument(
        "estimate_point_covariances: cloud has fewer than k points");
  }
  const KdTree tree(cloud);
  std::vector<Matrix3> out(cloud.size());
  const auto n = static_cast<std::ptrdiff_t>(cloud.size());
#pragma omp parallel for schedule(static) \
    num_threads(kernels::resolve_threads(threads))
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[i] = regularize_plane(
        neighborhood_covariance(cloud, tree, static_cast<std::size_t>(i), k));
  }
  return out;
}

GicpTarget::GicpTarget(PointCloud cloud, int k, int threads)
    : cloud_(std::move(cloud)),
      tree_(cloud_),
      covariances_(estimate_point_covariances(cloud_, k, threads)) {}

RegistrationResult register_gicp(const PointCloud& local,
                                 const GicpTarget& prior,
                                 const Pose& initial_guess,
                                 const RegistrationConfig& config) {
  config.validate();
  if (local.size() < kMinPoints || prior.cloud().size() < kMinPoints) {
    throw std::invalid_argument("register_gicp: clouds need >= 50 points");
  }
  if (!initial_guess.is_finite()) {
    throw std::invalid_argument("register_gicp: non-finite initial guess");
  }
  require_finite(local);

  const int threads = config.thread_count;
  const auto local_cov =
      estimate_point_covariances(local, config.knn_for_covariance, threads);

  RegistrationResult result;
  Pose T = initial_guess;
  bool degenerate = false;
  for (int iter = 0; iter < config.max_iterations; ++iter) {
    const Normals ne = accumulate(local, local_cov, prior, T,
                                  config.correspondence_distance, threads);
    result.iterations = iter + 1;
    if (ne.count < 6 || condition_number(ne.H) > kMaxCondition) {
      degenerate = true;
      break;
    }
    const Vector6 delta = -ne.H.ldlt().solve(ne.g);
    if (!delta.allFinite()) {
      degenerate = true;
      break;
    }
    T.q = (so3::exp(delta.head<3>()) * T.q).normalized();
    T.t += delta.tail<3>();
    if (delta.head<3>().norm() < config.rotation_epsilon &&
        delta.tail<3>().norm() < config.translation_epsilon) {
      result.converged = true;
      break;
    }
  }

  result.transform = T;
  result.translation_length = (T.t - initial_guess.t).norm();
  result.fitness = mean_nn_distance(local, prior.tree(), T, threads);

  if (!degenerate) {
    const Normals final_ne = accumulate(
        local, local_cov, prior, T, config.correspondence_distance, threads);
    result.correspondences = final_ne.count;
    if (final_ne.count >= 6 && condition_number(final_ne.H) <= kMaxCondition) {
      result.hessian = final_ne.H;
      const Matrix6 cov = final_ne.H.ldlt().solve(Matrix6::Identity());
      result.covariance = 0.5 * (cov + cov.transpose());
      result.has_covariance = true;
    } else {
      result.converged = false;
    }
  } else {
    result.converged = false;
  }
  result.accepted = validate_registration(result, config);
  return result;
}

RegistrationResult register_gicp(const PointCloud& local,
                                 const PointCloud& prior,
                                 const Pose& initial_guess,
                                 const RegistrationConfig& config) {
  config.validate();
  if (prior.size() < kMinPoints) {
    throw std::invalid_argument("register_gicp: clouds need >= 50 points");
  }
  const GicpTarget target(prior, config.knn_for_covariance,
                          config.thread_count);
  return register_gicp(local, target, initial_guess, config);
}

bool validate_registration(const RegistrationResult& result,
                           const RegistrationConfig& config) {
  return result.converged && result.fitness < config.fitness_threshold &&
         result.translation_length < config.max_translation;
}

}  // namespace cloudiff
