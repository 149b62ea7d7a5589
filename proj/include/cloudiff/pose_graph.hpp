#pragma once

#include "cloudiff/geometry.hpp"

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace cloudiff {

// Per-keyframe state x_k = (p_k, q_k).
using GraphState = std::vector<Pose>;

// Information matrices in this module are ordered [rotation; translation],
// matching RegistrationResult::hessian.

// Prior localization of keyframe `index`: a registration result against the
// prior map. `information` is the registration normal matrix.
struct PriorMeasurement {
  std::size_t index = 0;
  Point3 position = Point3::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
  Matrix6 information = Matrix6::Identity();
};

// Relative pose from keyframe `from` to keyframe `to`, expressed in `from`.
struct OdometryMeasurement {
  std::size_t from = 0;
  std::size_t to = 0;
  Pose relative;
  Matrix6 information = Matrix6::Identity();
};

/// Global position factor residual: p_t^p - p_t.
Point3 position_residual(const Pose& x_t, const PriorMeasurement& m);

/// Relative-rotation factor residual between the anchor keyframe (first
/// accepted prior) and keyframe t:
///   Log( ((q_1)^-1 q_t)^-1 * ((q_1^p)^-1 q_t^p) )
Point3 relative_rotation_residual(const Pose& x_1, const Pose& x_t,
                                  const PriorMeasurement& m_1,
                                  const PriorMeasurement& m_t);

// Jacobians use the state perturbation q <- q * Exp(d_theta), p <- p + d_p,
// with the local variable ordered [d_theta; d_p].
struct RotationJacobians {
  Matrix3 d_anchor;   // w.r.t. d_theta of x_1
  Matrix3 d_current;  // w.r.t. d_theta of x_t
};
RotationJacobians relative_rotation_jacobians(const Pose& x_1, const Pose& x_t,
                                              const PriorMeasurement& m_1,
                                              const PriorMeasurement& m_t);

/// Odometry residual [Log(dq^-1 q_a^-1 q_b); R_a^T (p_b - p_a) - dp].
Vector6 odometry_residual(const Pose& x_a, const Pose& x_b,
                          const OdometryMeasurement& m);

struct OdometryJacobians {
  Matrix6 d_from;  // w.r.t. [d_theta; d_p] of x_a
  Matrix6 d_to;    // w.r.t. [d_theta; d_p] of x_b
};
OdometryJacobians odometry_jacobians(const Pose& x_a, const Pose& x_b,
                                     const OdometryMeasurement& m);

enum class Gauge {
  kAuto,       // fix the first pose only when there are no priors
  kFixFirst,   // always hold x_0 at its initial value
  kPriorsOnly  // never fix anything; priors must anchor the graph
};

struct PoseGraphConfig {
  int max_iterations = 100;
  double function_tolerance = 1e-9;  // absolute cost decrease
  double step_tolerance = 1e-9;      // norm of the accepted increment
  double initial_lambda = 1e-4;
  Gauge gauge = Gauge::kAuto;
};

struct OptimizationResult {
  GraphState states;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  std::size_t anchor = 0;  // keyframe used by the relative-rotation factors
  bool fixed_first = false;
};

/// Thrown when the graph has an unobservable direction.
class RankDeficientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Total weighted squared error sum r^T Omega r over all factors.
double graph_cost(const GraphState& states,
                  const std::vector<OdometryMeasurement>& odometry,
                  const std::vector<PriorMeasurement>& priors);

/// Levenberg-Marquardt over all odometry, position and relative-rotation
/// factors. The relative-rotation factors anchor to the earliest prior.
OptimizationResult optimize(const GraphState& initial,
                            const std::vector<OdometryMeasurement>& odometry,
                            const std::vector<PriorMeasurement>& priors,
                            const PoseGraphConfig& config = {});

/// Chain odometry from `start` (x_0). Measurements must be consecutive.
GraphState integrate_odometry(const Pose& start,
                              const std::vector<OdometryMeasurement>& odometry,
                              std::size_t count);

}  // namespace cloudiff
