#include "cloudiff/pose_graph.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace cloudiff {
namespace {

const PriorMeasurement* find_anchor(const std::vector<PriorMeasurement>& priors) {
  const PriorMeasurement* anchor = nullptr;
  for (const auto& m : priors) {
    if (anchor == nullptr || m.index < anchor->index) anchor = &m;
  }
  return anchor;
}

Matrix3 rotation_block(const Matrix6& info) { return info.topLeftCorner<3, 3>(); }
Matrix3 translation_block(const Matrix6& info) {
  return info.bottomRightCorner<3, 3>();
}

// One linearized factor: residual r, information W and Jacobian blocks w.r.t.
// up to two poses.
template <int Dim>
struct Linearized {
  Eigen::Matrix<double, Dim, 1> r;
  Eigen::Matrix<double, Dim, Dim> W;
  std::size_t a = 0, b = 0;
  Eigen::Matrix<double, Dim, 6> Ja;
  Eigen::Matrix<double, Dim, 6> Jb;
  bool two = false;
};

class NormalEquations {
 public:
  NormalEquations(std::size_t poses, std::size_t first_free)
      : first_free_(first_free),
        dim_(6 * (poses - first_free)),
        b_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim_))) {}

  template <int Dim>
  void add(const Linearized<Dim>& f) {
    cost_ += f.r.dot(f.W * f.r);
    add_block(f.a, f.a, f.Ja.transpose() * f.W * f.Ja, f.Ja.transpose() * f.W * f.r);
    if (f.two) {
      add_block(f.b, f.b, f.Jb.transpose() * f.W * f.Jb, f.Jb.transpose() * f.W * f.r);
      add_cross(f.a, f.b, f.Ja.transpose() * f.W * f.Jb);
    }
  }

  [[nodiscard]] double cost() const { return cost_; }
  [[nodiscard]] const Eigen::VectorXd& gradient() const { return b_; }
  [[nodiscard]] std::size_t dim() const { return dim_; }

  Eigen::SparseMatrix<double> matrix(double lambda) const {
    std::vector<Eigen::Triplet<double>> t = triplets_;
    if (lambda > 0.0) {
      // Marquardt scaling on the diagonal, plus a small absolute floor so
      // variables without any information stay solvable.
      std::vector<double> diag(dim_, 0.0);
      for (const auto& e : triplets_) {
        if (e.row() == e.col()) diag[static_cast<std::size_t>(e.row())] += e.value();
      }
      for (std::size_t i = 0; i < dim_; ++i) {
        t.emplace_back(static_cast<int>(i), static_cast<int>(i),
                       lambda * diag[i] + lambda * 1e-9);
      }
    }
    Eigen::SparseMatrix<double> H(static_cast<Eigen::Index>(dim_),
                                  static_cast<Eigen::Index>(dim_));
    H.setFromTriplets(t.begin(), t.end());
    return H;
  }

 private:
  std::optional<std::size_t> slot(std::size_t pose) const {
    if (pose < first_free_) return std::nullopt;
    return 6 * (pose - first_free_);
  }

  void add_block(std::size_t i, std::size_t j, const Matrix6& H, const Vector6& g) {
    const auto si = slot(i);
    const auto sj = slot(j);
    if (!si || !sj) return;
    push(*si, *sj, H);
    b_.segment<6>(static_cast<Eigen::Index>(*si)) += g;
  }

  void add_cross(std::size_t i, std::size_t j, const Matrix6& Hij) {
    const auto si = slot(i);
    const auto sj = slot(j);
    if (!si || !sj) return;
    push(*si, *sj, Hij);
    push(*sj, *si, Hij.transpose());
  }

  void push(std::size_t r0, std::size_t c0, const Matrix6& m) {
    for (int r = 0; r < 6; ++r) {
      for (int c = 0; c < 6; ++c) {
        if (m(r, c) != 0.0) {
          triplets_.emplace_back(static_cast<int>(r0 + r), static_cast<int>(c0 + c),
                                 m(r, c));
        }
      }
    }
  }

  std::size_t first_free_;
  std::size_t dim_;
  Eigen::VectorXd b_;
  double cost_ = 0.0;
  std::vector<Eigen::Triplet<double>> triplets_;
};

void check_indices(std::size_t n, const std::vector<OdometryMeasurement>& odometry,
                   const std::vector<PriorMeasurement>& priors) {
  for (const auto& o : odometry) {
    if (o.from >= n || o.to >= n) {
      throw std::invalid_argument("optimize: odometry index out of range");
    }
  }
  for (const auto& p : priors) {
    if (p.index >= n) {
      throw std::invalid_argument("optimize: prior index out of range");
    }
  }
}

NormalEquations linearize(const GraphState& X,
                          const std::vector<OdometryMeasurement>& odometry,
                          const std::vector<PriorMeasurement>& priors,
                          std::size_t first_free) {
  NormalEquations ne(X.size(), first_free);
  for (const auto& m : odometry) {
    Linearized<6> f;
    f.r = odometry_residual(X[m.from], X[m.to], m);
    f.W = m.information;
    const auto J = odometry_jacobians(X[m.from], X[m.to], m);
    f.a = m.from;
    f.b = m.to;
    f.Ja = J.d_from;
    f.Jb = J.d_to;
    f.two = true;
    ne.add(f);
  }
  const PriorMeasurement* anchor = find_anchor(priors);
  for (const auto& m : priors) {
    Linearized<3> pos;
    pos.r = position_residual(X[m.index], m);
    pos.W = translation_block(m.information);
    pos.a = m.index;
    pos.Ja.setZero();
    pos.Ja.rightCols<3>() = -Matrix3::Identity();
    ne.add(pos);

    if (m.index == anchor->index) continue;
    Linearized<3> rot;
    rot.r = relative_rotation_residual(X[anchor->index], X[m.index], *anchor, m);
    rot.W = rotation_block(m.information);
    const auto J = relative_rotation_jacobians(X[anchor->index], X[m.index], *anchor, m);
    rot.a = anchor->index;
    rot.b = m.index;
    rot.Ja.setZero();
    rot.Jb.setZero();
    rot.Ja.leftCols<3>() = J.d_anchor;
    rot.Jb.leftCols<3>() = J.d_current;
    rot.two = true;
    ne.add(rot);
  }
  return ne;
}

GraphState retract(const GraphState& X, const Eigen::VectorXd& delta,
                   std::size_t first_free) {
  GraphState out = X;
  for (std::size_t k = first_free; k < X.size(); ++k) {
    const auto s = static_cast<Eigen::Index>(6 * (k - first_free));
    const Point3 dtheta = delta.segment<3>(s);
    const Point3 dp = delta.segment<3>(s + 3);
    out[k].q = (X[k].q * so3::exp(dtheta)).normalized();
    out[k].t = X[k].t + dp;
  }
  return out;
}

}  // namespace

Point3 position_residual(const Pose& x_t, const PriorMeasurement& m) {
  return m.position - x_t.t;
}

Point3 relative_rotation_residual(const Pose& x_1, const Pose& x_t,
                                  const PriorMeasurement& m_1,
                                  const PriorMeasurement& m_t) {
  const Eigen::Quaterniond measured = m_1.orientation.conjugate() * m_t.orientation;
  const Eigen::Quaterniond predicted = x_1.q.conjugate() * x_t.q;
  return so3::log(predicted.conjugate() * measured);
}

RotationJacobians relative_rotation_jacobians(const Pose& x_1, const Pose& x_t,
                                              const PriorMeasurement& m_1,
                                              const PriorMeasurement& m_t) {
  const Matrix3 A =
      (m_1.orientation.conjugate() * m_t.orientation).toRotationMatrix();
  const Matrix3 E = x_t.rotation().transpose() * x_1.rotation() * A;
  const Point3 r = relative_rotation_residual(x_1, x_t, m_1, m_t);
  const Matrix3 Jinv = so3::right_jacobian_inverse(r);
  return {Jinv * A.transpose(), -Jinv * E.transpose()};
}

Vector6 odometry_residual(const Pose& x_a, const Pose& x_b,
                          const OdometryMeasurement& m) {
  Vector6 r;
  r.head<3>() = so3::log(m.relative.q.conjugate() * x_a.q.conjugate() * x_b.q);
  r.tail<3>() = x_a.q.conjugate() * (x_b.t - x_a.t) - m.relative.t;
  return r;
}

OdometryJacobians odometry_jacobians(const Pose& x_a, const Pose& x_b,
                                     const OdometryMeasurement& m) {
  const Matrix3 Ra = x_a.rotation();
  const Matrix3 Rb = x_b.rotation();
  const Vector6 r = odometry_residual(x_a, x_b, m);
  const Matrix3 Jinv = so3::right_jacobian_inverse(r.head<3>());

  OdometryJacobians J;
  J.d_from.setZero();
  J.d_to.setZero();
  J.d_from.topLeftCorner<3, 3>() = -Jinv * Rb.transpose() * Ra;
  J.d_to.topLeftCorner<3, 3>() = Jinv;
  J.d_from.bottomLeftCorner<3, 3>() = so3::hat(Ra.transpose() * (x_b.t - x_a.t));
  J.d_from.bottomRightCorner<3, 3>() = -Ra.transpose();
  J.d_to.bottomRightCorner<3, 3>() = Ra.transpose();
  return J;
}

double graph_cost(const GraphState& states,
                  const std::vector<OdometryMeasurement>& odometry,
                  const std::vector<PriorMeasurement>& priors) {
  check_indices(states.size(), odometry, priors);
  double cost = 0.0;
  for (const auto& m : odometry) {
    const Vector6 r = odometry_residual(states[m.from], states[m.to], m);
    cost += r.dot(m.information * r);
  }
  const PriorMeasurement* anchor = find_anchor(priors);
  for (const auto& m : priors) {
    const Point3 rp = position_residual(states[m.index], m);
    cost += rp.dot(translation_block(m.information) * rp);
    if (m.index == anchor->index) continue;
    const Point3 rr = relative_rotation_residual(states[anchor->index],
                                                 states[m.index], *anchor, m);
    cost += rr.dot(rotation_block(m.information) * rr);
  }
  return cost;
}

OptimizationResult optimize(const GraphState& initial,
                            const std::vector<OdometryMeasurement>& odometry,
                            const std::vector<PriorMeasurement>& priors,
                            const PoseGraphConfig& config) {
  if (initial.empty()) throw std::invalid_argument("optimize: empty graph");
  check_indices(initial.size(), odometry, priors);

  const bool fix_first =
      config.gauge == Gauge::kFixFirst ||
      (config.gauge == Gauge::kAuto && priors.empty());
  const std::size_t first_free = fix_first ? 1 : 0;

  OptimizationResult result;
  result.fixed_first = fix_first;
  if (const auto* a = find_anchor(priors)) result.anchor = a->index;
  result.states = initial;
  result.initial_cost = graph_cost(initial, odometry, priors);
  result.final_cost = result.initial_cost;
  if (first_free >= initial.size()) return result;

  // Observability check on the undamped system.
  {
    const NormalEquations ne = linearize(initial, odometry, priors, first_free);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(ne.matrix(0.0));
    bool deficient = ldlt.info() != Eigen::Success;
    if (!deficient) {
      const Eigen::VectorXd D = ldlt.vectorD();
      const double scale = D.cwiseAbs().maxCoeff();
      deficient = !(D.minCoeff() > 1e-12 * scale);
    }
    if (deficient) {
      throw RankDeficientError(
          "optimize: pose graph is rank deficient (no fixed gauge and the "
          "priors do not anchor every degree of freedom)");
    }
  }

  double lambda = config.initial_lambda;
  GraphState X = initial;
  double cost = result.initial_cost;
  for (int iter = 0; iter < config.max_iterations; ++iter) {
    result.iterations = iter + 1;
    const NormalEquations ne = linearize(X, odometry, priors, first_free);
    bool accepted = false;
    bool small_step = false;
    double decrease = 0.0;
    while (lambda < 1e16) {
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(ne.matrix(lambda));
      if (solver.info() != Eigen::Success) {
        lambda *= 10.0;
        continue;
      }
      const Eigen::VectorXd delta = -solver.solve(ne.gradient());
      const GraphState candidate = retract(X, delta, first_free);
      const double new_cost = graph_cost(candidate, odometry, priors);
      if (std::isfinite(new_cost) && new_cost <= cost) {
        decrease = cost - new_cost;
        small_step = delta.norm() < config.step_tolerance;
        X = candidate;
        cost = new_cost;
        lambda = std::max(lambda * 0.1, 1e-12);
        accepted = true;
        break;
      }
      if (delta.norm() < config.step_tolerance) {
        small_step = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted || small_step || decrease < config.function_tolerance) break;
  }
  result.states = X;
  result.final_cost = cost;
  return result;
}

GraphState integrate_odometry(const Pose& start,
                              const std::vector<OdometryMeasurement>& odometry,
                              std::size_t count) {
  GraphState out;
  out.reserve(count);
  out.push_back(start);
  for (const auto& m : odometry) {
    if (out.size() >= count) break;
    if (m.from != out.size() - 1 || m.to != out.size()) {
      throw std::invalid_argument("integrate_odometry: non-consecutive chain");
    }
    out.push_back(out.back() * m.relative);
  }
  if (out.size() != count) {
    throw std::invalid_argument("integrate_odometry: chain shorter than count");
  }
  return out;
}

}  // namespace cloudiff
