#include "cloudiff/synthworld.hpp"

#include "cloudiff/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

namespace cloudiff::synth {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Offset used to start the reflected ray off the mirror plane.
constexpr double kBounceEps = 1e-9;
// Horizon over which the integrated velocity error is assumed to have grown
// when turning accelerometer noise into a per-keyframe translation sigma.
constexpr double kVelocityErrorHorizon = 10.0;  // s

// Ray vs. axis-aligned box (slab test). Returns the entry parameter when it
// is positive, or the exit parameter when the origin is inside.
std::optional<double> ray_box(const Point3& o, const Point3& d, const Point3& lo,
                              const Point3& hi) {
  double t_near = -kInf;
  double t_far = kInf;
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (o[a] < lo[a] || o[a] > hi[a]) return std::nullopt;
      continue;
    }
    double t1 = (lo[a] - o[a]) / d[a];
    double t2 = (hi[a] - o[a]) / d[a];
    if (t1 > t2) std::swap(t1, t2);
    t_near = std::max(t_near, t1);
    t_far = std::min(t_far, t2);
  }
  if (t_near > t_far || t_far <= 0.0) return std::nullopt;
  return t_near > 0.0 ? t_near : t_far;
}

std::optional<double> ray_ground(const Scene& s, const Point3& o, const Point3& d) {
  if (!s.has_ground || !(d.z() < 0.0)) return std::nullopt;
  const double t = (s.bounds.min.z() - o.z()) / d.z();
  if (!(t > 0.0)) return std::nullopt;
  const Point3 p = o + t * d;
  if (p.x() < s.bounds.min.x() || p.x() > s.bounds.max.x() ||
      p.y() < s.bounds.min.y() || p.y() > s.bounds.max.y()) {
    return std::nullopt;
  }
  return t;
}

std::optional<double> ray_mirror(const MirrorPatch& m, const Point3& o,
                                 const Point3& d) {
  if (d[m.axis] == 0.0) return std::nullopt;
  const double t = (m.offset - o[m.axis]) / d[m.axis];
  if (!(t > 0.0)) return std::nullopt;
  const Point3 p = o + t * d;
  int j = 0;
  for (int a = 0; a < 3; ++a) {
    if (a == m.axis) continue;
    if (p[a] < m.lo[j] || p[a] > m.hi[j]) return std::nullopt;
    ++j;
  }
  return t;
}

std::optional<double> nearest_solid(const Scene& s, const Point3& o, const Point3& d) {
  std::optional<double> best = ray_ground(s, o, d);
  for (const auto& b : s.boxes) {
    const auto t = ray_box(o, d, b.min, b.max);
    if (t && (!best || *t < *best)) best = t;
  }
  return best;
}

struct Face {
  Point3 origin;
  Point3 edge_u;
  Point3 edge_v;
  [[nodiscard]] double area() const { return edge_u.cross(edge_v).norm(); }
};

std::vector<Face> box_faces(const Box& b, bool include_bottom) {
  const Point3 lo = b.min;
  const Point3 e = b.max - b.min;
  const Point3 ex(e.x(), 0, 0), ey(0, e.y(), 0), ez(0, 0, e.z());
  std::vector<Face> faces = {
      {lo + ez, ex, ey},  // top
      {lo, ex, ez},       // y = min
      {lo + ey, ex, ez},  // y = max
      {lo, ey, ez},       // x = min
      {lo + ex, ey, ez},  // x = max
  };
  if (include_bottom) faces.push_back({lo, ex, ey});
  return faces;
}

bool inside_footprint(const Scene& s, double x, double y) {
  for (const auto& b : s.boxes) {
    if (b.min.z() > s.bounds.min.z()) continue;  // lifted box: ground visible
    if (x > b.min.x() && x < b.max.x() && y > b.min.y() && y < b.max.y()) {
      return true;
    }
  }
  return false;
}

double footprint_area(const Scene& s) {
  double a = 0.0;
  for (const auto& b : s.boxes) {
    if (b.min.z() <= s.bounds.min.z()) a += (b.max.x() - b.min.x()) * (b.max.y() - b.min.y());
  }
  return a;
}

DepthImage render_rows(const Scene& scene, const Pose& pose,
                       const CameraIntrinsics& K, int threads, bool parallel) {
  K.validate();
  DepthImage img(K.width, K.height);
  const Matrix3 R = pose.rotation();
  auto row = [&](int v) {
    for (int u = 0; u < K.width; ++u) {
      const Point3 dir = R * Point3((u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0);
      if (const auto t = intersect(scene, pose.t, dir)) img.at(u, v) = *t;
    }
  };
  if (parallel) {
#pragma omp parallel for schedule(static) \
    num_threads(kernels::resolve_threads(threads))
    for (int v = 0; v < K.height; ++v) row(v);
  } else {
    for (int v = 0; v < K.height; ++v) row(v);
  }
  return img;
}

double yaw_of(const Eigen::Vector2d& tangent) {
  return std::atan2(tangent.y(), tangent.x());
}

}  // namespace

double Box::distance(const Point3& p) const {
  const Point3 d = (min - p).cwiseMax(p - max).cwiseMax(Point3::Zero());
  return d.norm();
}

void Scene::validate() const {
  if (!(bounds.max.array() > bounds.min.array()).all()) {
    throw std::invalid_argument("Scene '" + name + "': degenerate bounds");
  }
  for (const auto& b : boxes) {
    if (!(b.volume() > 0.0) || !(b.max.array() > b.min.array()).all()) {
      throw std::invalid_argument("Scene '" + name + "': box '" + b.name +
                                  "' has no volume");
    }
    if (!bounds.contains(b.min) || !bounds.contains(b.max)) {
      throw std::invalid_argument("Scene '" + name + "': box '" + b.name +
                                  "' outside bounds");
    }
  }
  for (const auto& m : mirrors) {
    if (m.axis < 0 || m.axis > 2) {
      throw std::invalid_argument("Scene '" + name + "': bad mirror axis");
    }
  }
}

const Box* Scene::find(const std::string& box_name) const {
  for (const auto& b : boxes) {
    if (b.name == box_name) return &b;
  }
  return nullptr;
}

Scene apply_edit(const Scene& scene, const SceneEdit& edit) {
  Scene out = scene;
  for (const auto& name : edit.remove) {
    const auto it = std::find_if(out.boxes.begin(), out.boxes.end(),
                                 [&](const Box& b) { return b.name == name; });
    if (it == out.boxes.end()) {
      throw std::invalid_argument("scene edit: no box named '" + name + "'");
    }
    out.boxes.erase(it);
  }
  for (const auto& b : edit.add) out.boxes.push_back(b);
  out.validate();
  return out;
}

ScenePair make_scene_pair(const Scene& original, const SceneEdit& edit) {
  original.validate();
  ScenePair pair;
  pair.original = original;
  pair.changed = apply_edit(original, edit);
  pair.changed.name = original.name + "_changed";
  pair.manifest = edit;
  return pair;
}

SceneEdit inverse_edit(const ScenePair& pair) {
  SceneEdit inv;
  for (const auto& b : pair.manifest.add) inv.remove.push_back(b.name);
  for (const auto& name : pair.manifest.remove) {
    const Box* b = pair.original.find(name);
    if (b == nullptr) throw std::invalid_argument("inverse_edit: unknown box " + name);
    inv.add.push_back(*b);
  }
  return inv;
}

Scene default_scene() {
  Scene s;
  s.name = "S1";
  s.bounds = {Point3(0, 0, 0), Point3(100, 100, 20)};
  auto box = [](std::string n, double x0, double x1, double y0, double y1, double h) {
    return Box{std::move(n), Point3(x0, y0, 0.0), Point3(x1, y1, h)};
  };
  s.boxes = {
      box("B0", 30, 36, 40, 48, 10), box("B1", 30, 37, 52, 60, 14),
      box("B2", 44, 52, 60, 66, 12), box("B3", 57, 65, 63, 69, 8),
      box("B4", 67, 73, 46, 52, 15), box("B5", 65, 71, 54, 60, 9),
      box("B6", 42, 49, 33, 39, 11), box("B7", 54, 62, 32, 38, 13),
      box("B8", 47, 53, 49, 51, 6),  box("B9", 20, 28, 70, 78, 16),
  };
  return s;
}

SceneEdit default_edit() {
  SceneEdit e;
  e.remove = {"B2"};
  e.add = {Box{"N0", Point3(66, 33, 0), Point3(72, 39, 12)}};
  return e;
}

PointCloud sample_surface(const Scene& scene, double density, std::uint64_t seed) {
  if (!(density > 0.0)) throw std::invalid_argument("sample_surface: density <= 0");
  scene.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  PointCloud out;

  for (const auto& b : scene.boxes) {
    const bool bottom = !scene.has_ground || b.min.z() > scene.bounds.min.z();
    for (const Face& f : box_faces(b, bottom)) {
      const auto n = static_cast<std::size_t>(std::llround(f.area() * density));
      for (std::size_t i = 0; i < n; ++i) {
        out.points.push_back(f.origin + uni(rng) * f.edge_u + uni(rng) * f.edge_v);
      }
    }
  }

  if (scene.has_ground) {
    const Point3& lo = scene.bounds.min;
    const Point3& hi = scene.bounds.max;
    const double area =
        (hi.x() - lo.x()) * (hi.y() - lo.y()) - footprint_area(scene);
    const auto n = static_cast<std::size_t>(std::llround(std::max(0.0, area) * density));
    std::size_t placed = 0;
    while (placed < n) {
      const double x = lo.x() + uni(rng) * (hi.x() - lo.x());
      const double y = lo.y() + uni(rng) * (hi.y() - lo.y());
      if (inside_footprint(scene, x, y)) continue;
      out.points.emplace_back(x, y, lo.z());
      ++placed;
    }
  }
  return out;
}

std::optional<double> intersect(const Scene& scene, const Point3& origin,
                                const Point3& dir) {
  const auto solid = nearest_solid(scene, origin, dir);
  const MirrorPatch* mirror = nullptr;
  double t_mirror = kInf;
  for (const auto& m : scene.mirrors) {
    const auto t = ray_mirror(m, origin, dir);
    if (t && *t < t_mirror) {
      t_mirror = *t;
      mirror = &m;
    }
  }
  if (mirror == nullptr || (solid && *solid < t_mirror)) return solid;

  // Unfold one bounce: the virtual point lies behind the mirror at the total
  // path length along the original direction.
  Point3 reflected = dir;
  reflected[mirror->axis] = -reflected[mirror->axis];
  Point3 start = origin + t_mirror * dir;
  start[mirror->axis] += (reflected[mirror->axis] > 0.0 ? 1.0 : -1.0) * kBounceEps;
  const auto second = nearest_solid(scene, start, reflected);
  if (!second) return std::nullopt;
  return t_mirror + *second;
}

DepthImage render_depth(const Scene& scene, const Pose& pose,
                        const CameraIntrinsics& intrinsics, int threads) {
  return render_rows(scene, pose, intrinsics, threads, true);
}

namespace serial {
DepthImage render_depth(const Scene& scene, const Pose& pose,
                        const CameraIntrinsics& intrinsics) {
  return render_rows(scene, pose, intrinsics, 1, false);
}
}  // namespace serial

Eigen::Quaterniond camera_orientation(double yaw, double pitch) {
  const Point3 forward(std::cos(yaw) * std::cos(pitch),
                       std::sin(yaw) * std::cos(pitch), -std::sin(pitch));
  const Point3 right(std::sin(yaw), -std::cos(yaw), 0.0);
  const Point3 down = forward.cross(right);
  Matrix3 R;
  R.col(0) = right;
  R.col(1) = down;
  R.col(2) = forward;
  return Eigen::Quaterniond(R).normalized();
}

Trajectory generate_trajectory(const Scene& scene, const TrajectorySpec& spec) {
  const double r = spec.corner_radius;
  const double sx = spec.length - 2.0 * r;
  const double sy = spec.width - 2.0 * r;
  if (!(spec.length > 0.0) || !(spec.width > 0.0) || r < 0.0 || sx < 0.0 ||
      sy < 0.0) {
    throw std::invalid_argument("generate_trajectory: degenerate loop");
  }
  const double perimeter = 2.0 * (sx + sy) + 2.0 * std::numbers::pi * r;
  if (!(perimeter > 0.0) || !(spec.speed > 0.0) || !(spec.rate > 0.0)) {
    throw std::invalid_argument("generate_trajectory: zero-length path");
  }

  // Counter-clockwise, starting mid-way along the south edge heading +x.
  struct Sample {
    Eigen::Vector2d pos;
    Eigen::Vector2d tangent;
  };
  const Eigen::Vector2d c = spec.center;
  const double hx = 0.5 * sx;
  const double hy = 0.5 * sy;
  auto at = [&](double s) -> Sample {
    s = std::fmod(s, perimeter);
    const double arc = 0.5 * std::numbers::pi * r;
    // Segment list: half south edge, SE corner, east edge, NE corner, north
    // edge, NW corner, west edge, SW corner, half south edge.
    struct Seg {
      double len;
      Eigen::Vector2d start, dir;  // straight
      Eigen::Vector2d pivot;
      double a0;  // corner start angle
      bool corner;
    };
    const Seg segs[] = {
        {hx, c + Eigen::Vector2d(0, -hy - r), {1, 0}, {}, 0, false},
        {arc, {}, {}, c + Eigen::Vector2d(hx, -hy), -0.5 * std::numbers::pi, true},
        {sy, c + Eigen::Vector2d(hx + r, -hy), {0, 1}, {}, 0, false},
        {arc, {}, {}, c + Eigen::Vector2d(hx, hy), 0.0, true},
        {sx, c + Eigen::Vector2d(hx, hy + r), {-1, 0}, {}, 0, false},
        {arc, {}, {}, c + Eigen::Vector2d(-hx, hy), 0.5 * std::numbers::pi, true},
        {sy, c + Eigen::Vector2d(-hx - r, hy), {0, -1}, {}, 0, false},
        {arc, {}, {}, c + Eigen::Vector2d(-hx, -hy), std::numbers::pi, true},
        {hx, c + Eigen::Vector2d(-hx, -hy - r), {1, 0}, {}, 0, false},
    };
    for (const auto& seg : segs) {
      if (s <= seg.len || &seg == &segs[8]) {
        if (!seg.corner) return {seg.start + s * seg.dir, seg.dir};
        const double ang = seg.a0 + (r > 0.0 ? s / r : 0.0);
        return {seg.pivot + r * Eigen::Vector2d(std::cos(ang), std::sin(ang)),
                Eigen::Vector2d(-std::sin(ang), std::cos(ang))};
      }
      s -= seg.len;
    }
    return {};  // unreachable
  };

  Trajectory traj;
  traj.height = spec.height;
  traj.label = scene.name + "_h" + std::to_string(static_cast<int>(std::lround(spec.height)));
  const double step = spec.speed / spec.rate;
  const auto count = static_cast<std::size_t>(std::floor(perimeter / step));
  if (count < 2) throw std::invalid_argument("generate_trajectory: path too short");
  const double z = scene.bounds.min.z() + spec.height;
  for (std::size_t k = 0; k < count; ++k) {
    const Sample smp = at(static_cast<double>(k) * step);
    const Point3 p(smp.pos.x(), smp.pos.y(), z);
    if (!scene.bounds.contains(p)) {
      throw std::invalid_argument("generate_trajectory: path leaves the scene");
    }
    for (const auto& b : scene.boxes) {
      if (b.distance(p) < spec.min_clearance) {
        throw std::invalid_argument("generate_trajectory: path collides with box '" +
                                    b.name + "'");
      }
    }
    traj.poses.push_back({static_cast<double>(k) / spec.rate,
                          Pose(p, camera_orientation(yaw_of(smp.tangent), spec.pitch))});
  }
  return traj;
}

void NoiseSpec::validate() const {
  if (gyro < 0 || accel < 0 || gyro_bias_walk < 0 || accel_bias_walk < 0 ||
      image < 0 || dark_empty_rate < 0 || dark_empty_rate > 1) {
    throw std::invalid_argument("NoiseSpec: parameters must be non-negative");
  }
}

NoiseSpec NoiseSpec::none(std::uint64_t seed) {
  NoiseSpec n;
  n.seed = seed;
  return n;
}

NoiseSpec NoiseSpec::small(std::uint64_t seed) {
  return {4.0e-4, 3.0e-3, 4.0e-5, 3.0e-4, 0.02, 0.0, seed};
}

NoiseSpec NoiseSpec::big(std::uint64_t seed) {
  return {4.0e-3, 3.0e-2, 4.0e-4, 3.0e-3, 0.04, 0.0, seed};
}

namespace {

Matrix6 odometry_information(const NoiseSpec& n, double dt) {
  const double sigma_rot =
      std::max(1e-4, std::sqrt(n.gyro * n.gyro * dt +
                               n.gyro_bias_walk * n.gyro_bias_walk * dt * dt * dt));
  const double sigma_trans =
      std::max(1e-3, n.accel * dt * std::sqrt(kVelocityErrorHorizon));
  Vector6 diag;
  diag << Point3::Constant(1.0 / (sigma_rot * sigma_rot)),
      Point3::Constant(1.0 / (sigma_trans * sigma_trans));
  return diag.asDiagonal();
}

}  // namespace

std::vector<OdometryMeasurement> exact_odometry(const Trajectory& trajectory,
                                                const NoiseSpec& noise) {
  std::vector<OdometryMeasurement> out;
  const auto& P = trajectory.poses;
  for (std::size_t k = 1; k < P.size(); ++k) {
    OdometryMeasurement m;
    m.from = k - 1;
    m.to = k;
    m.relative = P[k - 1].pose.inverse() * P[k].pose;
    m.information = odometry_information(noise, P[k].timestamp - P[k - 1].timestamp);
    out.push_back(m);
  }
  return out;
}

CorruptedData corrupt(const Trajectory& trajectory,
                      std::span<const DepthImage> depths, const NoiseSpec& noise) {
  noise.validate();
  std::mt19937_64 rng(noise.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  auto gvec = [&] { return Point3(gauss(rng), gauss(rng), gauss(rng)); };

  CorruptedData out;
  out.odometry = exact_odometry(trajectory, noise);
  Point3 gyro_bias = Point3::Zero();
  Point3 accel_bias = Point3::Zero();
  Point3 velocity_error = Point3::Zero();
  const auto& P = trajectory.poses;
  for (std::size_t k = 1; k < P.size(); ++k) {
    const double dt = P[k].timestamp - P[k - 1].timestamp;
    const double sdt = std::sqrt(dt);
    gyro_bias += noise.gyro_bias_walk * sdt * gvec();
    accel_bias += noise.accel_bias_walk * sdt * gvec();
    const Point3 dtheta = gyro_bias * dt + noise.gyro * sdt * gvec();
    velocity_error += accel_bias * dt + noise.accel * sdt * gvec();
    const Point3 dp = velocity_error * dt;
    auto& m = out.odometry[k - 1];
    m.relative = m.relative * Pose(dp, so3::exp(dtheta));
  }

  out.depths.reserve(depths.size());
  for (const auto& img : depths) {
    DepthImage noisy = img;
    for (double& d : noisy.depth) {
      if (!(d > 0.0)) continue;
      const double g = gauss(rng);
      const double e = uni(rng);
      if (noise.dark_empty_rate > 0.0 && e < noise.dark_empty_rate) {
        d = DepthImage::kEmpty;
        continue;
      }
      const double v = d + noise.image * d * g;
      d = v > 0.0 ? v : DepthImage::kEmpty;
    }
    out.depths.push_back(std::move(noisy));
  }
  return out;
}

std::vector<Keyframe> make_keyframes(const Trajectory& trajectory,
                                     std::span<const DepthImage> depths,
                                     const CameraIntrinsics& intrinsics) {
  if (depths.size() != trajectory.poses.size()) {
    throw std::invalid_argument("make_keyframes: pose/depth count mismatch");
  }
  std::vector<Keyframe> out(depths.size());
  for (std::size_t k = 0; k < depths.size(); ++k) {
    out[k].id = static_cast<std::int64_t>(k);
    out[k].timestamp = trajectory.poses[k].timestamp;
    out[k].pose = trajectory.poses[k].pose;
    out[k].depth = depths[k];
    out[k].intrinsics = intrinsics;
  }
  return out;
}

CameraIntrinsics default_intrinsics() {
  return CameraIntrinsics::from_fov(256, 144, 0.5 * std::numbers::pi);
}

}  // namespace cloudiff::synth
