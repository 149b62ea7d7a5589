#include "cloudiff/app/pipeline.hpp"

#include "cloudiff/synthworld.hpp"

#include <cmath>
#include <numbers>

namespace cloudiff::app {
namespace {

namespace fs = std::filesystem;

constexpr double kMapPadding = 2.0;  // m

// Seed streams derived from the run seed so that each consumer draws from
// its own generator.
constexpr std::uint64_t kPriorStream = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kChangedStream = 0xbf58476d1ce4e5b9ULL;

synth::Scene scene_for(const RunConfig& cfg) {
  synth::Scene s = synth::default_scene();
  if (cfg.scene == "mirror") {
    // Reflective west facade of B4, just in front of the wall.
    s.name = "S1_mirror";
    s.mirrors.push_back({0, 66.99, Eigen::Vector2d(46.0, 0.0), Eigen::Vector2d(52.0, 15.0)});
  } else if (cfg.scene == "dark") {
    s.name = "S1_dark";
  }
  return s;
}

}  // namespace

std::vector<double> Dataset::timestamps() const {
  std::vector<double> t;
  t.reserve(ground_truth.size());
  for (const auto& p : ground_truth) t.push_back(p.timestamp);
  return t;
}

GraphState Dataset::true_poses() const {
  GraphState out;
  out.reserve(ground_truth.size());
  for (const auto& p : ground_truth) out.push_back(p.pose);
  return out;
}

Bounds Dataset::map_bounds() const {
  const Bounds& b = meta.scenes.original.bounds;
  return {b.min - Point3::Constant(kMapPadding), b.max + Point3::Constant(kMapPadding)};
}

std::vector<Keyframe> Dataset::keyframes(std::span<const DepthImage> imgs,
                                         std::span<const Pose> poses) const {
  if (imgs.size() != size() || poses.size() != size()) {
    throw std::invalid_argument("keyframes: depth/pose count does not match the dataset");
  }
  std::vector<Keyframe> out(size());
  for (std::size_t k = 0; k < size(); ++k) {
    out[k].id = static_cast<std::int64_t>(k);
    out[k].timestamp = ground_truth[k].timestamp;
    out[k].pose = poses[k];
    out[k].depth = imgs[k];
    out[k].intrinsics = meta.intrinsics;
  }
  return out;
}

Dataset synthesize(const RunConfig& cfg) {
  Dataset d;
  const synth::Scene original = scene_for(cfg);
  const synth::SceneEdit edit =
      cfg.scene == "unchanged" ? synth::SceneEdit{} : synth::default_edit();
  d.meta.scenes = synth::make_scene_pair(original, edit);
  d.meta.intrinsics = CameraIntrinsics::from_fov(cfg.image_width, cfg.image_height,
                                                 cfg.hfov_deg * std::numbers::pi / 180.0);
  d.meta.noise = cfg.noise_spec();
  d.meta.noise_label = cfg.noise;
  d.meta.surface_density = cfg.surface_density;
  d.meta.seed = cfg.seed;

  synth::TrajectorySpec spec;
  spec.height = cfg.flight_height;
  spec.speed = cfg.speed;
  spec.length = cfg.loop_length;
  spec.width = cfg.loop_width;
  const synth::Scene& world = d.meta.scenes.changed;
  const synth::Trajectory traj = synth::generate_trajectory(world, spec);
  d.meta.trajectory_label = original.name + "_h" +
                            std::to_string(static_cast<int>(std::lround(cfg.flight_height)));
  d.ground_truth = traj.poses;

  d.prior = synth::sample_surface(original, cfg.surface_density, cfg.seed ^ kPriorStream);
  d.changed = synth::sample_surface(world, cfg.surface_density, cfg.seed ^ kChangedStream);

  std::vector<DepthImage> clean;
  clean.reserve(traj.poses.size());
  for (const auto& sp : traj.poses) {
    clean.push_back(synth::render_depth(world, sp.pose, d.meta.intrinsics, cfg.threads));
  }
  synth::CorruptedData noisy = synth::corrupt(traj, clean, d.meta.noise);
  d.odometry = std::move(noisy.odometry);
  d.depths = std::move(noisy.depths);
  return d;
}

void write_dataset(const fs::path& root, const Dataset& data) {
  fs::create_directories(root / "depth");
  io::write_scene_json(root / "scene.json", data.meta);
  io::write_ply(root / "prior.ply", data.prior);
  io::write_ply(root / "changed.ply", data.changed);
  io::write_trajectory(root / "traj_gt.txt", data.ground_truth);
  io::write_odometry(root / "odometry.txt", data.odometry, data.timestamps());
  for (std::size_t k = 0; k < data.depths.size(); ++k) {
    io::write_depth(io::depth_path(root, k), data.depths[k]);
  }
}

Dataset load_dataset(const fs::path& root) {
  Dataset d;
  d.meta = io::read_scene_json(root / "scene.json");
  d.prior = io::read_ply(root / "prior.ply");
  d.changed = io::read_ply(root / "changed.ply");
  d.ground_truth = io::read_trajectory(root / "traj_gt.txt");
  if (d.ground_truth.size() < 2) {
    throw io::FormatError((root / "traj_gt.txt").string() + ": fewer than two poses");
  }
  d.odometry = io::read_odometry(root / "odometry.txt", d.timestamps());
  if (d.odometry.size() + 1 != d.ground_truth.size()) {
    throw io::FormatError((root / "odometry.txt").string() +
                          ": expected one measurement per consecutive keyframe pair");
  }
  d.depths.reserve(d.ground_truth.size());
  for (std::size_t k = 0; k < d.ground_truth.size(); ++k) {
    DepthImage img = io::read_depth(io::depth_path(root, k));
    if (img.width != d.meta.intrinsics.width || img.height != d.meta.intrinsics.height) {
      throw io::FormatError(io::depth_path(root, k).string() +
                            ": size does not match the intrinsics");
    }
    d.depths.push_back(std::move(img));
  }
  return d;
}

}  // namespace cloudiff::app
