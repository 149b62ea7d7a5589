#include "cloudiff/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace cloudiff::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace {

using nlohmann::json;

constexpr char kDepthMagic[8] = {'C', 'D', 'D', 'E', 'P', 'T', 'H', '1'};

std::ofstream open_out(const fs::path& path, bool binary = false) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  return os;
}

std::ifstream open_in(const fs::path& path, bool binary = false) {
  std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
  if (!is) throw FormatError("cannot read " + path.string());
  return is;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t index_of(const std::vector<double>& timestamps, double t,
                     const fs::path& path) {
  const auto it = std::lower_bound(timestamps.begin(), timestamps.end(), t - 1e-6);
  if (it == timestamps.end() || std::abs(*it - t) > 1e-6) {
    throw FormatError(path.string() + ": odometry timestamp " + fmt(t) +
                      " matches no keyframe");
  }
  return static_cast<std::size_t>(it - timestamps.begin());
}

std::size_t ply_type_size(const std::string& type) {
  if (type == "char" || type == "uchar" || type == "int8" || type == "uint8") return 1;
  if (type == "short" || type == "ushort" || type == "int16" || type == "uint16") return 2;
  if (type == "int" || type == "uint" || type == "float" || type == "int32" ||
      type == "uint32" || type == "float32") {
    return 4;
  }
  if (type == "double" || type == "float64") return 8;
  return 0;
}

double read_scalar(const char* p, const std::string& type) {
  auto get = [p]<typename T>(T) {
    T v;
    std::memcpy(&v, p, sizeof v);
    return static_cast<double>(v);
  };
  if (type == "float" || type == "float32") return get(float{});
  if (type == "double" || type == "float64") return get(double{});
  if (type == "char" || type == "int8") return get(std::int8_t{});
  if (type == "uchar" || type == "uint8") return get(std::uint8_t{});
  if (type == "short" || type == "int16") return get(std::int16_t{});
  if (type == "ushort" || type == "uint16") return get(std::uint16_t{});
  if (type == "int" || type == "int32") return get(std::int32_t{});
  return get(std::uint32_t{});
}

json to_json(const Point3& p) { return json::array({p.x(), p.y(), p.z()}); }

Point3 point_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw FormatError("expected [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json to_json(const synth::Box& b) {
  return {{"name", b.name}, {"min", to_json(b.min)}, {"max", to_json(b.max)}};
}

synth::Box box_from(const json& j) {
  return {j.at("name").get<std::string>(), point_from(j.at("min")),
          point_from(j.at("max"))};
}

json to_json(const synth::Scene& s) {
  json boxes = json::array();
  for (const auto& b : s.boxes) boxes.push_back(to_json(b));
  json mirrors = json::array();
  for (const auto& m : s.mirrors) {
    mirrors.push_back({{"axis", m.axis},
                       {"offset", m.offset},
                       {"lo", {m.lo.x(), m.lo.y()}},
                       {"hi", {m.hi.x(), m.hi.y()}}});
  }
  return {{"name", s.name},
          {"bounds", {{"min", to_json(s.bounds.min)}, {"max", to_json(s.bounds.max)}}},
          {"ground", s.has_ground},
          {"boxes", boxes},
          {"mirrors", mirrors}};
}

synth::Scene scene_from(const json& j) {
  synth::Scene s;
  s.name = j.at("name").get<std::string>();
  s.bounds.min = point_from(j.at("bounds").at("min"));
  s.bounds.max = point_from(j.at("bounds").at("max"));
  s.has_ground = j.value("ground", true);
  for (const auto& b : j.at("boxes")) s.boxes.push_back(box_from(b));
  if (j.contains("mirrors")) {
    for (const auto& m : j.at("mirrors")) {
      synth::MirrorPatch p;
      p.axis = m.at("axis").get<int>();
      p.offset = m.at("offset").get<double>();
      p.lo = {m.at("lo")[0].get<double>(), m.at("lo")[1].get<double>()};
      p.hi = {m.at("hi")[0].get<double>(), m.at("hi")[1].get<double>()};
      s.mirrors.push_back(p);
    }
  }
  s.validate();
  return s;
}

}  // namespace

void write_ply(const fs::path& path, const PointCloud& cloud) {
  auto os = open_out(path, true);
  os << "ply\nformat binary_little_endian 1.0\n"
     << "comment frame " << cloud.frame_id << "\n"
     << "element vertex " << cloud.size() << "\n"
     << "property float x\nproperty float y\nproperty float z\nend_header\n";
  std::vector<float> buf;
  buf.reserve(cloud.size() * 3);
  for (const auto& p : cloud.points) {
    buf.push_back(static_cast<float>(p.x()));
    buf.push_back(static_cast<float>(p.y()));
    buf.push_back(static_cast<float>(p.z()));
  }
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

PointCloud read_ply(const fs::path& path) {
  auto is = open_in(path, true);
  std::string line;
  if (!std::getline(is, line) || line.rfind("ply", 0) != 0) {
    throw FormatError(path.string() + ": not a PLY file");
  }
  enum class Fmt { kAscii, kBinaryLE } format = Fmt::kAscii;
  std::size_t count = 0;
  bool in_vertex = false;
  bool seen_vertex = false;
  std::vector<std::pair<std::string, std::string>> props;  // name, type
  PointCloud cloud;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string f;
      ls >> f;
      if (f == "ascii") {
        format = Fmt::kAscii;
      } else if (f == "binary_little_endian") {
        format = Fmt::kBinaryLE;
      } else {
        throw FormatError(path.string() + ": unsupported PLY format " + f);
      }
    } else if (word == "comment") {
      std::string key, value;
      ls >> key >> value;
      if (key == "frame" && !value.empty()) cloud.frame_id = value;
    } else if (word == "element") {
      std::string name;
      std::size_t n = 0;
      ls >> name >> n;
      if (seen_vertex && name != "vertex") {
        in_vertex = false;  // later elements are ignored
        continue;
      }
      if (name != "vertex") {
        throw FormatError(path.string() + ": vertex element must come first");
      }
      in_vertex = seen_vertex = true;
      count = n;
    } else if (word == "property" && in_vertex) {
      std::string type, name;
      ls >> type;
      if (type == "list") throw FormatError(path.string() + ": list vertex property");
      ls >> name;
      if (ply_type_size(type) == 0) {
        throw FormatError(path.string() + ": unknown property type " + type);
      }
      props.emplace_back(name, type);
    } else if (word == "end_header") {
      break;
    }
  }
  int ix = -1, iy = -1, iz = -1;
  std::size_t stride = 0;
  std::vector<std::size_t> offsets;
  for (std::size_t i = 0; i < props.size(); ++i) {
    offsets.push_back(stride);
    stride += ply_type_size(props[i].second);
    if (props[i].first == "x") ix = static_cast<int>(i);
    if (props[i].first == "y") iy = static_cast<int>(i);
    if (props[i].first == "z") iz = static_cast<int>(i);
  }
  if (ix < 0 || iy < 0 || iz < 0) {
    throw FormatError(path.string() + ": missing x/y/z properties");
  }
  cloud.points.reserve(count);
  if (format == Fmt::kBinaryLE) {
    std::vector<char> row(stride);
    for (std::size_t i = 0; i < count; ++i) {
      if (!is.read(row.data(), static_cast<std::streamsize>(stride))) {
        throw FormatError(path.string() + ": truncated vertex data");
      }
      auto val = [&](int k) { return read_scalar(row.data() + offsets[k], props[k].second); };
      cloud.points.emplace_back(val(ix), val(iy), val(iz));
    }
  } else {
    std::vector<double> vals(props.size());
    for (std::size_t i = 0; i < count; ++i) {
      for (auto& v : vals) {
        if (!(is >> v)) throw FormatError(path.string() + ": truncated vertex data");
      }
      cloud.points.emplace_back(vals[ix], vals[iy], vals[iz]);
    }
  }
  require_finite(cloud);
  return cloud;
}

void write_trajectory(const fs::path& path, const std::vector<StampedPose>& poses) {
  auto os = open_out(path);
  for (const auto& sp : poses) {
    const auto& p = sp.pose;
    os << fmt(sp.timestamp) << ' ' << fmt(p.t.x()) << ' ' << fmt(p.t.y()) << ' '
       << fmt(p.t.z()) << ' ' << fmt(p.q.x()) << ' ' << fmt(p.q.y()) << ' '
       << fmt(p.q.z()) << ' ' << fmt(p.q.w()) << '\n';
  }
}

std::vector<StampedPose> read_trajectory(const fs::path& path) {
  auto is = open_in(path);
  std::vector<StampedPose> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double t, x, y, z, qx, qy, qz, qw;
    if (!(ls >> t >> x >> y >> z >> qx >> qy >> qz >> qw)) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": expected 8 numbers");
    }
    Pose p(Point3(x, y, z), Eigen::Quaterniond(qw, qx, qy, qz));
    if (!p.is_finite()) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": non-finite pose");
    }
    out.push_back({t, p});
  }
  return out;
}

void write_odometry(const fs::path& path,
                    const std::vector<OdometryMeasurement>& odometry,
                    const std::vector<double>& timestamps) {
  auto os = open_out(path);
  for (const auto& m : odometry) {
    if (m.from >= timestamps.size() || m.to >= timestamps.size()) {
      throw std::invalid_argument("write_odometry: index outside the keyframe list");
    }
    const auto& p = m.relative;
    const double sr = 1.0 / std::sqrt(m.information(0, 0));
    const double st = 1.0 / std::sqrt(m.information(3, 3));
    os << fmt(timestamps[m.from]) << ' ' << fmt(timestamps[m.to]) << ' '
       << fmt(p.t.x()) << ' ' << fmt(p.t.y()) << ' ' << fmt(p.t.z()) << ' '
       << fmt(p.q.x()) << ' ' << fmt(p.q.y()) << ' ' << fmt(p.q.z()) << ' '
       << fmt(p.q.w()) << ' ' << fmt(sr) << ' ' << fmt(st) << '\n';
  }
}

std::vector<OdometryMeasurement> read_odometry(const fs::path& path,
                                               const std::vector<double>& timestamps) {
  auto is = open_in(path);
  std::vector<OdometryMeasurement> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double ta, tb, x, y, z, qx, qy, qz, qw, sr, st;
    if (!(ls >> ta >> tb >> x >> y >> z >> qx >> qy >> qz >> qw >> sr >> st)) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": expected 11 numbers");
    }
    if (!(sr > 0.0) || !(st > 0.0)) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": sigmas must be positive");
    }
    OdometryMeasurement m;
    m.from = index_of(timestamps, ta, path);
    m.to = index_of(timestamps, tb, path);
    m.relative = Pose(Point3(x, y, z), Eigen::Quaterniond(qw, qx, qy, qz));
    Vector6 diag;
    diag << Point3::Constant(1.0 / (sr * sr)), Point3::Constant(1.0 / (st * st));
    m.information = diag.asDiagonal();
    out.push_back(m);
  }
  return out;
}

void write_depth(const fs::path& path, const DepthImage& image) {
  auto os = open_out(path, true);
  const auto w = static_cast<std::uint32_t>(image.width);
  const auto h = static_cast<std::uint32_t>(image.height);
  os.write(kDepthMagic, sizeof kDepthMagic);
  os.write(reinterpret_cast<const char*>(&w), 4);
  os.write(reinterpret_cast<const char*>(&h), 4);
  std::vector<float> buf(image.depth.begin(), image.depth.end());
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

DepthImage read_depth(const fs::path& path) {
  auto is = open_in(path, true);
  char magic[8];
  std::uint32_t w = 0, h = 0;
  if (!is.read(magic, 8) || std::memcmp(magic, kDepthMagic, 8) != 0) {
    throw FormatError(path.string() + ": bad depth magic");
  }
  if (!is.read(reinterpret_cast<char*>(&w), 4) || !is.read(reinterpret_cast<char*>(&h), 4)) {
    throw FormatError(path.string() + ": truncated header");
  }
  if (w == 0 || h == 0 || w > 1u << 15 || h > 1u << 15) {
    throw FormatError(path.string() + ": implausible image size");
  }
  std::vector<float> buf(std::size_t(w) * h);
  if (!is.read(reinterpret_cast<char*>(buf.data()),
               static_cast<std::streamsize>(buf.size() * sizeof(float)))) {
    throw FormatError(path.string() + ": truncated pixel data");
  }
  DepthImage img(static_cast<int>(w), static_cast<int>(h));
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const double d = buf[i];
    if (!std::isfinite(d) || d < 0.0) {
      throw FormatError(path.string() + ": invalid depth value");
    }
    img.depth[i] = d;
  }
  return img;
}

void write_scene_json(const fs::path& path, const DatasetMeta& meta) {
  json added = json::array();
  for (const auto& b : meta.scenes.manifest.add) added.push_back(to_json(b));
  const auto& K = meta.intrinsics;
  const auto& n = meta.noise;
  json j = {
      {"format_version", meta.format_version},
      {"scene", to_json(meta.scenes.original)},
      {"changed_scene", to_json(meta.scenes.changed)},
      {"edit", {{"remove", meta.scenes.manifest.remove}, {"add", added}}},
      {"intrinsics",
       {{"fx", K.fx}, {"fy", K.fy}, {"cx", K.cx}, {"cy", K.cy},
        {"width", K.width}, {"height", K.height}}},
      {"noise",
       {{"label", meta.noise_label},
        {"sigma_g", n.gyro},
        {"sigma_a", n.accel},
        {"sigma_bg", n.gyro_bias_walk},
        {"sigma_ba", n.accel_bias_walk},
        {"sigma_img", n.image},
        {"dark_empty_rate", n.dark_empty_rate},
        {"seed", n.seed}}},
      {"trajectory", meta.trajectory_label},
      {"surface_density", meta.surface_density},
      {"seed", meta.seed},
  };
  auto os = open_out(path);
  os << std::setw(2) << j << '\n';
}

DatasetMeta read_scene_json(const fs::path& path) {
  auto is = open_in(path);
  try {
    const json j = json::parse(is);
    DatasetMeta m;
    m.format_version = j.value("format_version", 1);
    m.scenes.original = scene_from(j.at("scene"));
    m.scenes.changed = scene_from(j.at("changed_scene"));
    const auto& e = j.at("edit");
    m.scenes.manifest.remove = e.at("remove").get<std::vector<std::string>>();
    for (const auto& b : e.at("add")) m.scenes.manifest.add.push_back(box_from(b));
    const auto& k = j.at("intrinsics");
    m.intrinsics = {k.at("fx").get<double>(), k.at("fy").get<double>(),
                    k.at("cx").get<double>(), k.at("cy").get<double>(),
                    k.at("width").get<int>(),  k.at("height").get<int>()};
    m.intrinsics.validate();
    const auto& n = j.at("noise");
    m.noise_label = n.value("label", "none");
    m.noise.gyro = n.at("sigma_g").get<double>();
    m.noise.accel = n.at("sigma_a").get<double>();
    m.noise.gyro_bias_walk = n.at("sigma_bg").get<double>();
    m.noise.accel_bias_walk = n.at("sigma_ba").get<double>();
    m.noise.image = n.at("sigma_img").get<double>();
    m.noise.dark_empty_rate = n.value("dark_empty_rate", 0.0);
    m.noise.seed = n.value("seed", std::uint64_t{0});
    m.trajectory_label = j.value("trajectory", "");
    m.surface_density = j.value("surface_density", 0.0);
    m.seed = j.value("seed", std::uint64_t{0});
    return m;
  } catch (const json::exception& ex) {
    throw FormatError(path.string() + ": " + ex.what());
  } catch (const std::invalid_argument& ex) {
    throw FormatError(path.string() + ": " + ex.what());
  }
}

fs::path depth_path(const fs::path& root, std::size_t index) {
  char name[32];
  std::snprintf(name, sizeof name, "%06zu.bin", index);
  return root / "depth" / name;
}

}  // namespace cloudiff::io
