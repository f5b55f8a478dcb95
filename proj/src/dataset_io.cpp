#include "pointloc/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "pointloc/errors.hpp"
#include "pointloc/parallel.hpp"

namespace fs = std::filesystem;

namespace pointloc {
namespace {

[[noreturn]] void format_error(const fs::path& file, const std::string& what) {
  throw Error(ErrorCode::kFormatError, file.string() + ": " + what);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ofstream open_out(const fs::path& file, bool binary) {
  std::ofstream out(file, binary ? std::ios::binary : std::ios::out);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + file.string());
  return out;
}

std::ifstream open_in(const fs::path& file, bool binary) {
  std::ifstream in(file, binary ? std::ios::binary : std::ios::in);
  if (!in) format_error(file, "missing or unreadable");
  return in;
}

// --- netpbm containers -----------------------------------------------------

struct PnmHeader {
  int width = 0, height = 0, maxval = 0;
};

void write_pnm_header(std::ostream& out, const char* magic, int w, int h, int maxval) {
  out << magic << "\n" << w << " " << h << "\n" << maxval << "\n";
}

PnmHeader read_pnm_header(std::istream& in, const fs::path& file, const std::string& magic) {
  std::string m;
  PnmHeader h;
  if (!(in >> m) || m != magic) format_error(file, "expected " + magic + " header");
  if (!(in >> h.width >> h.height >> h.maxval)) format_error(file, "bad raster header");
  if (h.width <= 0 || h.height <= 0 || h.width > 1 << 15 || h.height > 1 << 15) {
    format_error(file, "bad raster size");
  }
  if (!std::isspace(in.get())) format_error(file, "bad raster header terminator");
  return h;
}

template <typename T>
void write_u16_raster(const Image<T>& image, const fs::path& file,
                      std::uint16_t (*encode)(T)) {
  auto out = open_out(file, true);
  write_pnm_header(out, "P5", image.width, image.height, 65535);
  std::string buf(image.data.size() * 2, '\0');
  for (std::size_t i = 0; i < image.data.size(); ++i) {
    const std::uint16_t v = encode(image.data[i]);
    buf[2 * i] = static_cast<char>(v >> 8);
    buf[2 * i + 1] = static_cast<char>(v & 0xff);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + file.string());
}

template <typename T>
Image<T> read_u16_raster(const fs::path& file, T (*decode)(std::uint16_t)) {
  auto in = open_in(file, true);
  const PnmHeader h = read_pnm_header(in, file, "P5");
  if (h.maxval != 65535) format_error(file, "expected 16-bit raster");
  Image<T> image(h.width, h.height, 1);
  std::string buf(image.data.size() * 2, '\0');
  if (!in.read(buf.data(), static_cast<std::streamsize>(buf.size()))) {
    format_error(file, "truncated raster");
  }
  for (std::size_t i = 0; i < image.data.size(); ++i) {
    const auto hi = static_cast<unsigned char>(buf[2 * i]);
    const auto lo = static_cast<unsigned char>(buf[2 * i + 1]);
    image.data[i] = decode(static_cast<std::uint16_t>(hi << 8 | lo));
  }
  return image;
}

std::uint16_t encode_id(std::uint16_t v) { return v; }
std::uint16_t decode_id(std::uint16_t v) { return v; }

// --- key = value text --------------------------------------------------------

std::map<std::string, std::string> read_key_values(const fs::path& file) {
  auto in = open_in(file, false);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) format_error(file, "expected key = value: " + line);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

template <typename T>
T parse_value(const std::map<std::string, std::string>& kv, const std::string& key,
              const fs::path& file) {
  const auto it = kv.find(key);
  if (it == kv.end()) format_error(file, "missing key '" + key + "'");
  std::istringstream in(it->second);
  T v{};
  std::string rest;
  if (!(in >> v) || (in >> rest)) format_error(file, "bad value for '" + key + "'");
  return v;
}

fs::path frame_stem(const fs::path& dir, const Frame& f, int k) {
  if (f.is_database) return dir / "points" / std::to_string(f.point_id) / ("db_" + std::to_string(k));
  return dir / "queries" / std::to_string(f.point_id) / ("q_" + std::to_string(k));
}

fs::path with_ext(const fs::path& stem, const char* ext) {
  fs::path p = stem;
  p += ext;
  return p;
}

void write_frame(const Frame& f, const fs::path& stem) {
  write_rgb(f.rgb, with_ext(stem, ".rgb"));
  write_depth(f.depth, with_ext(stem, ".depth"));
  write_instances(f.instances, with_ext(stem, ".inst"));
  auto out = open_out(with_ext(stem, ".pose"), false);
  out << format_pose(f.pose) << "\n";
}

Frame read_frame(const fs::path& stem, const LoadOptions& options) {
  Frame f;
  const fs::path pose_file = with_ext(stem, ".pose");
  auto in = open_in(pose_file, false);
  std::string line;
  if (!std::getline(in, line)) format_error(pose_file, "empty pose file");
  try {
    f.pose = parse_pose(line);
  } catch (const Error& e) {
    format_error(pose_file, e.what());
  }
  if (options.rasters) {
    f.rgb = read_rgb(with_ext(stem, ".rgb"));
    f.depth = read_depth(with_ext(stem, ".depth"));
    f.instances = read_instances(with_ext(stem, ".inst"));
    if (f.rgb.width != f.depth.width || f.rgb.height != f.depth.height ||
        f.instances.width != f.depth.width || f.instances.height != f.depth.height) {
      format_error(stem, "rasters disagree in size");
    }
  }
  return f;
}

}  // namespace

std::uint16_t encode_depth(float d) {
  const double v = std::round(std::clamp(static_cast<double>(d), 0.0, 1.0) * 65535.0);
  return static_cast<std::uint16_t>(v);
}
float decode_depth(std::uint16_t v) { return static_cast<float>(v / 65535.0); }

float quantize_depth(float d) { return decode_depth(encode_depth(d)); }

// --- stats -------------------------------------------------------------------

StatsAccumulator::StatsAccumulator(const SceneModel& scene) : scene_(&scene) {}

void StatsAccumulator::add(const PointGroup& group) {
  ++points_;
  database_frames_ += static_cast<int>(group.database_frames.size());
  query_frames_ += static_cast<int>(group.query_frames.size());
  auto collect = [&](const Frame& f) {
    for (std::uint16_t id : f.instances.data) {
      if (id != 0) instances_.insert(id);
    }
  };
  for (const Frame& f : group.database_frames) collect(f);
  for (const Frame& f : group.query_frames) collect(f);
}

DatasetSummary StatsAccumulator::summary() const {
  DatasetSummary s;
  s.points = points_;
  s.poses = database_frames_ + query_frames_;
  s.instances = static_cast<int>(instances_.size());
  std::set<int> categories;
  for (const Box& b : scene_->obstacles) {
    if (instances_.count(b.instance_id)) categories.insert(b.category_id);
  }
  s.categories = static_cast<int>(categories.size());
  s.maps = points_ > 0 ? 1 : 0;
  return s;
}

DatasetSummary dataset_stats(const SceneModel& scene, const std::vector<PointGroup>& groups) {
  StatsAccumulator acc(scene);
  for (const PointGroup& g : groups) acc.add(g);
  return acc.summary();
}

// --- rasters -----------------------------------------------------------------

void write_rgb(const RgbImage& image, const fs::path& file) {
  if (image.channels != 3) throw Error(ErrorCode::kInvalidArgument, "rgb raster needs 3 channels");
  auto out = open_out(file, true);
  write_pnm_header(out, "P6", image.width, image.height, 255);
  out.write(reinterpret_cast<const char*>(image.data.data()),
            static_cast<std::streamsize>(image.data.size()));
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + file.string());
}

RgbImage read_rgb(const fs::path& file) {
  auto in = open_in(file, true);
  const PnmHeader h = read_pnm_header(in, file, "P6");
  if (h.maxval != 255) format_error(file, "expected 8-bit raster");
  RgbImage image(h.width, h.height, 3);
  if (!in.read(reinterpret_cast<char*>(image.data.data()),
               static_cast<std::streamsize>(image.data.size()))) {
    format_error(file, "truncated raster");
  }
  return image;
}

void write_depth(const DepthImage& image, const fs::path& file) {
  write_u16_raster<float>(image, file, encode_depth);
}
DepthImage read_depth(const fs::path& file) { return read_u16_raster<float>(file, decode_depth); }
void write_instances(const InstanceImage& image, const fs::path& file) {
  write_u16_raster<std::uint16_t>(image, file, encode_id);
}
InstanceImage read_instances(const fs::path& file) {
  return read_u16_raster<std::uint16_t>(file, decode_id);
}

// --- manifest and scene ------------------------------------------------------

void write_manifest(const DatasetManifest& m, const fs::path& file) {
  auto out = open_out(file, false);
  const auto& p = m.params;
  out << "format = pointloc-dataset-1\n"
      << "seed = " << m.seed << "\n"
      << "maps = " << m.summary.maps << "\n"
      << "points = " << m.summary.points << "\n"
      << "poses = " << m.summary.poses << "\n"
      << "categories = " << m.summary.categories << "\n"
      << "instances = " << m.summary.instances << "\n"
      << "database_frames = " << m.database_frames << "\n"
      << "query_frames = " << m.query_frames << "\n"
      << "grid_spacing = " << fmt_double(p.grid_spacing) << "\n"
      << "queries_per_point = " << p.queries_per_point << "\n"
      << "query_radius = " << fmt_double(p.query_radius) << "\n"
      << "noise_factor = " << fmt_double(p.noise_factor) << "\n"
      << "fov_degrees = " << fmt_double(p.fov_degrees) << "\n"
      << "width = " << p.width << "\n"
      << "height = " << p.height << "\n"
      << "camera_height = " << fmt_double(p.camera_height) << "\n"
      << "depth_max = " << fmt_double(p.depth_max) << "\n";
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + file.string());
}

DatasetManifest read_manifest(const fs::path& file) {
  const auto kv = read_key_values(file);
  if (parse_value<std::string>(kv, "format", file) != "pointloc-dataset-1") {
    format_error(file, "unknown format");
  }
  DatasetManifest m;
  m.seed = parse_value<std::uint64_t>(kv, "seed", file);
  m.summary.maps = parse_value<int>(kv, "maps", file);
  m.summary.points = parse_value<int>(kv, "points", file);
  m.summary.poses = parse_value<int>(kv, "poses", file);
  m.summary.categories = parse_value<int>(kv, "categories", file);
  m.summary.instances = parse_value<int>(kv, "instances", file);
  m.database_frames = parse_value<int>(kv, "database_frames", file);
  m.query_frames = parse_value<int>(kv, "query_frames", file);
  auto& p = m.params;
  p.grid_spacing = parse_value<double>(kv, "grid_spacing", file);
  p.queries_per_point = parse_value<int>(kv, "queries_per_point", file);
  p.query_radius = parse_value<double>(kv, "query_radius", file);
  p.noise_factor = parse_value<double>(kv, "noise_factor", file);
  p.fov_degrees = parse_value<double>(kv, "fov_degrees", file);
  p.width = parse_value<int>(kv, "width", file);
  p.height = parse_value<int>(kv, "height", file);
  p.camera_height = parse_value<double>(kv, "camera_height", file);
  p.depth_max = parse_value<double>(kv, "depth_max", file);
  return m;
}

void write_scene(const SceneModel& scene, const fs::path& file) {
  auto out = open_out(file, false);
  out << "seed = " << scene.seed << "\n"
      << "extent = " << fmt_double(scene.x_min) << " " << fmt_double(scene.x_max) << " "
      << fmt_double(scene.y_min) << " " << fmt_double(scene.y_max) << "\n"
      << "wall_height = " << fmt_double(scene.wall_height) << "\n"
      << "boxes = " << scene.obstacles.size() << "\n";
  for (const Box& b : scene.obstacles) {
    out << b.instance_id << " " << b.category_id;
    for (int c = 0; c < 3; ++c) out << " " << fmt_double(b.min[c]);
    for (int c = 0; c < 3; ++c) out << " " << fmt_double(b.max[c]);
    for (int c = 0; c < 3; ++c) out << " " << fmt_double(b.albedo[c]);
    out << "\n";
  }
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + file.string());
}

SceneModel read_scene(const fs::path& file) {
  auto in = open_in(file, false);
  SceneModel s;
  std::string line, key, eq;
  auto header = [&](const char* expected) -> std::istringstream {
    if (!std::getline(in, line)) format_error(file, std::string("missing ") + expected);
    std::istringstream ls(line);
    if (!(ls >> key >> eq) || key != expected || eq != "=") {
      format_error(file, std::string("expected ") + expected);
    }
    return ls;
  };
  std::size_t count = 0;
  if (!(header("seed") >> s.seed)) format_error(file, "bad seed");
  if (!(header("extent") >> s.x_min >> s.x_max >> s.y_min >> s.y_max)) format_error(file, "bad extent");
  if (!(header("wall_height") >> s.wall_height)) format_error(file, "bad wall_height");
  if (!(header("boxes") >> count)) format_error(file, "bad box count");
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) format_error(file, "fewer boxes than declared");
    std::istringstream ls(line);
    Box b;
    if (!(ls >> b.instance_id >> b.category_id >> b.min[0] >> b.min[1] >> b.min[2] >> b.max[0] >>
          b.max[1] >> b.max[2] >> b.albedo[0] >> b.albedo[1] >> b.albedo[2])) {
      format_error(file, "bad box line " + std::to_string(i));
    }
    s.obstacles.push_back(b);
  }
  return s;
}

// --- groups and datasets -----------------------------------------------------

void write_point_group(const PointGroup& group, const fs::path& dir) {
  fs::create_directories(dir / "points" / std::to_string(group.point_id));
  fs::create_directories(dir / "queries" / std::to_string(group.point_id));
  for (std::size_t k = 0; k < group.database_frames.size(); ++k) {
    write_frame(group.database_frames[k], frame_stem(dir, group.database_frames[k], static_cast<int>(k)));
  }
  for (std::size_t k = 0; k < group.query_frames.size(); ++k) {
    write_frame(group.query_frames[k], frame_stem(dir, group.query_frames[k], static_cast<int>(k)));
  }
}

PointGroup read_point_group(const fs::path& dir, int point_id, const LoadOptions& options) {
  PointGroup g;
  g.point_id = point_id;
  const fs::path pdir = dir / "points" / std::to_string(point_id);
  for (int k = 0; k < 6; ++k) {
    Frame f = read_frame(pdir / ("db_" + std::to_string(k)), options);
    f.point_id = point_id;
    f.frame_id = database_frame_id(point_id, k);
    f.is_database = true;
    g.database_frames.push_back(std::move(f));
  }
  if (fs::exists(pdir / "db_6.pose")) format_error(pdir, "more than 6 database frames");
  g.center = g.database_frames.front().pose.translation;
  if (options.queries) {
    const fs::path qdir = dir / "queries" / std::to_string(point_id);
    for (int k = 0; fs::exists(qdir / ("q_" + std::to_string(k) + ".pose")); ++k) {
      Frame f = read_frame(qdir / ("q_" + std::to_string(k)), options);
      f.point_id = point_id;
      f.frame_id = query_frame_id(point_id, k);
      f.is_database = false;
      g.query_frames.push_back(std::move(f));
    }
  }
  return g;
}

std::vector<int> list_point_ids(const fs::path& dir) {
  std::vector<int> ids;
  const fs::path points = dir / "points";
  if (!fs::is_directory(points)) format_error(points, "missing points directory");
  for (const auto& entry : fs::directory_iterator(points)) {
    const std::string name = entry.path().filename().string();
    int id = 0;
    const auto [ptr, ec] = std::from_chars(name.data(), name.data() + name.size(), id);
    if (ec != std::errc() || ptr != name.data() + name.size() || id < 0) {
      format_error(entry.path(), "unexpected entry in points directory");
    }
    ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

void write_dataset(const SceneModel& scene, const std::vector<PointGroup>& groups,
                   const DatasetManifest& manifest, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create " + dir.string());
  write_scene(scene, dir / "scene.txt");
  for (const PointGroup& g : groups) write_point_group(g, dir);
  write_manifest(manifest, dir / "manifest.txt");
}

DatasetManifest generate_dataset(std::uint64_t seed, const GenerationParams& params,
                                 const SceneParams& scene_params, const fs::path& dir, int threads) {
  SceneParams sp = scene_params;
  sp.camera_height = params.camera_height;
  const SceneModel scene = generate_scene(seed, sp);
  const auto keys = generate_point_grid(scene, params.grid_spacing, params.camera_height);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create " + dir.string());
  write_scene(scene, dir / "scene.txt");
  StatsAccumulator stats(scene);
  const std::size_t batch = static_cast<std::size_t>(std::max(1, threads));
  for (std::size_t start = 0; start < keys.size(); start += batch) {
    std::vector<PointGroup> groups(std::min(batch, keys.size() - start));
    parallel_for(groups.size(), threads, [&](std::size_t i) {
      groups[i] = generate_point_frames(scene, keys[start + i], params, seed);
    });
    for (const PointGroup& g : groups) {
      stats.add(g);
      write_point_group(g, dir);
    }
  }
  const DatasetManifest manifest{seed, stats.summary(), stats.database_frames(), stats.query_frames(), params};
  write_manifest(manifest, dir / "manifest.txt");
  return manifest;
}

Dataset load_dataset(const fs::path& dir, const LoadOptions& options) {
  Dataset ds;
  ds.manifest = read_manifest(dir / "manifest.txt");
  ds.scene = read_scene(dir / "scene.txt");
  const std::vector<int> ids = list_point_ids(dir);
  if (static_cast<int>(ids.size()) != ds.manifest.summary.points) {
    format_error(dir / "manifest.txt", "point count disagrees with points/ directory");
  }
  int queries = 0;
  for (int id : ids) {
    ds.groups.push_back(read_point_group(dir, id, options));
    if (!options.queries) {
      const fs::path qdir = dir / "queries" / std::to_string(id);
      for (int k = 0; fs::exists(qdir / ("q_" + std::to_string(k) + ".pose")); ++k) ++queries;
    } else {
      queries += static_cast<int>(ds.groups.back().query_frames.size());
    }
  }
  const int db = 6 * static_cast<int>(ids.size());
  if (db != ds.manifest.database_frames || queries != ds.manifest.query_frames ||
      db + queries != ds.manifest.summary.poses) {
    format_error(dir / "manifest.txt", "pose counts disagree with files on disk");
  }
  return ds;
}

}  // namespace pointloc
