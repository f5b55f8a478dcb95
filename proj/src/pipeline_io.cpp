#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "pointloc/binary_io.hpp"
#include "pointloc/dataset.hpp"
#include "pointloc/errors.hpp"
#include "pointloc/pipeline.hpp"

namespace pointloc {

namespace {

constexpr std::uint32_t kDatabaseMagic = 0x504c4442;  // "PLDB"
constexpr std::uint32_t kDatabaseVersion = 1;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw Error(ErrorCode::kInvalidArgument, "config: bad value '" + value + "' for '" + key + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T v{};
  std::string rest;
  if (!(in >> v) || (in >> rest)) bad_value(key, value);
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value);
}

// Every key, with how to read it and how to print it.
struct Field {
  std::function<void(PipelineConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <typename T>
Field number(T PipelineConfig::*m) {
  return {[m](PipelineConfig& c, const std::string& k, const std::string& v) { c.*m = parse_number<T>(k, v); },
          [m](const PipelineConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return fmt(c.*m);
            else return std::to_string(c.*m);
          }};
}

template <typename S, typename T>
Field nested(S PipelineConfig::*outer, T S::*inner) {
  return {[=](PipelineConfig& c, const std::string& k, const std::string& v) {
            (c.*outer).*inner = parse_number<T>(k, v);
          },
          [=](const PipelineConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return fmt((c.*outer).*inner);
            else return std::to_string((c.*outer).*inner);
          }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> f = {
      {"variant",
       {[](PipelineConfig& c, const std::string&, const std::string& v) { c.variant = parse_embedding_variant(v); },
        [](const PipelineConfig& c) { return std::string(to_string(c.variant)); }}},
      {"method",
       {[](PipelineConfig& c, const std::string&, const std::string& v) { c.method = parse_registration_method(v); },
        [](const PipelineConfig& c) { return std::string(to_string(c.method)); }}},
      {"ratio", nested(&PipelineConfig::matcher, &MatchParams::ratio)},
      {"mutual",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.matcher.mutual = parse_bool(k, v); },
        [](const PipelineConfig& c) { return std::string(c.matcher.mutual ? "true" : "false"); }}},
      {"min_matches", number(&PipelineConfig::min_matches)},
      {"fast_threshold", number(&PipelineConfig::fast_threshold)},
      {"max_keypoints", number(&PipelineConfig::max_keypoints)},
      {"max_valid_depth", number(&PipelineConfig::max_valid_depth)},
      {"ransac_threshold", nested(&PipelineConfig::ransac, &RansacParams::inlier_threshold)},
      {"ransac_max_iters", nested(&PipelineConfig::ransac, &RansacParams::max_iters)},
      {"ransac_seed", nested(&PipelineConfig::ransac, &RansacParams::seed)},
      {"ransac_early_exit", nested(&PipelineConfig::ransac, &RansacParams::early_exit_fraction)},
      {"icp_max_iters", nested(&PipelineConfig::icp, &IcpParams::max_iters)},
      {"icp_tol", nested(&PipelineConfig::icp, &IcpParams::tol)},
      {"icp_trim", nested(&PipelineConfig::icp, &IcpParams::trim_factor)},
      {"icp_stride", number(&PipelineConfig::icp_stride)},
      {"gnc_noise_bound", nested(&PipelineConfig::gnc, &GncParams::noise_bound)},
      {"gnc_factor", nested(&PipelineConfig::gnc, &GncParams::factor)},
      {"gnc_max_iters", nested(&PipelineConfig::gnc, &GncParams::max_outer_iters)},
      {"threads", number(&PipelineConfig::threads)},
      {"record_timings",
       {[](PipelineConfig& c, const std::string& k, const std::string& v) { c.record_timings = parse_bool(k, v); },
        [](const PipelineConfig& c) { return std::string(c.record_timings ? "true" : "false"); }}},
      {"hardware",
       {[](PipelineConfig& c, const std::string&, const std::string& v) { c.hardware = v; },
        [](const PipelineConfig& c) { return c.hardware; }}},
  };
  return f;
}

void validate(const PipelineConfig& c) {
  const auto fail = [](const std::string& m) { throw Error(ErrorCode::kInvalidArgument, "config: " + m); };
  if (c.min_matches < 3) fail("min_matches must be >= 3");
  if (!(c.matcher.ratio > 0 && c.matcher.ratio <= 1)) fail("ratio must be in (0, 1]");
  if (c.fast_threshold < 1 || c.max_keypoints < 1) fail("fast_threshold and max_keypoints must be positive");
  if (!(c.max_valid_depth > 0 && c.max_valid_depth <= 1)) fail("max_valid_depth must be in (0, 1]");
  if (!(c.ransac.inlier_threshold > 0) || c.ransac.max_iters < 1) fail("bad ransac parameters");
  if (c.icp.max_iters < 1 || !(c.icp.tol >= 0) || !(c.icp.trim_factor > 0) || c.icp_stride < 1)
    fail("bad icp parameters");
  if (!(c.gnc.noise_bound > 0) || !(c.gnc.factor > 1) || c.gnc.max_outer_iters < 1) fail("bad gnc parameters");
  if (c.threads < 0) fail("threads must be >= 0");
}

void write_pose(std::ostream& out, const Pose& p) {
  for (int i = 0; i < 3; ++i) bin::write_f64(out, p.translation(i));
  bin::write_f64(out, p.rotation.w());
  bin::write_f64(out, p.rotation.x());
  bin::write_f64(out, p.rotation.y());
  bin::write_f64(out, p.rotation.z());
}

Pose read_pose(std::istream& in, const std::string& what) {
  Pose p;
  for (int i = 0; i < 3; ++i) p.translation(i) = bin::read_f64(in, what);
  const double w = bin::read_f64(in, what), x = bin::read_f64(in, what);
  const double y = bin::read_f64(in, what), z = bin::read_f64(in, what);
  try {
    p.rotation = UnitQuaternion(w, x, y, z);
  } catch (const Error&) {
    throw Error(ErrorCode::kFormatError, what + ": bad rotation");
  }
  return p;
}

void write_descriptor(std::ostream& out, const BinaryDescriptor& d) {
  for (int byte = 0; byte < 32; ++byte) bin::write_u8(out, static_cast<std::uint8_t>(d.words[byte / 8] >> (8 * (byte % 8))));
}

BinaryDescriptor read_descriptor(std::istream& in, const std::string& what) {
  BinaryDescriptor d;
  for (int byte = 0; byte < 32; ++byte) d.words[byte / 8] |= std::uint64_t{bin::read_u8(in, what)} << (8 * (byte % 8));
  return d;
}

std::uint32_t read_count(std::istream& in, const std::string& what, std::uint32_t limit) {
  const std::uint32_t n = bin::read_u32(in, what);
  if (n > limit) throw Error(ErrorCode::kFormatError, what + ": implausible count " + std::to_string(n));
  return n;
}

}  // namespace

const char* to_string(RegistrationMethod m) {
  switch (m) {
    case RegistrationMethod::kNone: return "none";
    case RegistrationMethod::kUmeyama: return "umeyama";
    case RegistrationMethod::kRansac: return "ransac";
    case RegistrationMethod::kRansacIcp: return "ransac+icp";
    case RegistrationMethod::kGnc: return "gnc";
  }
  return "none";
}

RegistrationMethod parse_registration_method(const std::string& s) {
  for (auto m : {RegistrationMethod::kNone, RegistrationMethod::kUmeyama, RegistrationMethod::kRansac,
                 RegistrationMethod::kRansacIcp, RegistrationMethod::kGnc})
    if (s == to_string(m)) return m;
  throw Error(ErrorCode::kInvalidArgument, "unknown registration method '" + s + "'");
}

bool PipelineConfig::operator==(const PipelineConfig& o) const { return format_config(*this) == format_config(o); }

PipelineConfig parse_config(const std::string& text) {
  PipelineConfig c;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::kInvalidArgument, "config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq)), value = trim(t.substr(eq + 1));
    bool known = false;
    for (const auto& [name, field] : fields()) {
      if (name != key) continue;
      field.set(c, key, value);
      known = true;
    }
    if (!known) throw Error(ErrorCode::kInvalidArgument, "config: unknown key '" + key + "'");
  }
  validate(c);
  return c;
}

PipelineConfig read_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::kInvalidArgument, "cannot read config " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const PipelineConfig& config) {
  std::string out;
  for (const auto& [name, field] : fields()) out += name + " = " + field.get(config) + "\n";
  return out;
}

void write_database(const LocalizationDatabase& db, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + file.string());
  bin::write_u32(out, kDatabaseMagic);
  bin::write_u32(out, kDatabaseVersion);
  write_vocabulary(db.vocabulary, out);
  const CameraIntrinsics& k = db.intrinsics;
  for (double v : {k.fx, k.fy, k.cx, k.cy}) bin::write_f64(out, v);
  bin::write_u32(out, static_cast<std::uint32_t>(k.width));
  bin::write_u32(out, static_cast<std::uint32_t>(k.height));
  for (int v : {db.detector.threshold, db.detector.arc_length, db.detector.max_keypoints, db.detector.border})
    bin::write_i32(out, v);
  bin::write_u8(out, db.index.variant() == EmbeddingVariant::kBow ? 0 : 1);
  bin::write_u32(out, static_cast<std::uint32_t>(db.frames.size()));
  for (std::size_t i = 0; i < db.frames.size(); ++i) {
    const DatabaseFrame& f = db.frames[i];
    bin::write_i32(out, f.frame_id);
    bin::write_i32(out, f.point_id);
    write_pose(out, f.pose);
    bin::write_u32(out, static_cast<std::uint32_t>(f.keypoints.size()));
    for (const auto& kp : f.keypoints)
      for (float v : {kp.x, kp.y, kp.response, kp.angle}) bin::write_f32(out, v);
    for (const auto& d : f.descriptors) write_descriptor(out, d);
    bin::write_u32(out, static_cast<std::uint32_t>(f.depth.width));
    bin::write_u32(out, static_cast<std::uint32_t>(f.depth.height));
    for (float d : f.depth.data) bin::write_u16(out, encode_depth(d));
    const auto& e = db.index.embedding(i).values;
    bin::write_u32(out, static_cast<std::uint32_t>(e.size()));
    for (double v : e) bin::write_f64(out, v);
  }
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + file.string());
}

LocalizationDatabase read_database(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  const std::string what = file.string();
  if (!in) throw Error(ErrorCode::kFormatError, what + ": missing or unreadable");
  if (bin::read_u32(in, what) != kDatabaseMagic) throw Error(ErrorCode::kFormatError, what + ": not a database file");
  if (bin::read_u32(in, what) != kDatabaseVersion)
    throw Error(ErrorCode::kFormatError, what + ": unsupported database version");
  LocalizationDatabase db;
  db.vocabulary = read_vocabulary(in, what);
  CameraIntrinsics& k = db.intrinsics;
  k.fx = bin::read_f64(in, what);
  k.fy = bin::read_f64(in, what);
  k.cx = bin::read_f64(in, what);
  k.cy = bin::read_f64(in, what);
  k.width = static_cast<int>(read_count(in, what, 1 << 15));
  k.height = static_cast<int>(read_count(in, what, 1 << 15));
  db.detector.threshold = bin::read_i32(in, what);
  db.detector.arc_length = bin::read_i32(in, what);
  db.detector.max_keypoints = bin::read_i32(in, what);
  db.detector.border = bin::read_i32(in, what);
  const std::uint8_t variant = bin::read_u8(in, what);
  if (variant > 1) throw Error(ErrorCode::kFormatError, what + ": bad embedding variant");
  db.index = RetrievalIndex(variant == 0 ? EmbeddingVariant::kBow : EmbeddingVariant::kVlad);
  const std::uint32_t n = read_count(in, what, 1 << 24);
  db.frames.resize(n);
  for (auto& f : db.frames) {
    f.frame_id = bin::read_i32(in, what);
    f.point_id = bin::read_i32(in, what);
    f.pose = read_pose(in, what);
    f.keypoints.resize(read_count(in, what, 1 << 20));
    for (auto& kp : f.keypoints) {
      kp.x = bin::read_f32(in, what);
      kp.y = bin::read_f32(in, what);
      kp.response = bin::read_f32(in, what);
      kp.angle = bin::read_f32(in, what);
    }
    f.descriptors.resize(f.keypoints.size());
    for (auto& d : f.descriptors) d = read_descriptor(in, what);
    f.depth.width = static_cast<int>(read_count(in, what, 1 << 15));
    f.depth.height = static_cast<int>(read_count(in, what, 1 << 15));
    f.depth.channels = 1;
    f.depth.data.resize(static_cast<std::size_t>(f.depth.width) * f.depth.height);
    for (float& d : f.depth.data) d = decode_depth(bin::read_u16(in, what));
    GlobalEmbedding e{db.index.variant(), std::vector<double>(read_count(in, what, 1 << 24))};
    for (double& v : e.values) v = bin::read_f64(in, what);
    try {
      db.index.add(f.frame_id, std::move(e));
    } catch (const Error& err) {
      throw Error(ErrorCode::kFormatError, what + ": " + err.what());
    }
  }
  for (std::size_t i = 1; i < db.frames.size(); ++i)
    if (db.frames[i].frame_id <= db.frames[i - 1].frame_id)
      throw Error(ErrorCode::kFormatError, what + ": frames out of order");
  if (in.peek() != std::char_traits<char>::eof()) throw Error(ErrorCode::kFormatError, what + ": trailing bytes");
  return db;
}

void write_results(const std::vector<LocalizationResult>& results, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + file.string());
  out << "query_id,point_id,top1_frame_id,fallback,tx,ty,tz,qw,qx,qy,qz,t_retr,t_match,t_reg\n";
  for (const auto& r : results) {
    const Pose& p = r.pose;
    out << r.query_id << ',' << r.point_id << ',' << r.top1_frame_id << ',' << (r.fallback ? 1 : 0);
    for (double v : {p.translation.x(), p.translation.y(), p.translation.z(), p.rotation.w(), p.rotation.x(),
                     p.rotation.y(), p.rotation.z(), r.timings.retrieval(), r.timings.feature_matching,
                     r.timings.pose_optimization})
      out << ',' << fmt(v);
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + file.string());
}

std::vector<LocalizationResult> read_results(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::kFormatError, file.string() + ": missing or unreadable");
  std::vector<LocalizationResult> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || line.rfind("query_id", 0) == 0) continue;
    const auto fail = [&] {
      throw Error(ErrorCode::kFormatError, file.string() + ":" + std::to_string(line_no) + ": malformed result line");
    };
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (cells.size() != 14) fail();
    try {
      std::size_t used = 0;
      const auto as_int = [&](const std::string& s) {
        const int v = std::stoi(s, &used);
        if (used != s.size()) fail();
        return v;
      };
      const auto as_double = [&](const std::string& s) {
        const double v = std::stod(s, &used);
        if (used != s.size()) fail();
        return v;
      };
      LocalizationResult r;
      r.query_id = as_int(cells[0]);
      r.point_id = as_int(cells[1]);
      r.top1_frame_id = as_int(cells[2]);
      const int fb = as_int(cells[3]);
      if (fb != 0 && fb != 1) fail();
      r.fallback = fb == 1;
      r.pose.translation = Vec3(as_double(cells[4]), as_double(cells[5]), as_double(cells[6]));
      r.pose.rotation =
          UnitQuaternion(as_double(cells[7]), as_double(cells[8]), as_double(cells[9]), as_double(cells[10]));
      r.timings.embedding_matching = as_double(cells[11]);
      r.timings.feature_matching = as_double(cells[12]);
      r.timings.pose_optimization = as_double(cells[13]);
      r.timings.total = r.timings.embedding_matching + r.timings.feature_matching + r.timings.pose_optimization;
      out.push_back(r);
    } catch (const std::logic_error&) {
      fail();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kFormatError) fail();
      throw;
    }
  }
  return out;
}

}  // namespace pointloc
