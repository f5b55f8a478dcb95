#include "pointloc/evaluation.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "pointloc/errors.hpp"
#include "pointloc/parallel.hpp"

namespace pointloc {

namespace {

std::string number(double v, const char* format) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

// Thresholds print without trailing zeros: 0.25m, 5m.
std::string compact(double v) { return number(v, "%g"); }

constexpr const char* kStageNames[] = {"embedding extraction", "embedding matching", "feature extraction",
                                       "feature matching",     "pose optimization",  "overall"};

std::vector<std::pair<std::string, double>> stage_rows(const TimingReport& t) {
  if (t.retrieval_combined)
    return {{"retrieval (feature extraction, embedding extraction and matching)",
             t.feature_extraction + t.embedding_extraction + t.embedding_matching},
            {kStageNames[3], t.feature_matching},
            {kStageNames[4], t.pose_optimization},
            {kStageNames[5], t.overall}};
  const double values[] = {t.embedding_extraction, t.embedding_matching, t.feature_extraction,
                           t.feature_matching,     t.pose_optimization,  t.overall};
  std::vector<std::pair<std::string, double>> rows;
  for (int i = 0; i < 6; ++i) rows.emplace_back(kStageNames[i], values[i]);
  return rows;
}

}  // namespace

std::string RecallThreshold::label() const {
  if (translation_only()) return "(" + compact(meters) + "m)";
  return "(" + compact(meters) + "m," + compact(degrees) + "°)";
}

RecallRow recall_at(std::span<const EvaluatedQuery> queries, const std::string& name, int threads) {
  if (queries.empty()) throw Error(ErrorCode::kInvalidArgument, "recall of an empty result set");
  // Per-query hit masks, then integer counts: the sum cannot depend on
  // scheduling.
  std::vector<unsigned> hits(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t i) {
    const double te = translation_error(queries[i].result.pose, queries[i].ground_truth);
    const double re = rotation_error(queries[i].result.pose, queries[i].ground_truth);
    unsigned mask = 0;
    for (std::size_t t = 0; t < kRecallThresholds.size(); ++t) {
      const RecallThreshold& th = kRecallThresholds[t];
      if (te <= th.meters && (th.translation_only() || re <= th.degrees)) mask |= 1u << t;
    }
    hits[i] = mask;
  });
  RecallRow row;
  row.name = name;
  row.queries = static_cast<int>(queries.size());
  for (std::size_t t = 0; t < kRecallThresholds.size(); ++t) {
    std::size_t count = 0;
    for (unsigned m : hits) count += (m >> t) & 1u;
    row.recall[t] = static_cast<double>(count) / static_cast<double>(queries.size());
  }
  return row;
}

bool recall_is_consistent(const RecallRow& row) {
  const auto& r = row.recall;
  for (int i = 0; i < 8; ++i)
    if (!(r[i] >= 0.0 && r[i] <= 1.0)) return false;
  for (int i = 1; i < 4; ++i)
    if (r[i] > r[i - 1] || r[i + 4] > r[i + 3]) return false;
  for (int i = 0; i < 4; ++i)
    if (r[i] > r[i + 4]) return false;
  return true;
}

TimingReport timing_report(std::span<const LocalizationResult> results, const std::string& hardware) {
  if (results.empty()) throw Error(ErrorCode::kInvalidArgument, "timing report of an empty result set");
  TimingReport t;
  for (const auto& r : results) {
    t.feature_extraction += r.timings.feature_extraction;
    t.embedding_extraction += r.timings.embedding_extraction;
    t.embedding_matching += r.timings.embedding_matching;
    t.feature_matching += r.timings.feature_matching;
    t.pose_optimization += r.timings.pose_optimization;
    t.overall += r.timings.total;
  }
  const double n = static_cast<double>(results.size());
  for (double* v : {&t.feature_extraction, &t.embedding_extraction, &t.embedding_matching, &t.feature_matching,
                    &t.pose_optimization, &t.overall})
    *v /= n;
  t.queries = static_cast<int>(results.size());
  t.hardware = hardware;
  return t;
}

ReportFormat parse_report_format(const std::string& s) {
  if (s == "markdown") return ReportFormat::kMarkdown;
  if (s == "csv") return ReportFormat::kCsv;
  throw Error(ErrorCode::kInvalidArgument, "unknown report format '" + s + "'");
}

std::string format_report(std::span<const RecallRow> table, const TimingReport* timing, ReportFormat format) {
  std::ostringstream out;
  if (format == ReportFormat::kMarkdown) {
    out << "| Configuration |";
    for (const auto& th : kRecallThresholds) out << ' ' << th.label() << " |";
    out << " Queries |\n|---|";
    for (std::size_t i = 0; i < kRecallThresholds.size(); ++i) out << "---|";
    out << "---|\n";
    for (const auto& row : table) {
      out << "| " << row.name << " |";
      for (double r : row.recall) out << ' ' << number(r, "%.3f") << " |";
      out << ' ' << row.queries << " |\n";
    }
    if (timing) {
      out << "\n| Stage | Mean time, s |\n|---|---|\n";
      for (const auto& [stage, v] : stage_rows(*timing)) out << "| " << stage << " | " << number(v, "%.3f") << " |\n";
      out << "\nQueries: " << timing->queries << ". Hardware: "
          << (timing->hardware.empty() ? "unspecified" : timing->hardware) << "\n";
    }
  } else {
    out << "configuration";
    for (const auto& th : kRecallThresholds) out << ",\"" << th.label() << '"';
    out << ",queries\n";
    for (const auto& row : table) {
      out << '"' << row.name << '"';
      for (double r : row.recall) out << ',' << number(r, "%.17g");
      out << ',' << row.queries << '\n';
    }
    if (timing) {
      out << "\nstage,mean_seconds\n";
      for (const auto& [stage, v] : stage_rows(*timing)) out << '"' << stage << "\"," << number(v, "%.17g") << '\n';
      out << "queries," << timing->queries << "\nhardware,\"" << timing->hardware << "\"\n";
    }
  }
  return out.str();
}

void emit_report(std::span<const RecallRow> table, const TimingReport* timing, ReportFormat format,
                 const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + file.string());
  out << format_report(table, timing, format);
  out.flush();
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + file.string());
}

std::vector<RecallRow> read_recall_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::kFormatError, file.string() + ": missing or unreadable");
  std::string line;
  if (!std::getline(in, line) || line.rfind("configuration,", 0) != 0)
    throw Error(ErrorCode::kFormatError, file.string() + ": not a recall table");
  std::vector<RecallRow> rows;
  while (std::getline(in, line) && !line.empty()) {
    const auto bad = [&] { throw Error(ErrorCode::kFormatError, file.string() + ": malformed row '" + line + "'"); };
    if (line.front() != '"') bad();
    const auto close = line.find('"', 1);
    if (close == std::string::npos) bad();
    RecallRow row;
    row.name = line.substr(1, close - 1);
    std::istringstream fields(line.substr(close + 1));
    char comma = 0;
    for (double& r : row.recall)
      if (!(fields >> comma >> r) || comma != ',') bad();
    if (!(fields >> comma >> row.queries) || comma != ',') bad();
    rows.push_back(row);
  }
  return rows;
}

std::vector<EvaluatedQuery> attach_ground_truth(std::span<const LocalizationResult> results,
                                                const std::vector<PointGroup>& groups) {
  std::unordered_map<int, const Pose*> truth;
  for (const auto& g : groups)
    for (const auto& f : g.query_frames) truth[f.frame_id] = &f.pose;
  std::vector<EvaluatedQuery> out;
  out.reserve(results.size());
  for (const auto& r : results) {
    const auto it = truth.find(r.query_id);
    if (it == truth.end())
      throw Error(ErrorCode::kFormatError, "result for unknown query " + std::to_string(r.query_id));
    out.push_back({r, *it->second});
  }
  return out;
}

}  // namespace pointloc
