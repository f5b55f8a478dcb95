#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pointloc/pipeline.hpp"

namespace pointloc {

/// A success threshold; translation-only thresholds have degrees < 0.
struct RecallThreshold {
  double meters;
  double degrees;

  bool translation_only() const { return degrees < 0; }
  std::string label() const;  // "(1m,10°)" or "(1m)"
};

/// Column order of every recall table.
inline constexpr std::array<RecallThreshold, 8> kRecallThresholds = {{
    {5.0, 20.0}, {1.0, 10.0}, {0.5, 5.0}, {0.25, 2.0},
    {5.0, -1.0}, {1.0, -1.0}, {0.5, -1.0}, {0.25, -1.0},
}};

struct EvaluatedQuery {
  LocalizationResult result;
  Pose ground_truth;
};

struct RecallRow {
  std::string name;
  std::array<double, 8> recall{};  // same order as kRecallThresholds
  int queries = 0;

  bool operator==(const RecallRow&) const = default;
};

/// Fraction of queries whose errors do not exceed each threshold (<=).
/// Throws invalid-argument on an empty input.
RecallRow recall_at(std::span<const EvaluatedQuery> queries, const std::string& name, int threads = 1);

/// Combined recalls non-increasing as thresholds tighten, likewise the
/// translation-only ones, and each combined recall <= its translation-only
/// counterpart.
bool recall_is_consistent(const RecallRow& row);

struct TimingReport {
  double embedding_extraction = 0;
  double embedding_matching = 0;
  double feature_extraction = 0;
  double feature_matching = 0;
  double pose_optimization = 0;
  double overall = 0;
  int queries = 0;
  std::string hardware;
  /// Results files keep one retrieval column: it is carried in
  /// embedding_matching and reported as a single row.
  bool retrieval_combined = false;
};

/// Per-stage means in input order. Throws invalid-argument on an empty input.
TimingReport timing_report(std::span<const LocalizationResult> results, const std::string& hardware);

enum class ReportFormat { kMarkdown, kCsv };
/// markdown | csv; throws invalid-argument.
ReportFormat parse_report_format(const std::string& s);

/// Recall table (one row per configuration), then the timing table when
/// given. Markdown uses 3 decimals, CSV full precision.
std::string format_report(std::span<const RecallRow> table, const TimingReport* timing, ReportFormat format);
/// Throws io-error when the file cannot be written.
void emit_report(std::span<const RecallRow> table, const TimingReport* timing, ReportFormat format,
                 const std::filesystem::path& file);
/// Recall section of a CSV report.
std::vector<RecallRow> read_recall_csv(const std::filesystem::path& file);

/// Pairs results with ground-truth query poses by query id. Throws
/// format-error for a result whose query is unknown.
std::vector<EvaluatedQuery> attach_ground_truth(std::span<const LocalizationResult> results,
                                                const std::vector<PointGroup>& groups);

}  // namespace pointloc
