// Command-line front end: every pipeline stage as its own subcommand.
//
// Exit codes: 0 success, 2 invalid arguments, 3 data or format error,
// 4 evaluation failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "pointloc/dataset.hpp"
#include "pointloc/errors.hpp"
#include "pointloc/evaluation.hpp"
#include "pointloc/parallel.hpp"
#include "pointloc/pipeline.hpp"
#include "pointloc/retrieval.hpp"

using namespace pointloc;
namespace fs = std::filesystem;

namespace {

constexpr int kExitInvalidArgs = 2;
constexpr int kExitData = 3;
constexpr int kExitEvaluation = 4;

struct EvaluationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

PipelineConfig load_config(const std::string& file) {
  return file.empty() ? PipelineConfig{} : read_config(file);
}

int thread_count(const PipelineConfig& c) { return c.threads > 0 ? c.threads : default_thread_count(); }

void generate(std::uint64_t seed, int scenes, const fs::path& out, const GenerationParams& params, int threads) {
  for (int i = 0; i < scenes; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%03d", i);
    const fs::path dir = scenes == 1 ? out : out / name;
    const DatasetManifest m = generate_dataset(seed + static_cast<std::uint64_t>(i), params, SceneParams{}, dir,
                                               threads > 0 ? threads : default_thread_count());
    std::cout << dir.string() << ": " << m.summary.points << " points, " << m.summary.poses << " poses, "
              << m.summary.categories << " categories, " << m.summary.instances << " instances\n";
  }
}

void train_vocab(const fs::path& dataset, int k, std::uint64_t seed, const std::string& config_file,
                 const fs::path& out) {
  const PipelineConfig config = load_config(config_file);
  const Dataset ds = load_dataset(dataset, {.rasters = true, .queries = false});
  const DetectorParams detector = detector_params(config);
  std::vector<const Frame*> frames;
  for (const auto& g : ds.groups)
    for (const auto& f : g.database_frames) frames.push_back(&f);
  std::vector<std::vector<BinaryDescriptor>> descriptors(frames.size());
  parallel_for(frames.size(), thread_count(config),
               [&](std::size_t i) { descriptors[i] = extract_features(frames[i]->rgb, detector).descriptors; });
  write_vocabulary(train_vocabulary(descriptors, k, seed), out);
  std::cout << "vocabulary of " << k << " words from " << frames.size() << " database frames -> " << out.string()
            << "\n";
}

void build_db(const fs::path& dataset, const fs::path& vocab, const std::string& config_file, const fs::path& out) {
  const PipelineConfig config = load_config(config_file);
  const Dataset ds = load_dataset(dataset, {.rasters = true, .queries = false});
  const LocalizationDatabase db =
      build_database(ds.groups, read_vocabulary(vocab), ds.manifest.params.intrinsics(), config);
  write_database(db, out);
  std::cout << "database of " << db.frames.size() << " frames (" << to_string(config.variant) << ") -> "
            << out.string() << "\n";
}

// Queries are read one point at a time so only one group's rasters are held.
std::vector<LocalizationResult> localize_dataset(const LocalizationDatabase& db, const fs::path& dataset,
                                                 const PipelineConfig& config) {
  const Dataset index = load_dataset(dataset, {.rasters = false, .queries = true});
  std::vector<LocalizationResult> results;
  for (const auto& g : index.groups) {
    const PointGroup group = read_point_group(dataset, g.point_id);
    const auto part = localize_all(db, {group}, config);
    results.insert(results.end(), part.begin(), part.end());
  }
  return results;
}

void localize_cmd(const fs::path& db_file, const fs::path& dataset, const std::string& config_file,
                  const fs::path& out) {
  const PipelineConfig config = load_config(config_file);
  const LocalizationDatabase db = read_database(db_file);
  const auto results = localize_dataset(db, dataset, config);
  write_results(results, out);
  int fallbacks = 0;
  for (const auto& r : results) fallbacks += r.fallback;
  std::cout << results.size() << " queries localized (" << to_string(config.variant) << " + "
            << to_string(config.method) << ", " << fallbacks << " fallbacks) -> " << out.string() << "\n";
}

void evaluate_cmd(const fs::path& results_file, const fs::path& dataset, const std::string& format,
                  const std::string& name, const std::string& hardware, const std::string& out) {
  const ReportFormat fmt = parse_report_format(format);
  const auto results = read_results(results_file);
  const Dataset ds = load_dataset(dataset, {.rasters = false, .queries = true});
  const auto evaluated = attach_ground_truth(results, ds.groups);
  const std::vector<RecallRow> table = {
      recall_at(evaluated, name.empty() ? results_file.stem().string() : name, default_thread_count())};
  TimingReport timing = timing_report(results, hardware);
  timing.retrieval_combined = true;
  if (out.empty())
    std::cout << format_report(table, &timing, fmt);
  else
    emit_report(table, &timing, fmt, out);
  if (!recall_is_consistent(table.front()))
    throw EvaluationFailure("recall table violates threshold monotonicity");
}

void bench_cmd(const fs::path& db_file, const fs::path& dataset, const std::string& config_file) {
  PipelineConfig config = load_config(config_file);
  config.record_timings = true;
  const LocalizationDatabase db = read_database(db_file);
  const auto results = localize_dataset(db, dataset, config);
  if (results.empty()) throw Error(ErrorCode::kInsufficientData, "dataset has no query frames");
  const TimingReport t = timing_report(results, config.hardware);
  std::printf("Average execution time of localization stages, sec (%s + %s, %d queries, %d threads)\n\n",
              to_string(config.variant), to_string(config.method), t.queries, thread_count(config));
  std::printf("| Stage | Time, s |\n|---|---|\n");
  const std::pair<const char*, double> rows[] = {
      {"Embedding extraction", t.embedding_extraction}, {"Embedding matching", t.embedding_matching},
      {"Feature extraction", t.feature_extraction},     {"Feature matching", t.feature_matching},
      {"Pose optimization", t.pose_optimization},       {"Overall", t.overall},
  };
  for (const auto& [stage, v] : rows) std::printf("| %s | %.4f |\n", stage, v);
  std::printf("\nHardware: %s\n", t.hardware.empty() ? "unspecified (set `hardware` in the config)" : t.hardware.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical RGB-D localization toolkit: synthetic dataset, retrieval, registration, evaluation"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  int scenes = 1, threads = 0;
  std::string out, dataset, vocab, config, db, results, format = "markdown", name, hardware;
  int k = 16;
  GenerationParams gen;

  auto* g = app.add_subcommand("generate", "Generate scenes and render their point-grid datasets");
  g->add_option("--seed", seed, "Scene seed (scene i uses seed + i)");
  g->add_option("--scenes", scenes, "Number of scenes")->check(CLI::PositiveNumber);
  g->add_option("--out", out, "Output directory")->required();
  g->add_option("--queries", gen.queries_per_point, "Query candidates per point")->check(CLI::Range(0, 1000));
  g->add_option("--noise", gen.noise_factor, "RGB noise factor")->check(CLI::NonNegativeNumber);
  g->add_option("--spacing", gen.grid_spacing, "Grid spacing, m")->check(CLI::PositiveNumber);
  g->add_option("--threads", threads, "Worker threads (0 = all cores)");

  auto* t = app.add_subcommand("train-vocab", "Train a binary vocabulary on a dataset's database frames");
  t->add_option("--dataset", dataset, "Scene directory")->required();
  t->add_option("--k", k, "Vocabulary size")->check(CLI::PositiveNumber);
  t->add_option("--seed", seed, "Training seed");
  t->add_option("--config", config, "Pipeline config (detector settings)");
  t->add_option("--out", out, "Vocabulary file")->required();

  auto* b = app.add_subcommand("build-db", "Precompute features and embeddings of the database frames");
  b->add_option("--dataset", dataset, "Scene directory")->required();
  b->add_option("--vocab", vocab, "Vocabulary file")->required();
  b->add_option("--config", config, "Pipeline config");
  b->add_option("--out", out, "Database file")->required();

  auto* l = app.add_subcommand("localize", "Localize every query frame of a dataset");
  l->add_option("--db", db, "Database file")->required();
  l->add_option("--dataset", dataset, "Scene directory")->required();
  l->add_option("--config", config, "Pipeline config");
  l->add_option("--out", out, "Results CSV")->required();

  auto* e = app.add_subcommand("evaluate", "Recall table and stage timings of a results file");
  e->add_option("--results", results, "Results CSV")->required();
  e->add_option("--dataset", dataset, "Scene directory with ground truth")->required();
  e->add_option("--format", format, "markdown | csv");
  e->add_option("--name", name, "Configuration name for the table row");
  e->add_option("--hardware", hardware, "Hardware description for the timing table");
  e->add_option("--out", out, "Write the report here instead of stdout");

  auto* n = app.add_subcommand("bench", "Per-stage mean execution time table");
  n->add_option("--db", db, "Database file")->required();
  n->add_option("--dataset", dataset, "Scene directory")->required();
  n->add_option("--config", config, "Pipeline config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kExitInvalidArgs;
  }

  try {
    if (*g) generate(seed, scenes, out, gen, threads);
    if (*t) train_vocab(dataset, k, seed, config, out);
    if (*b) build_db(dataset, vocab, config, out);
    if (*l) localize_cmd(db, dataset, config, out);
    if (*e) evaluate_cmd(results, dataset, format, name, hardware, out);
    if (*n) bench_cmd(db, dataset, config);
  } catch (const EvaluationFailure& err) {
    std::cerr << "evaluation failed: " << err.what() << "\n";
    return kExitEvaluation;
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return err.code() == ErrorCode::kInvalidArgument ? kExitInvalidArgs : kExitData;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitData;
  }
  return 0;
}
