#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tablesvc/learner.hpp"
#include "tablesvc/metrics.hpp"
#include "tablesvc/selection.hpp"
#include "tablesvc/synthworld.hpp"

namespace tablesvc {

// Everything an ablation run needs; loaded from --config JSON.
struct ExperimentConfig {
  WorldConfig world = WorldConfig::preset("default");
  int episodes = 9;
  std::uint64_t data_seed = 1;
  std::optional<std::string> data_dir;  // holds train/ and test/; generated in memory when unset

  TrainConfig train;
  ModelSignature signature{{{Source::Backbone, Aggregator::Avg}}, std::nullopt, kDefaultWindow, 0};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

  std::vector<Source> feature_sources{Source::Backbone, Source::Encoder, Source::Decoder, Source::TableInfo};
  std::vector<Aggregator> feature_aggregators{Aggregator::Avg, Aggregator::Attention};

  SourceSpec combination_base{Source::Backbone, Aggregator::Avg};
  std::vector<SourceSpec> combination_candidates{{Source::Encoder, Aggregator::Avg},
                                                 {Source::Encoder, Aggregator::Attention},
                                                 {Source::Decoder, Aggregator::Attention},
                                                 {Source::TableInfo, Aggregator::Attention}};

  ModelSignature temporal_base{{{Source::Backbone, Aggregator::Avg}, {Source::TableInfo, Aggregator::Attention}},
                               std::nullopt, kDefaultWindow, 0};
  std::vector<Aggregator> temporal_modes{Aggregator::Max, Aggregator::Avg, Aggregator::Attention};

  // Width of the projection layer in the frozen-vs-trainable comparison;
  // 0 skips that table.
  std::size_t projection_dim = 16;

  std::vector<SelectionMethod> selection_methods{SelectionMethod::Random, SelectionMethod::Uncertainty,
                                                 SelectionMethod::Diversity};
  std::vector<double> budgets{0.10, 0.25, 0.50};
  double warm_start = 0.10;

  // Added to every analytic gradient in gradcheck; nonzero only in tests.
  double gradcheck_corrupt = 0.0;

  std::optional<std::string> checkpoint;
  std::string out_dir = "results";
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);

// Train/test pair from data_dir, or from build_benchmark otherwise.
Benchmark load_benchmark(const ExperimentConfig& config);

struct RunScore {
  double macro_f1 = 0.0;
  std::optional<double> macro_auc;
};

// Trains `sig` on `train` (optionally restricted to `subset`) with the
// experiment's train config and `seed`, then evaluates on `test`.
RunScore train_and_score(const Dataset& train, const Dataset& test, const ModelSignature& sig,
                         const TrainConfig& config, std::uint64_t seed);

struct ResultRow {
  std::vector<std::string> keys;  // one per key column
  std::string signature;
  std::vector<RunScore> runs;     // one per seed, in seed order
};

struct ResultTable {
  std::string title;
  std::vector<std::string> key_columns;
  std::vector<ResultRow> rows;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

MeanStd f1_stats(const ResultRow& row);
MeanStd auc_stats(const ResultRow& row);  // over runs with a defined AUC

std::string table_csv(const ResultTable& table);
std::string table_text(const ResultTable& table);

ResultTable ablate_features(const ExperimentConfig& config, const Benchmark& bench);
ResultTable ablate_combination(const ExperimentConfig& config, const Benchmark& bench);
ResultTable ablate_temporal(const ExperimentConfig& config, const Benchmark& bench);
// `signature` plus a projection layer, kept frozen versus trained.
ResultTable ablate_projection(const ExperimentConfig& config, const Benchmark& bench);
// Also returns the first seed's selection per (budget, method) for export.
ResultTable ablate_selection(const ExperimentConfig& config, const Benchmark& bench,
                             std::vector<SelectionResult>* selections = nullptr);

// Pool feature space for diversity selection: each source pooled without
// parameters (attended sources fall back to the average).
Matrix pool_features(const Dataset& dataset, const ModelSignature& sig);

struct GradcheckSummary {
  std::vector<GradCheckReport> reports;  // one per configuration
  double max_rel_error = 0.0;
  std::size_t worst_config = 0;
  bool passed = false;
};

inline constexpr double kGradcheckTolerance = 1e-4;
inline constexpr std::size_t kGradcheckConfigs = 20;

// Random dataset with valid simplices; consecutive frame ids per episode.
Dataset make_random_dataset(const Dims& dims, std::size_t frames, std::size_t episodes, std::uint64_t seed);

// Seeded mix of sources, aggregators, temporal modes, projection and label mode.
GradcheckSummary run_gradcheck(std::uint64_t seed, double corrupt = 0.0,
                               std::size_t configs = kGradcheckConfigs);

// Runs `jobs` on up to TABLESVC_THREADS threads; rethrows the first failure
// in job order.
void run_parallel(const std::vector<std::function<void()>>& jobs);

// `tablesvc <command> [flags]`; returns the process exit code.
int run_cli(int argc, char** argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace tablesvc
