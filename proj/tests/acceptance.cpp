// Acceptance suite: prints one PASS/FAIL line per criterion and exits 1 if any
// criterion fails. Tolerances and instance counts are fixed here.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "tablesvc/harness.hpp"
#include "tablesvc/rng.hpp"

using namespace tablesvc;

namespace {

constexpr double kGradTolerance = 1e-4;
constexpr double kGradSeconds = 10.0;
constexpr int kAttentionInputs = 1000;
constexpr double kWeightSumTolerance = 1e-9;
constexpr double kAveragePoolTolerance = 1e-12;
constexpr int kKCenterInstances = 100;
constexpr double kKCenterSeconds = 30.0;
constexpr int kAucInstances = 100;
constexpr int kF1Instances = 100;
constexpr double kF1ExampleTolerance = 1e-12;
constexpr int kCombinerQuadruples = 1000;
constexpr double kLearnabilityF1 = 0.95;
constexpr double kLearnabilitySeconds = 60.0;
constexpr int kLearnabilityEpisodes = 150;
constexpr double kLearnabilityFps = 0.05;
constexpr int kTrendSeeds = 20;
constexpr double kTrendBudget = 0.25;
constexpr int kDatasetRoundTrips = 50;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Silences std::cout for the lifetime of the guard.
class MuteStdout {
 public:
  MuteStdout() : old_(std::cout.rdbuf(sink_.rdbuf())) {}
  ~MuteStdout() { std::cout.rdbuf(old_); }

 private:
  std::ostringstream sink_;
  std::streambuf* old_;
};

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c);
  return buf;
}

Outcome gradient_correctness() {
  const auto start = Clock::now();
  const GradcheckSummary s = run_gradcheck(1);
  const double elapsed = seconds_since(start);
  const bool pass = s.reports.size() == 20 && s.max_rel_error < kGradTolerance && elapsed < kGradSeconds;
  return {pass, fmt("%.0f configurations, max relative error %.3g, %.2f s", static_cast<double>(s.reports.size()),
                    s.max_rel_error, elapsed)};
}

Outcome attention_soundness() {
  Rng rng(101);
  int bad = 0;
  double worst_sum = 0.0, worst_avg = 0.0;
  for (int trial = 0; trial < kAttentionInputs; ++trial) {
    const std::size_t n = 1 + rng.below(16);
    const std::size_t d = 1 + rng.below(8);
    Matrix m(n, d);
    for (double& x : m.data) x = rng.normal() * 4.0;
    AttentionParams p;
    p.a.resize(d);
    for (double& x : p.a) x = rng.normal() * 2.0;
    p.b = rng.normal();
    const AttentionResult r = simple_attention(m, p);
    double sum = 0.0;
    for (double w : r.weights) {
      if (!(w >= 0.0)) ++bad;
      sum += w;
    }
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));

    AttentionParams zero{Vector(d, 0.0), rng.normal()};
    const Vector att = simple_attention(m, zero).output;
    const Vector avg = average_pool(m).vector;
    for (std::size_t c = 0; c < d; ++c) worst_avg = std::max(worst_avg, std::abs(att[c] - avg[c]));
  }
  const bool pass = bad == 0 && worst_sum <= kWeightSumTolerance && worst_avg <= kAveragePoolTolerance;
  return {pass, fmt("%.0f negative weights, max |sum-1| %.3g, max |a=0 - avg| %.3g", bad, worst_sum, worst_avg)};
}

Outcome kcenter_guarantee() {
  const auto start = Clock::now();
  Rng rng(303);
  int violations = 0;
  double worst_ratio = 0.0;
  for (int trial = 0; trial < kKCenterInstances; ++trial) {
    const std::size_t n = 1 + rng.below(12);
    const std::size_t k = 1 + rng.below(std::min<std::size_t>(4, n));
    Matrix pool(n, 1 + rng.below(3));
    for (double& x : pool.data) x = rng.uniform(-10.0, 10.0);
    const double greedy = *select_diversity(pool, k).coverage_radius;
    const double optimal = brute_force_kcenter(pool, k).radius;
    if (!(greedy <= 2.0 * optimal)) ++violations;
    if (optimal > 0.0) worst_ratio = std::max(worst_ratio, greedy / optimal);
  }
  const double elapsed = seconds_since(start);
  return {violations == 0 && elapsed < kKCenterSeconds,
          fmt("%.0f violations, worst greedy/optimal %.3f, %.2f s", violations, worst_ratio, elapsed)};
}

Outcome auc_equivalence() {
  Rng rng(404);
  int mismatches = 0;
  for (int trial = 0; trial < kAucInstances; ++trial) {
    const std::size_t n = 2 + rng.below(49);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Few distinct levels so ties are common.
      scores[i] = static_cast<double>(rng.below(6)) / 5.0;
      labels[i] = static_cast<int>(rng.below(2));
    }
    labels[0] = 1;
    labels[n - 1] = 0;
    if (roc_auc(scores, labels) != oracle::pairwise_auc(scores, labels)) ++mismatches;
  }
  const double example = roc_auc(std::vector<double>{0.9, 0.8, 0.4, 0.3}, std::vector<int>{1, 0, 1, 0});
  return {mismatches == 0 && example == 0.75, fmt("%.0f mismatches, example %.6g", mismatches, example)};
}

Outcome f1_equivalence() {
  Rng rng(505);
  int mismatches = 0;
  for (int trial = 0; trial < kF1Instances; ++trial) {
    const std::size_t n = 1 + rng.below(60);
    std::vector<ServiceLabel> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = {rng.bernoulli(0.5), rng.bernoulli(0.3), rng.bernoulli(0.2), rng.bernoulli(0.1)};
      pred[i] = {rng.bernoulli(0.5), rng.bernoulli(0.3), rng.bernoulli(0.2), rng.bernoulli(0.1)};
    }
    const F1Summary s = f1_scores(confusion_counts(truth, pred));
    double macro = 0.0;
    for (std::size_t c = 0; c < 4; ++c) {
      std::vector<int> t(n), p(n);
      for (std::size_t i = 0; i < n; ++i) {
        t[i] = truth[i].flags()[c];
        p[i] = pred[i].flags()[c];
      }
      const oracle::HandCounts h = oracle::count(t, p);
      const double expected = oracle::hand_f1(h.tp, h.fp, h.fn);
      if (std::abs(s.per_class[c].f1 - expected) > 1e-12) ++mismatches;
      macro += expected;
    }
    if (std::abs(s.macro_f1 - macro / 4.0) > 1e-12) ++mismatches;
  }
  const double example = f1_score({2, 1, 1, 0}).f1;
  const double err = std::abs(example - 2.0 / 3.0);
  return {mismatches == 0 && err <= kF1ExampleTolerance, fmt("%.0f mismatches, |example - 2/3| %.3g", mismatches, err)};
}

Outcome combiner() {
  Rng rng(606);
  int mismatches = 0;
  for (int trial = 0; trial < kCombinerQuadruples; ++trial) {
    const MultitaskLossParts p{rng.uniform(0.0, 10.0), rng.uniform(0.0, 10.0), rng.uniform(0.0, 10.0),
                               rng.uniform(0.0, 10.0)};
    if (combine_multitask_loss(p) != p.loss_c + p.loss_bb + p.loss_a + p.loss_prog) ++mismatches;
  }
  const double example = combine_multitask_loss({1, 2, 3, 4});
  return {mismatches == 0 && example == 10.0, fmt("%.0f mismatches, (1,2,3,4) -> %.17g", mismatches, example)};
}

Outcome frozen_contract() {
  Dims d;
  d.h = d.w = 2;
  d.c = 4;
  d.t = 3;
  d.r = 3;
  d.d = 4;
  const Dataset ds = make_random_dataset(d, 40, 4, 77);
  int changed = 0;
  int runs = 0;
  for (const char* spec : {"backbone:avg", "encoder:attention", "table_info:max"}) {
    for (std::size_t proj : {3, 8}) {
      ModelSignature sig;
      sig.sources = {parse_source_spec(spec)};
      sig.projection_dim = proj;
      TrainConfig c;
      c.schedule = {{1e-2, 4}, {1e-3, 2}};
      c.batch_size = 8;
      c.seed = 5 + proj;
      c.frozen_projection = true;
      const Model init = init_model(sig, d, c.label_mode, c.seed, true);
      const Model trained = train(ds, sig, c).model;
      const Matrix& a = init.params.projection->matrix;
      const Matrix& b = trained.params.projection->matrix;
      if (a.data.size() != b.data.size() ||
          std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) != 0) {
        ++changed;
      }
      ++runs;
    }
  }
  return {changed == 0, fmt("%.0f of %.0f trained projections differ from initialization", changed, runs)};
}

Outcome learnability() {
  WorldConfig world = WorldConfig::preset("clean");
  world.fps = kLearnabilityFps;
  const Benchmark b = build_benchmark(world, kLearnabilityEpisodes, 8);
  ModelSignature sig;
  sig.sources = {{Source::TableInfo, Aggregator::Attention}};
  TrainConfig c;  // service schedule
  c.batch_size = 1;
  c.seed = 1;
  const auto start = Clock::now();
  const TrainResult trained = train(b.train, sig, c);
  const MetricsReport r = evaluate(trained.model, b.test);
  const double elapsed = seconds_since(start);
  return {r.macro_f1 >= kLearnabilityF1 && elapsed < kLearnabilitySeconds,
          fmt("macro F1 %.4f on %.0f train frames, %.2f s", r.macro_f1, static_cast<double>(b.train.size()), elapsed)};
}

Outcome trend() {
  ExperimentConfig config;
  config.world = WorldConfig::preset("redundant");
  config.episodes = 9;
  config.data_seed = 1;
  config.budgets = {kTrendBudget};
  config.seeds.clear();
  for (int s = 1; s <= kTrendSeeds; ++s) config.seeds.push_back(static_cast<std::uint64_t>(s));
  const Benchmark b = load_benchmark(config);
  const ResultTable t = ablate_selection(config, b);
  double diversity = -1.0, random = -1.0;
  std::vector<std::string> methods;
  for (const ResultRow& row : t.rows) {
    methods.push_back(row.keys[0]);
    if (row.runs.size() != static_cast<std::size_t>(kTrendSeeds)) return {false, "missing seeds in " + row.keys[0]};
    if (row.keys[0] == "diversity") diversity = f1_stats(row).mean;
    if (row.keys[0] == "random") random = f1_stats(row).mean;
  }
  const bool all_four = methods == std::vector<std::string>{"all", "random", "uncertainty", "diversity"};
  return {all_four && diversity >= random && random >= 0.0,
          fmt("diversity %.4f vs random %.4f mean macro F1 over %.0f seeds", diversity, random, kTrendSeeds) +
              (all_four ? "" : ", method rows incomplete")};
}

Outcome cli_determinism() {
  fixtures::TempDir tmp("acceptance_cli");
  const nlohmann::json config = {
      {"world", {{"preset", "default"}, {"duration_s", 120}, {"finish_cutoff_s", 90}, {"trash_rate_per_min", 2.0}}},
      {"episodes", 4},
      {"data_seed", 2},
      {"train", {{"schedule", nlohmann::json::array({nlohmann::json::array({1e-2, 3})})}, {"batch_size", 16}}},
      {"seeds", {1, 2}}};
  fixtures::write_bytes(tmp / "config.json", config.dump(2));
  const std::string cfg = (tmp / "config.json").string();

  const std::vector<std::vector<std::string>> steps{
      {"synth"},          {"train"},          {"eval"},          {"ablate-features"},
      {"ablate-combo"},   {"ablate-temporal"}, {"ablate-selection"}, {"gradcheck"},
  };
  std::vector<std::string> trees;
  for (int pass = 0; pass < 2; ++pass) {
    const auto out = tmp / ("run" + std::to_string(pass));
    MuteStdout mute;
    for (const auto& step : steps) {
      std::vector<std::string> args = step;
      const auto dir = out / step.front();
      for (const std::string& flag : {std::string("--config"), cfg, std::string("--out"), dir.string()}) {
        args.push_back(flag);
      }
      if (step.front() == "eval") args.back() = (out / "train").string();
      if (run_cli(args) != 0) return {false, "command " + step.front() + " failed"};
    }
    trees.push_back(fixtures::tree_bytes(out));
  }
  std::size_t files = 0;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(tmp / "run0")) {
    const auto ext = entry.path().extension();
    files += entry.is_regular_file() && (ext == ".csv" || ext == ".json");
  }
  return {trees[0] == trees[1] && files > 0,
          fmt("%.0f commands, %.0f CSV/JSON files, reruns ", static_cast<double>(steps.size()),
              static_cast<double>(files)) +
              (trees[0] == trees[1] ? "identical" : "differ")};
}

Outcome dataset_io() {
  fixtures::TempDir tmp("acceptance_io");
  Dims d;
  d.h = d.w = 2;
  d.c = 3;
  d.t = 2;
  d.r = 3;
  d.d = 3;
  int mismatches = 0;
  for (int seed = 1; seed <= kDatasetRoundTrips; ++seed) {
    const auto first = tmp / ("a" + std::to_string(seed));
    const auto second = tmp / ("b" + std::to_string(seed));
    save_dataset(make_random_dataset(d, 3 + seed % 7, 1 + seed % 3, static_cast<std::uint64_t>(seed)), first);
    save_dataset(load_dataset(first), second);
    if (fixtures::tree_bytes(first) != fixtures::tree_bytes(second)) ++mismatches;
  }
  const auto victim = tmp / "a1";
  std::string blob = fixtures::read_bytes(victim / "features.bin");
  blob.resize(blob.size() - 4);
  fixtures::write_bytes(victim / "features.bin", blob);
  bool rejected = false;
  try {
    load_dataset(victim);
  } catch (const Error& e) {
    rejected = e.kind() == ErrorKind::ManifestMismatch;
  }
  return {mismatches == 0 && rejected, fmt("%.0f round-trip mismatches, truncated blob ", mismatches) +
                                           (rejected ? "rejected" : "accepted")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"attention soundness", attention_soundness},
      {"k-center guarantee", kcenter_guarantee},
      {"auc oracle equivalence", auc_equivalence},
      {"f1 oracle equivalence", f1_equivalence},
      {"multitask combiner", combiner},
      {"frozen projection", frozen_contract},
      {"learnability", learnability},
      {"selection trend", trend},
      {"cli determinism", cli_determinism},
      {"dataset io", dataset_io},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2zu %-24s %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
