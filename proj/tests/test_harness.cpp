#include "doctest.h"

#include <atomic>
#include <sstream>

#include "fixtures.hpp"
#include "tablesvc/harness.hpp"

using namespace tablesvc;

namespace {

template <typename Fn>
ErrorKind kind_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected tablesvc::Error");
  return ErrorKind::InvariantViolation;
}

// Small world and a short schedule so a full grid trains in well under a second.
nlohmann::json quick_config_json() {
  return {{"world", {{"preset", "default"}, {"duration_s", 90}, {"finish_cutoff_s", 60}, {"trash_rate_per_min", 2.0}}},
          {"episodes", 4},
          {"data_seed", 3},
          {"train", {{"schedule", nlohmann::json::array({nlohmann::json::array({1e-2, 3})})}, {"batch_size", 16}}},
          {"seeds", {1, 2, 3}}};
}

ExperimentConfig quick_config() { return experiment_config_from_json(quick_config_json()); }

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) out.push_back(line);
  return out;
}

void write_config(const std::filesystem::path& path, const nlohmann::json& j) {
  fixtures::write_bytes(path, j.dump(2));
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("feature grid has one row per source and aggregator") {
  const ExperimentConfig c = quick_config();
  const Benchmark b = load_benchmark(c);
  const ResultTable t = ablate_features(c, b);
  REQUIRE(t.rows.size() == 8);
  std::size_t runs = 0;
  for (const ResultRow& r : t.rows) runs += r.runs.size();
  CHECK(runs == 24);
  CHECK(t.key_columns == std::vector<std::string>{"input", "aggregator"});
  CHECK(t.rows.front().keys == std::vector<std::string>{"backbone", "avg"});
  CHECK(t.rows.back().keys == std::vector<std::string>{"table_info", "attention"});
  const auto lines = lines_of(table_csv(t));
  CHECK(lines.front() == "input,aggregator,f1_mean,f1_std,roc_mean,roc_std,seeds,signature");
  CHECK(lines.size() == 9);
  CHECK(lines[1].rfind("backbone,avg,", 0) == 0);
  CHECK(lines[1].find(",3,backbone:avg") != std::string::npos);
  CHECK(table_csv(ablate_features(c, b)) == table_csv(t));
  const std::string text = table_text(t);
  CHECK(text.find("f1 score") != std::string::npos);
  CHECK(text.find("ROC") != std::string::npos);
  CHECK(text.find("over 3 seeds") != std::string::npos);
}

TEST_CASE("combination table") {
  ExperimentConfig c = quick_config();
  c.seeds = {1};
  const Benchmark b = load_benchmark(c);
  const ResultTable t = ablate_combination(c, b);
  REQUIRE(t.rows.size() == 5);
  CHECK(t.rows[0].keys.front() == "(baseline)");
  bool winning_pair = false;
  for (const ResultRow& r : t.rows) winning_pair |= r.signature == "backbone:avg+table_info:attention";
  CHECK(winning_pair);
  c.combination_candidates.clear();
  const ResultTable base = ablate_combination(c, b);
  REQUIRE(base.rows.size() == 1);
  CHECK(base.rows[0].signature == "backbone:avg");
}

TEST_CASE("temporal table") {
  ExperimentConfig c = quick_config();
  c.seeds = {1, 2};
  const ResultTable t = ablate_temporal(c, load_benchmark(c));
  REQUIRE(t.rows.size() == 4);
  CHECK(t.rows[0].keys.front() == "image");
  CHECK(t.rows[1].keys.front() == "max");
  CHECK(t.rows[2].keys.front() == "avg");
  CHECK(t.rows[3].keys.front() == "attention");
  CHECK(t.rows[3].signature.find("temporal:attention/5") != std::string::npos);
  CHECK(t.rows[0].signature.find("temporal") == std::string::npos);
}

TEST_CASE("selection table") {
  ExperimentConfig c = quick_config();
  c.seeds = {1, 2};
  const Benchmark b = load_benchmark(c);
  std::vector<SelectionResult> picks;
  const ResultTable t = ablate_selection(c, b, &picks);
  REQUIRE(t.rows.size() == 12);
  CHECK(picks.size() == 9);
  std::vector<std::string> methods;
  for (std::size_t i = 0; i < 4; ++i) methods.push_back(t.rows[i].keys[0]);
  CHECK(methods == std::vector<std::string>{"all", "random", "uncertainty", "diversity"});
  CHECK(t.rows[0].keys[1] == "100%");
  CHECK(t.rows[1].keys[1] == "10%");
  CHECK(t.rows[5].keys[1] == "25%");
  CHECK(t.rows[9].keys[1] == "50%");
  CHECK(t.rows[4].runs.size() == 2);
  for (const SelectionResult& s : picks) CHECK(s.chosen.size() == s.budget);
  CHECK(table_csv(ablate_selection(c, b)) == table_csv(t));
}

TEST_CASE("projection comparison") {
  ExperimentConfig c = quick_config();
  c.seeds = {4};
  const ResultTable t = ablate_projection(c, load_benchmark(c));
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0].keys.front() == "frozen");
  CHECK(t.rows[1].keys.front() == "trainable");
  CHECK(t.rows[0].signature == "backbone:avg|proj:16");
}

TEST_CASE("mean and sample standard deviation") {
  ResultRow row;
  row.runs = {{0.5, 0.7}, {0.7, std::nullopt}, {0.9, 0.9}};
  const MeanStd f = f1_stats(row);
  CHECK(f.mean == doctest::Approx(0.7));
  CHECK(f.std == doctest::Approx(0.2));
  const MeanStd a = auc_stats(row);
  CHECK(a.n == 2);
  CHECK(a.mean == doctest::Approx(0.8));
  ResultTable t{"t", {"k"}, {{{"x"}, "sig", {{0.5, std::nullopt}}}}};
  CHECK(lines_of(table_csv(t))[1] == "x,0.500000,0.000000,NA,NA,1,sig");
}

TEST_CASE("parallel runner keeps job order for failures") {
  std::atomic<int> ran{0};
  std::vector<std::function<void()>> jobs;
  for (int i = 0; i < 6; ++i) {
    jobs.emplace_back([&ran, i] {
      ++ran;
      if (i == 2) throw Error(ErrorKind::InvalidDim, "two");
      if (i == 4) throw Error(ErrorKind::TooLarge, "four");
    });
  }
  CHECK(kind_of([&] { run_parallel(jobs); }) == ErrorKind::InvalidDim);
  CHECK(ran == 6);
}

TEST_CASE("experiment config validation") {
  auto with = [](const char* key, nlohmann::json value) {
    nlohmann::json j = quick_config_json();
    j[key] = std::move(value);
    return j;
  };
  CHECK(kind_of([&] { experiment_config_from_json(with("seeds", nlohmann::json::array())); }) ==
        ErrorKind::InvalidConfig);
  CHECK(kind_of([&] { experiment_config_from_json(with("episodes", 1)); }) == ErrorKind::InvalidConfig);
  CHECK(kind_of([&] { experiment_config_from_json(with("episodes", "many")); }) == ErrorKind::InvalidConfig);
  CHECK(kind_of([&] { experiment_config_from_json(with("selection", {{"budgets", {0.0}}})); }) ==
        ErrorKind::InvalidConfig);
  CHECK(kind_of([&] { experiment_config_from_json(with("features", {{"sources", {"pixels"}}})); }) ==
        ErrorKind::InvalidConfig);
  CHECK(kind_of([] { load_experiment_config("/nonexistent/tablesvc.json"); }) == ErrorKind::IoFailure);
  const ExperimentConfig c = quick_config();
  CHECK(c.world.duration_s == 90);
  CHECK(c.train.total_epochs() == 3);
  CHECK(c.seeds == std::vector<std::uint64_t>{1, 2, 3});
}

TEST_CASE("gradcheck passes and the corruption hook fails it") {
  const GradcheckSummary ok = run_gradcheck(1);
  CHECK(ok.reports.size() == kGradcheckConfigs);
  CHECK(ok.passed);
  CHECK(ok.max_rel_error < kGradcheckTolerance);
  const GradcheckSummary bad = run_gradcheck(1, 0.5, 3);
  CHECK_FALSE(bad.passed);
  CHECK_FALSE(bad.reports[bad.worst_config].worst_path.empty());
}

TEST_CASE("cli exit codes and outputs") {
  fixtures::TempDir tmp("cli");
  const auto cfg = tmp / "config.json";
  write_config(cfg, quick_config_json());

  CHECK(run_cli({"synth", "--config", cfg.string(), "--out", (tmp / "data").string()}) == 0);
  CHECK(std::filesystem::exists(tmp / "data" / "train" / "features.bin"));
  CHECK(std::filesystem::exists(tmp / "data" / "test" / "labels.csv"));
  CHECK(std::filesystem::exists(tmp / "data" / "worldconfig.json"));

  nlohmann::json with_data = quick_config_json();
  with_data["data_dir"] = (tmp / "data").string();
  write_config(tmp / "with_data.json", with_data);
  CHECK(run_cli({"train", "--config", (tmp / "with_data.json").string(), "--out", (tmp / "run").string()}) == 0);
  CHECK(std::filesystem::exists(tmp / "run" / "model.ckpt"));
  CHECK(lines_of(fixtures::read_bytes(tmp / "run" / "history.csv")).size() == 4);
  CHECK(run_cli({"eval", "--config", (tmp / "with_data.json").string(), "--out", (tmp / "run").string()}) == 0);
  CHECK(std::filesystem::exists(tmp / "run" / "report.json"));

  CHECK(run_cli({"gradcheck", "--out", (tmp / "gc").string()}) == 0);
  CHECK(lines_of(fixtures::read_bytes(tmp / "gc" / "gradcheck.csv")).size() == kGradcheckConfigs + 1);
  nlohmann::json corrupt = quick_config_json();
  corrupt["gradcheck_corrupt"] = 0.5;
  write_config(tmp / "corrupt.json", corrupt);
  CHECK(run_cli({"gradcheck", "--config", (tmp / "corrupt.json").string(), "--out", (tmp / "gc2").string()}) == 1);

  CHECK(run_cli({"synth", "--config", (tmp / "missing.json").string(), "--out", (tmp / "x").string()}) == 2);
  fixtures::write_bytes(tmp / "broken.json", "{ not json");
  CHECK(run_cli({"synth", "--config", (tmp / "broken.json").string()}) == 2);
  CHECK(run_cli({"train", "--config", cfg.string(), "--label-mode", "sometimes"}) == 2);
  CHECK(run_cli({"ablate-selection", "--config", cfg.string(), "--budget", "1.5"}) == 2);
  CHECK(run_cli({"train", "--seeds", "1,x"}) == 2);
  CHECK(run_cli({"frobnicate"}) == 2);
  CHECK(run_cli({"synth", "--no-such-flag"}) == 2);
  CHECK(run_cli({"eval", "--config", cfg.string(), "--out", (tmp / "nowhere").string()}) == 2);
}

TEST_CASE("ablation commands write tables and selections") {
  fixtures::TempDir tmp("cli_ablate");
  nlohmann::json j = quick_config_json();
  j["seeds"] = {1};
  write_config(tmp / "c.json", j);
  const std::string cfg = (tmp / "c.json").string();
  const std::string out = tmp.path().string();
  CHECK(run_cli({"ablate-combo", "--config", cfg, "--out", out}) == 0);
  CHECK(std::filesystem::exists(tmp / "combination.csv"));
  CHECK(std::filesystem::exists(tmp / "combination.txt"));
  CHECK(run_cli({"ablate-selection", "--config", cfg, "--out", out, "--budget", "0.25"}) == 0);
  const auto rows = lines_of(fixtures::read_bytes(tmp / "selection.csv"));
  CHECK(rows.size() == 5);
  CHECK(std::filesystem::exists(tmp / "selections" / "selection_diversity_25.json"));
  CHECK(std::filesystem::exists(tmp / "selections" / "selection_uncertainty_25.json"));
  CHECK(run_cli({"ablate-temporal", "--config", cfg, "--out", out, "--label-mode", "exclusive"}) == 0);
  CHECK(lines_of(fixtures::read_bytes(tmp / "temporal.csv")).size() == 5);
}

}  // TEST_SUITE
