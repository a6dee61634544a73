#include "tablesvc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "tablesvc/rng.hpp"

namespace tablesvc {

using json = nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

ExperimentConfig experiment_config_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, "experiment config must be a JSON object");
  ExperimentConfig c;
  try {
    if (j.contains("world_file")) c.world = load_world_config(j["world_file"].get<std::string>());
    if (j.contains("world")) c.world = world_config_from_json(j["world"]);
    c.episodes = j.value("episodes", c.episodes);
    c.data_seed = j.value("data_seed", c.data_seed);
    if (j.contains("data_dir") && !j["data_dir"].is_null()) c.data_dir = j["data_dir"].get<std::string>();
    if (j.contains("train")) c.train = train_config_from_json(j["train"]);
    if (j.contains("signature")) c.signature = signature_from_json(j["signature"]);
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("features")) {
      const json& f = j["features"];
      if (f.contains("sources")) {
        c.feature_sources.clear();
        for (const auto& s : f["sources"]) c.feature_sources.push_back(parse_source(s.get<std::string>()));
      }
      if (f.contains("aggregators")) {
        c.feature_aggregators.clear();
        for (const auto& a : f["aggregators"]) c.feature_aggregators.push_back(parse_aggregator(a.get<std::string>()));
      }
    }
    if (j.contains("combination")) {
      const json& f = j["combination"];
      if (f.contains("base")) c.combination_base = parse_source_spec(f["base"].get<std::string>());
      if (f.contains("candidates")) {
        c.combination_candidates.clear();
        for (const auto& s : f["candidates"]) c.combination_candidates.push_back(parse_source_spec(s.get<std::string>()));
      }
    }
    if (j.contains("temporal")) {
      const json& f = j["temporal"];
      if (f.contains("base")) c.temporal_base = signature_from_json(f["base"]);
      if (f.contains("modes")) {
        c.temporal_modes.clear();
        for (const auto& m : f["modes"]) c.temporal_modes.push_back(parse_aggregator(m.get<std::string>()));
      }
      c.temporal_base.window = f.value("window", c.temporal_base.window);
    }
    c.projection_dim = j.value("projection_dim", c.projection_dim);
    c.gradcheck_corrupt = j.value("gradcheck_corrupt", c.gradcheck_corrupt);
    if (j.contains("selection")) {
      const json& f = j["selection"];
      if (f.contains("methods")) {
        c.selection_methods.clear();
        for (const auto& m : f["methods"]) c.selection_methods.push_back(parse_selection_method(m.get<std::string>()));
      }
      if (f.contains("budgets")) c.budgets = f["budgets"].get<std::vector<double>>();
      c.warm_start = f.value("warm_start", c.warm_start);
    }
    if (j.contains("checkpoint")) c.checkpoint = j["checkpoint"].get<std::string>();
    c.out_dir = j.value("out", c.out_dir);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("experiment config: ") + e.what());
  }
  if (c.seeds.empty()) throw Error(ErrorKind::InvalidConfig, "seed list must not be empty");
  if (c.episodes < 2) throw Error(ErrorKind::InvalidConfig, "episodes must be >= 2");
  for (double b : c.budgets) {
    if (!(b > 0.0 && b <= 1.0)) throw Error(ErrorKind::InvalidConfig, "budgets must be in (0, 1]");
  }
  if (!(c.warm_start > 0.0 && c.warm_start < 1.0)) throw Error(ErrorKind::InvalidConfig, "warm_start must be in (0, 1)");
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::IoFailure, "cannot open config " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::InvalidConfig, path + ": " + e.what());
  }
  return experiment_config_from_json(j);
}

Benchmark load_benchmark(const ExperimentConfig& config) {
  if (config.data_dir) {
    Benchmark bench;
    bench.train = load_dataset(fs::path(*config.data_dir) / "train");
    bench.test = load_dataset(fs::path(*config.data_dir) / "test");
    return bench;
  }
  return build_benchmark(config.world, config.episodes, config.data_seed);
}

// ---------------------------------------------------------------------------
// Runs and tables

RunScore train_and_score(const Dataset& train_set, const Dataset& test, const ModelSignature& sig,
                         const TrainConfig& config, std::uint64_t seed) {
  TrainConfig c = config;
  c.seed = seed;
  const TrainResult trained = train(train_set, sig, c);
  const MetricsReport report = evaluate(trained.model, test);
  return {report.macro_f1, report.macro_auc};
}

void run_parallel(const std::vector<std::function<void()>>& jobs) {
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("TABLESVC_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) threads = static_cast<std::size_t>(v);
  }
  threads = std::min(threads, jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  if (threads <= 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      try {
        jobs[i]();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
          try {
            jobs[i]();
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (std::thread& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

namespace {

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd out;
  out.n = values.size();
  if (values.empty()) return out;
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

// Runs every (row, seed) cell, filling rows[r].runs in seed order.
void run_grid(std::vector<ResultRow>& rows, const std::vector<std::function<RunScore(std::uint64_t)>>& cells,
              const std::vector<std::uint64_t>& seeds) {
  std::vector<std::function<void()>> jobs;
  for (ResultRow& row : rows) row.runs.assign(seeds.size(), {});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      jobs.emplace_back([&, r, s] { rows[r].runs[s] = cells[r](seeds[s]); });
    }
  }
  run_parallel(jobs);
}

TrainConfig train_config_for(const ExperimentConfig& config) { return config.train; }

}  // namespace

MeanStd f1_stats(const ResultRow& row) {
  std::vector<double> v;
  for (const RunScore& r : row.runs) v.push_back(r.macro_f1);
  return mean_std(v);
}

MeanStd auc_stats(const ResultRow& row) {
  std::vector<double> v;
  for (const RunScore& r : row.runs) {
    if (r.macro_auc) v.push_back(*r.macro_auc);
  }
  return mean_std(v);
}

std::string table_csv(const ResultTable& table) {
  std::string out;
  for (const std::string& k : table.key_columns) out += k + ",";
  out += "f1_mean,f1_std,roc_mean,roc_std,seeds,signature\n";
  for (const ResultRow& row : table.rows) {
    for (const std::string& k : row.keys) out += k + ",";
    const MeanStd f1 = f1_stats(row);
    const MeanStd auc = auc_stats(row);
    out += fmt("%.6f", f1.mean) + "," + fmt("%.6f", f1.std) + ",";
    out += (auc.n ? fmt("%.6f", auc.mean) + "," + fmt("%.6f", auc.std) : std::string("NA,NA")) + ",";
    out += std::to_string(row.runs.size()) + "," + row.signature + "\n";
  }
  return out;
}

std::string table_text(const ResultTable& table) {
  std::vector<std::string> header = table.key_columns;
  header.push_back("f1 score");
  header.push_back("ROC");
  std::vector<std::vector<std::string>> cells;
  for (const ResultRow& row : table.rows) {
    std::vector<std::string> line = row.keys;
    const MeanStd f1 = f1_stats(row);
    const MeanStd auc = auc_stats(row);
    line.push_back(fmt("%.2f", 100.0 * f1.mean) + " +- " + fmt("%.2f", 100.0 * f1.std));
    line.push_back(auc.n ? fmt("%.2f", 100.0 * auc.mean) + " +- " + fmt("%.2f", 100.0 * auc.std) : "NA");
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& line : cells) width[c] = std::max(width[c], line[c].size());
  }
  auto render = [&](const std::vector<std::string>& line) {
    std::string out = "|";
    for (std::size_t c = 0; c < line.size(); ++c) {
      out += " " + line[c] + std::string(width[c] - line[c].size(), ' ') + " |";
    }
    return out + "\n";
  };
  std::string rule = "+";
  for (std::size_t w : width) rule += std::string(w + 2, '-') + "+";
  rule += "\n";
  std::string seeds = table.rows.empty() ? "0" : std::to_string(table.rows.front().runs.size());
  std::string out = table.title + " (mean +- std over " + seeds + " seeds, percent)\n";
  out += rule + render(header) + rule;
  for (const auto& line : cells) out += render(line);
  return out + rule;
}

// ---------------------------------------------------------------------------
// Ablations

ResultTable ablate_features(const ExperimentConfig& config, const Benchmark& bench) {
  ResultTable table;
  table.title = "Feature inputs by aggregation";
  table.key_columns = {"input", "aggregator"};
  std::vector<std::function<RunScore(std::uint64_t)>> cells;
  for (Aggregator agg : config.feature_aggregators) {
    for (Source source : config.feature_sources) {
      ModelSignature sig;
      sig.sources = {{source, agg}};
      table.rows.push_back({{std::string(to_string(source)), std::string(to_string(agg))}, sig.describe(), {}});
      cells.emplace_back([&, sig](std::uint64_t seed) {
        return train_and_score(bench.train, bench.test, sig, train_config_for(config), seed);
      });
    }
  }
  run_grid(table.rows, cells, config.seeds);
  return table;
}

ResultTable ablate_combination(const ExperimentConfig& config, const Benchmark& bench) {
  ResultTable table;
  table.title = "Combined with " + config.combination_base.name();
  table.key_columns = {"input", "aggregator"};
  std::vector<std::function<RunScore(std::uint64_t)>> cells;
  auto add = [&](ModelSignature sig, std::string input, std::string agg) {
    table.rows.push_back({{std::move(input), std::move(agg)}, sig.describe(), {}});
    cells.emplace_back([&, sig](std::uint64_t seed) {
      return train_and_score(bench.train, bench.test, sig, train_config_for(config), seed);
    });
  };
  ModelSignature base;
  base.sources = {config.combination_base};
  add(base, "(baseline)", "-");
  for (const SourceSpec& candidate : config.combination_candidates) {
    ModelSignature sig = base;
    sig.sources.push_back(candidate);
    add(sig, std::string(to_string(candidate.source)), std::string(to_string(candidate.aggregator)));
  }
  run_grid(table.rows, cells, config.seeds);
  return table;
}

ResultTable ablate_temporal(const ExperimentConfig& config, const Benchmark& bench) {
  ResultTable table;
  table.title = "Temporal aggregation over " + std::to_string(config.temporal_base.window) + "-frame windows";
  table.key_columns = {"temporal"};
  std::vector<std::function<RunScore(std::uint64_t)>> cells;
  auto add = [&](ModelSignature sig, std::string name) {
    table.rows.push_back({{std::move(name)}, sig.describe(), {}});
    cells.emplace_back([&, sig](std::uint64_t seed) {
      return train_and_score(bench.train, bench.test, sig, train_config_for(config), seed);
    });
  };
  ModelSignature image = config.temporal_base;
  image.temporal.reset();
  add(image, "image");
  for (Aggregator mode : config.temporal_modes) {
    ModelSignature sig = config.temporal_base;
    sig.temporal = mode;
    add(sig, std::string(to_string(mode)));
  }
  run_grid(table.rows, cells, config.seeds);
  return table;
}

ResultTable ablate_projection(const ExperimentConfig& config, const Benchmark& bench) {
  ResultTable table;
  table.title = "Projection layer frozen vs trainable";
  table.key_columns = {"projection"};
  ModelSignature sig = config.signature;
  sig.projection_dim = config.projection_dim;
  std::vector<std::function<RunScore(std::uint64_t)>> cells;
  for (bool frozen : {true, false}) {
    table.rows.push_back({{frozen ? "frozen" : "trainable"}, sig.describe(), {}});
    cells.emplace_back([&, sig, frozen](std::uint64_t seed) {
      TrainConfig tc = train_config_for(config);
      tc.frozen_projection = frozen;
      return train_and_score(bench.train, bench.test, sig, tc, seed);
    });
  }
  run_grid(table.rows, cells, config.seeds);
  return table;
}

Matrix pool_features(const Dataset& dataset, const ModelSignature& sig) {
  ModelSignature pooled = sig;
  pooled.temporal.reset();
  for (SourceSpec& s : pooled.sources) {
    if (s.aggregator == Aggregator::Attention) s.aggregator = Aggregator::Avg;
  }
  const SampleSet samples(dataset, pooled);
  const std::size_t width = input_width(pooled, dataset.manifest.dims);
  Matrix out(samples.size(), width);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto row = out.row(i);
    std::size_t at = 0;
    for (const Vector& part : samples.frame(i).fixed) {
      std::copy(part.begin(), part.end(), row.begin() + static_cast<std::ptrdiff_t>(at));
      at += part.size();
    }
  }
  return out;
}

namespace {

std::string budget_label(double b) { return fmt("%.0f%%", 100.0 * b); }

std::size_t budget_count(double fraction, std::size_t pool) {
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(fraction * static_cast<double>(pool))), 1, pool);
}

}  // namespace

ResultTable ablate_selection(const ExperimentConfig& config, const Benchmark& bench,
                             std::vector<SelectionResult>* selections) {
  const Dataset& pool = bench.train;
  if (pool.empty()) throw Error(ErrorKind::EmptyDataset, "selection pool is empty");
  const ModelSignature& sig = config.signature;
  const TrainConfig tc = train_config_for(config);
  const Matrix features = pool_features(pool, sig);
  const std::size_t n = pool.size();

  // Selection for one (method, budget, seed); uncertainty also returns its
  // warm-start indices, which join the training set.
  auto choose = [&](SelectionMethod method, double budget, std::uint64_t seed) {
    const std::size_t k = budget_count(budget, n);
    std::pair<SelectionResult, std::vector<std::size_t>> out;
    switch (method) {
      case SelectionMethod::Random: out.first = select_random(n, k, derive_seed(seed, 0x5a)); break;
      case SelectionMethod::Diversity: out.first = select_diversity(features, k); break;
      case SelectionMethod::Uncertainty: {
        const std::size_t warm_k = std::min(budget_count(config.warm_start, n), n - 1);
        const SelectionResult warm = select_random(n, warm_k, derive_seed(seed, 0x3a));
        TrainConfig wc = tc;
        wc.seed = seed;
        const Model warm_model = train(subset(pool, warm.chosen), sig, wc).model;
        std::vector<bool> in_warm(n, false);
        for (std::size_t i : warm.chosen) in_warm[i] = true;
        std::vector<std::size_t> rest;
        for (std::size_t i = 0; i < n; ++i) {
          if (!in_warm[i]) rest.push_back(i);
        }
        const Predictions pred = predict(warm_model, subset(pool, rest));
        SelectionResult picked = select_uncertainty(pred.probabilities, std::min(k, rest.size()), warm_model.mode);
        for (std::size_t& i : picked.chosen) i = rest[i];
        out.first = std::move(picked);
        out.second = warm.chosen;
        break;
      }
    }
    return out;
  };

  ResultTable table;
  table.title = "Active data selection";
  table.key_columns = {"method", "budget"};

  // `all` is budget independent: train it once per seed and reuse the score.
  ResultRow all_row{{"all", "100%"}, sig.describe(), {}};
  std::vector<std::function<RunScore(std::uint64_t)>> all_cell{
      [&](std::uint64_t seed) { return train_and_score(pool, bench.test, sig, tc, seed); }};
  std::vector<ResultRow> all_rows{all_row};
  run_grid(all_rows, all_cell, config.seeds);

  std::vector<ResultRow> rows;
  std::vector<std::function<RunScore(std::uint64_t)>> cells;
  std::vector<std::pair<SelectionMethod, double>> keys;
  for (double budget : config.budgets) {
    for (SelectionMethod method : config.selection_methods) {
      rows.push_back({{std::string(to_string(method)), budget_label(budget)}, sig.describe(), {}});
      keys.emplace_back(method, budget);
      cells.emplace_back([&, method, budget](std::uint64_t seed) {
        auto [picked, warm] = choose(method, budget, seed);
        std::vector<std::size_t> train_idx = warm;
        train_idx.insert(train_idx.end(), picked.chosen.begin(), picked.chosen.end());
        std::sort(train_idx.begin(), train_idx.end());
        return train_and_score(subset(pool, train_idx), bench.test, sig, tc, seed);
      });
    }
  }
  run_grid(rows, cells, config.seeds);

  std::size_t r = 0;
  for (double budget : config.budgets) {
    (void)budget;
    table.rows.push_back(all_rows.front());
    for (std::size_t m = 0; m < config.selection_methods.size(); ++m) table.rows.push_back(rows[r++]);
  }
  if (selections) {
    for (const auto& [method, budget] : keys) selections->push_back(choose(method, budget, config.seeds.front()).first);
  }
  return table;
}

// ---------------------------------------------------------------------------
// Gradient check

Dataset make_random_dataset(const Dims& dims, std::size_t frames, std::size_t episodes, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xd5));
  auto simplex = [&](std::size_t n) {
    std::vector<float> p(n);
    double total = 0.0;
    std::vector<double> raw(n);
    for (double& v : raw) total += (v = rng.uniform(0.05, 1.0));
    for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<float>(raw[i] / total);
    return p;
  };
  auto dense = [&](std::size_t n) {
    std::vector<float> v(n);
    for (float& x : v) x = static_cast<float>(rng.normal());
    return v;
  };
  Dataset ds;
  ds.manifest.dims = dims;
  ds.manifest.seed_digest = "random-" + std::to_string(seed);
  const std::size_t per_episode = std::max<std::size_t>(1, frames / std::max<std::size_t>(episodes, 1));
  for (std::size_t i = 0; i < frames; ++i) {
    Frame f;
    FeatureBundle& b = f.bundle;
    b.episode_id = static_cast<std::int64_t>(i / per_episode);
    b.frame_id = static_cast<std::int64_t>(i % per_episode);
    b.elapsed_s = static_cast<double>(b.frame_id) * 300.0;
    b.backbone_grid = dense(dims.h * dims.w * dims.c);
    b.encoder_tokens = dense(dims.t * dims.d);
    b.region_features = dense(dims.r * dims.d);
    for (std::size_t r = 0; r < dims.r; ++r) {
      RegionInfo info;
      info.category_probs = simplex(dims.k);
      info.amount_probs = simplex(dims.a);
      for (float& x : info.box) x = static_cast<float>(rng.uniform());
      b.table_info.regions.push_back(std::move(info));
    }
    b.table_info.progress_probs = simplex(dims.p);
    b.table_info.elapsed_s = b.elapsed_s;
    f.label = {rng.bernoulli(0.5), rng.bernoulli(0.5), rng.bernoulli(0.3), rng.bernoulli(0.2)};
    ds.frames.push_back(std::move(f));
  }
  return ds;
}

GradcheckSummary run_gradcheck(std::uint64_t seed, double corrupt, std::size_t configs) {
  GradcheckSummary summary;
  static constexpr Source kSources[] = {Source::Backbone, Source::Encoder, Source::Decoder, Source::TableInfo};
  static constexpr Aggregator kAggs[] = {Aggregator::Avg, Aggregator::Max, Aggregator::Attention};
  for (std::size_t i = 0; i < configs; ++i) {
    Rng rng(derive_seed(seed, 0x9c, i));
    Dims dims;
    dims.h = 1 + rng.below(3); dims.w = 1 + rng.below(3); dims.c = 2 + rng.below(4);
    dims.t = 1 + rng.below(4); dims.r = 1 + rng.below(4); dims.d = 2 + rng.below(4);
    dims.k = 2 + rng.below(3); dims.a = 2 + rng.below(2); dims.p = 2 + rng.below(2);

    ModelSignature sig;
    // Every configuration attends at least one source.
    const Source attended = kSources[rng.below(4)];
    for (Source s : kSources) {
      if (s == attended) sig.sources.push_back({s, Aggregator::Attention});
      else if (rng.bernoulli(0.5)) sig.sources.push_back({s, kAggs[rng.below(3)]});
    }
    switch (i % 4) {
      case 0: break;
      case 1: sig.temporal = Aggregator::Avg; break;
      case 2: sig.temporal = Aggregator::Max; break;
      case 3: sig.temporal = Aggregator::Attention; break;
    }
    sig.window = 3;
    if (i % 2 == 0) sig.projection_dim = 2 + rng.below(4);
    const LabelMode mode = (i / 2) % 2 == 0 ? LabelMode::MultiLabel : LabelMode::Exclusive;

    const Dataset data = make_random_dataset(dims, 12, 2, derive_seed(seed, 0xda, i));
    const Model model = init_model(sig, dims, mode, derive_seed(seed, 0x40, i), /*frozen_projection=*/false);
    const SampleSet samples(data, sig);
    std::vector<std::size_t> batch(samples.size());
    std::iota(batch.begin(), batch.end(), 0);
    const Vector weights = mode == LabelMode::MultiLabel ? Vector{1.5, 1.0, 2.0, 3.0} : Vector{};
    GradCheckReport report = gradient_check(model, samples, batch, 1e-5, weights, corrupt);
    report.worst_path = sig.describe() + " " + std::string(to_string(mode)) + " " + report.worst_path;
    if (report.max_rel_error > summary.max_rel_error || summary.reports.empty()) {
      summary.max_rel_error = report.max_rel_error;
      summary.worst_config = i;
    }
    summary.reports.push_back(std::move(report));
  }
  summary.passed = summary.max_rel_error < kGradcheckTolerance;
  return summary;
}

// ---------------------------------------------------------------------------
// CLI

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitBadInput = 2;

void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
  os << text;
}

void emit_table(const ResultTable& table, const fs::path& out, const std::string& stem) {
  write_text(out / (stem + ".csv"), table_csv(table));
  const std::string text = table_text(table);
  write_text(out / (stem + ".txt"), text);
  std::cout << text;
}

std::string frequency_table(const Dataset& train_set, const Dataset& test) {
  std::ostringstream os;
  os << "dataset  frames    refill     trash   dessert      lost\n";
  for (const auto& [name, ds] : {std::pair<const char*, const Dataset*>{"train", &train_set}, {"test", &test}}) {
    const auto counts = label_counts(*ds);
    char line[160];
    std::snprintf(line, sizeof line, "%-7s %7zu", name, ds->size());
    os << line;
    for (std::size_t c : counts) {
      std::snprintf(line, sizeof line, " %9zu", c);
      os << line;
    }
    os << "\n        freq   ";
    for (std::size_t c : counts) {
      std::snprintf(line, sizeof line, " %9.4f", ds->empty() ? 0.0 : static_cast<double>(c) / ds->size());
      os << line;
    }
    os << "\n";
  }
  return os.str();
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,learning_rate,loss,train_macro_f1\n";
  for (const EpochRecord& r : history) {
    out += std::to_string(r.epoch) + "," + fmt("%g", r.learning_rate) + "," + fmt("%.8f", r.loss) + "," +
           fmt("%.6f", r.train_macro_f1) + "\n";
  }
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      seeds.push_back(std::stoull(item));
    } catch (const std::exception&) {
      throw Error(ErrorKind::InvalidConfig, "bad seed '" + item + "'");
    }
  }
  if (seeds.empty()) throw Error(ErrorKind::InvalidConfig, "--seeds needs at least one seed");
  return seeds;
}

struct CliOptions {
  std::string config;
  std::string out;
  std::string seeds;
  std::string label_mode;
  double budget = -1.0;
};

ExperimentConfig resolve_config(const CliOptions& opts) {
  ExperimentConfig config = opts.config.empty() ? ExperimentConfig{} : load_experiment_config(opts.config);
  if (!opts.out.empty()) config.out_dir = opts.out;
  if (!opts.seeds.empty()) config.seeds = parse_seeds(opts.seeds);
  if (!opts.label_mode.empty()) {
    const LabelMode mode = parse_label_mode(opts.label_mode);
    config.world.label_mode = mode;
    config.train.label_mode = mode;
  }
  if (opts.budget >= 0.0) {
    if (!(opts.budget > 0.0 && opts.budget <= 1.0)) throw Error(ErrorKind::InvalidConfig, "--budget must be in (0, 1]");
    config.budgets = {opts.budget};
  }
  return config;
}

int dispatch(const std::string& command, const CliOptions& opts) {
  const ExperimentConfig config = resolve_config(opts);
  const fs::path out(config.out_dir);

  if (command == "gradcheck") {
    const GradcheckSummary summary = run_gradcheck(config.seeds.front(), config.gradcheck_corrupt);
    std::ostringstream os;
    os << "config,max_rel_error,checked,worst\n";
    for (std::size_t i = 0; i < summary.reports.size(); ++i) {
      const GradCheckReport& r = summary.reports[i];
      os << i << "," << fmt("%.3e", r.max_rel_error) << "," << r.checked << "," << r.worst_path << "\n";
    }
    write_text(out / "gradcheck.csv", os.str());
    const GradCheckReport& worst = summary.reports[summary.worst_config];
    std::cout << "gradcheck: " << summary.reports.size() << " configurations, max relative error "
              << fmt("%.3e", summary.max_rel_error) << " (tolerance " << fmt("%.0e", kGradcheckTolerance) << ")\n"
              << "worst: config " << summary.worst_config << " " << worst.worst_path << " analytic "
              << fmt("%.6e", worst.analytic) << " numeric " << fmt("%.6e", worst.numeric) << "\n"
              << (summary.passed ? "PASS" : "FAIL") << "\n";
    return summary.passed ? kExitOk : kExitCheckFailed;
  }

  if (command == "synth") {
    WorldConfig world = config.world;
    const Benchmark bench = build_benchmark(world, config.episodes, config.data_seed);
    save_dataset(bench.train, out / "train");
    save_dataset(bench.test, out / "test");
    write_text(out / "worldconfig.json", to_json(world).dump(2) + "\n");
    const std::string table = frequency_table(bench.train, bench.test);
    write_text(out / "frequencies.txt", table);
    std::cout << "wrote " << (out / "train").string() << " (" << bench.train_episodes.size() << " episodes) and "
              << (out / "test").string() << " (" << bench.test_episodes.size() << " episodes)\n"
              << table;
    return kExitOk;
  }

  const Benchmark bench = load_benchmark(config);
  if (command == "train") {
    TrainConfig tc = config.train;
    tc.seed = config.seeds.front();
    const TrainResult trained = train(bench.train, config.signature, tc);
    save_model(trained.model, out / "model.ckpt");
    write_text(out / "history.csv", history_csv(trained.history));
    const MetricsReport report = evaluate(trained.model, bench.test);
    save_report(report, out);
    std::cout << "trained " << config.signature.describe() << " for " << trained.history.size()
              << " epochs; test macro F1 " << fmt("%.4f", report.macro_f1) << ", macro AUC "
              << (report.macro_auc ? fmt("%.4f", *report.macro_auc) : std::string("NA")) << "\n";
    return kExitOk;
  }
  if (command == "eval") {
    const fs::path ckpt = config.checkpoint ? fs::path(*config.checkpoint) : out / "model.ckpt";
    const Model model = load_model(ckpt);
    const MetricsReport report = evaluate(model, bench.test);
    save_report(report, out);
    std::cout << report_csv(report);
    return kExitOk;
  }
  if (command == "ablate-features") {
    emit_table(ablate_features(config, bench), out, "features");
    if (config.projection_dim > 0) emit_table(ablate_projection(config, bench), out, "projection");
    return kExitOk;
  }
  if (command == "ablate-combo") {
    emit_table(ablate_combination(config, bench), out, "combination");
    return kExitOk;
  }
  if (command == "ablate-temporal") {
    emit_table(ablate_temporal(config, bench), out, "temporal");
    return kExitOk;
  }
  if (command == "ablate-selection") {
    std::vector<SelectionResult> selections;
    emit_table(ablate_selection(config, bench, &selections), out, "selection");
    // Selections come back budget-major, one per configured method.
    for (std::size_t i = 0; i < selections.size(); ++i) {
      const SelectionResult& s = selections[i];
      const double fraction = config.budgets[i / config.selection_methods.size()];
      save_selection(s, out / "selections" /
                            ("selection_" + std::string(to_string(s.method)) + "_" +
                             fmt("%.0f", 100.0 * fraction) + ".json"));
    }
    return kExitOk;
  }
  throw Error(ErrorKind::InvalidConfig, "unknown command '" + command + "'");
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Table-service suggestion lab: synthetic data, classifier heads, ablations"};
  app.require_subcommand(1);
  CliOptions opts;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"synth", "generate train/test datasets from a world config"},
      {"train", "train one head and evaluate it on the test split"},
      {"eval", "evaluate a checkpoint on the test split"},
      {"ablate-features", "input source x aggregator table"},
      {"ablate-combo", "feature combination table"},
      {"ablate-temporal", "single frame vs temporal window table"},
      {"ablate-selection", "active data selection table"},
      {"gradcheck", "verify analytic gradients against central differences"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opts.config, "experiment config (JSON)");
    sub->add_option("--out", opts.out, "output directory");
    sub->add_option("--seeds", opts.seeds, "comma-separated seeds, e.g. 1,2,3");
    sub->add_option("--label-mode", opts.label_mode, "multi | exclusive");
    sub->add_option("--budget", opts.budget, "selection budget fraction, e.g. 0.25");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitBadInput;
  }
  try {
    return dispatch(app.get_subcommands().front()->get_name(), opts);
  } catch (const Error& e) {
    std::cerr << "tablesvc: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const std::exception& e) {
    std::cerr << "tablesvc: " << e.what() << "\n";
    return kExitBadInput;
  }
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<std::string> storage = args;
  storage.insert(storage.begin(), "tablesvc");
  std::vector<char*> argv;
  for (std::string& s : storage) argv.push_back(s.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace tablesvc
