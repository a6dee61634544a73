#include "tablesvc/selection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include "tablesvc/rng.hpp"

namespace tablesvc {

std::string_view to_string(SelectionMethod method) {
  switch (method) {
    case SelectionMethod::Random: return "random";
    case SelectionMethod::Uncertainty: return "uncertainty";
    case SelectionMethod::Diversity: return "diversity";
  }
  return "?";
}

SelectionMethod parse_selection_method(std::string_view text) {
  if (text == "random") return SelectionMethod::Random;
  if (text == "uncertainty") return SelectionMethod::Uncertainty;
  if (text == "diversity" || text == "coreset") return SelectionMethod::Diversity;
  throw Error(ErrorKind::InvalidConfig, "unknown selection method '" + std::string(text) + "'");
}

namespace {

void check_budget(std::size_t budget, std::size_t pool) {
  if (budget < 1 || budget > pool) {
    throw Error(ErrorKind::BudgetExceedsPool,
                "budget " + std::to_string(budget) + " outside [1, " + std::to_string(pool) + "]");
  }
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double xlogx(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

}  // namespace

SelectionResult select_random(std::size_t pool_size, std::size_t budget, std::uint64_t seed) {
  check_budget(budget, pool_size);
  std::vector<std::size_t> order(pool_size);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0x5e1));
  // Partial Fisher-Yates: the first `budget` slots are a uniform sample.
  for (std::size_t i = 0; i < budget; ++i) {
    std::swap(order[i], order[i + rng.below(pool_size - i)]);
  }
  SelectionResult out;
  out.method = SelectionMethod::Random;
  out.budget = budget;
  out.chosen.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(budget));
  return out;
}

double prediction_entropy(const std::vector<double>& probabilities, LabelMode mode) {
  std::vector<double> terms;
  terms.reserve(probabilities.size());
  double total = 0.0;
  for (double p : probabilities) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::InvalidProbabilities, "probability outside [0,1]");
    total += p;
    terms.push_back(mode == LabelMode::Exclusive ? -xlogx(p) : -xlogx(p) - xlogx(1.0 - p));
  }
  if (probabilities.empty()) throw Error(ErrorKind::InvalidProbabilities, "empty probability vector");
  if (mode == LabelMode::Exclusive && std::abs(total - 1.0) > 1e-6) {
    throw Error(ErrorKind::InvalidProbabilities, "exclusive probabilities must sum to 1");
  }
  std::sort(terms.begin(), terms.end());
  double h = 0.0;
  for (double t : terms) h += t;
  return mode == LabelMode::Exclusive ? h : h / static_cast<double>(terms.size());
}

SelectionResult select_uncertainty(const std::vector<std::vector<double>>& pool_probabilities, std::size_t budget,
                                   LabelMode mode) {
  check_budget(budget, pool_probabilities.size());
  std::vector<double> scores;
  scores.reserve(pool_probabilities.size());
  for (const auto& p : pool_probabilities) scores.push_back(prediction_entropy(p, mode));
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  SelectionResult out;
  out.method = SelectionMethod::Uncertainty;
  out.budget = budget;
  out.chosen.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(budget));
  UncertaintyStats stats{0.0, INFINITY, -INFINITY};
  for (std::size_t i : out.chosen) {
    stats.mean += scores[i];
    stats.min = std::min(stats.min, scores[i]);
    stats.max = std::max(stats.max, scores[i]);
  }
  stats.mean /= static_cast<double>(budget);
  out.uncertainty = stats;
  return out;
}

SelectionResult select_diversity(const Matrix& pool, std::size_t budget) {
  check_budget(budget, pool.rows);
  const std::size_t n = pool.rows;
  Vector centroid(pool.cols, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < pool.cols; ++c) centroid[c] += pool(i, c);
  }
  for (double& v : centroid) v /= static_cast<double>(n);

  std::vector<double> nearest(n);
  for (std::size_t i = 0; i < n; ++i) nearest[i] = squared_distance(pool.row(i), centroid);
  std::vector<bool> taken(n, false);

  SelectionResult out;
  out.method = SelectionMethod::Diversity;
  out.budget = budget;
  for (std::size_t step = 0; step < budget; ++step) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      if (best == n || nearest[i] > nearest[best]) best = i;
    }
    taken[best] = true;
    out.chosen.push_back(best);
    // After the first pick, distances are to the nearest chosen center.
    const auto center = pool.row(best);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = squared_distance(pool.row(i), center);
      nearest[i] = step == 0 ? d : std::min(nearest[i], d);
    }
  }
  double radius = 0.0;
  for (double d : nearest) radius = std::max(radius, d);
  out.coverage_radius = std::sqrt(radius);
  return out;
}

double coverage_radius(const Matrix& pool, const Matrix& centers) {
  if (centers.rows == 0) throw Error(ErrorKind::EmptyCenters, "coverage radius needs at least one center");
  if (centers.cols != pool.cols) throw Error(ErrorKind::DimMismatch, "center width differs from pool width");
  double worst = 0.0;
  for (std::size_t i = 0; i < pool.rows; ++i) {
    double best = INFINITY;
    for (std::size_t c = 0; c < centers.rows; ++c) best = std::min(best, squared_distance(pool.row(i), centers.row(c)));
    worst = std::max(worst, best);
  }
  return std::sqrt(worst);
}

double coverage_radius(const Matrix& pool, const std::vector<std::size_t>& center_indices) {
  Matrix centers(center_indices.size(), pool.cols);
  for (std::size_t c = 0; c < center_indices.size(); ++c) {
    if (center_indices[c] >= pool.rows) throw Error(ErrorKind::DimMismatch, "center index out of range");
    const auto row = pool.row(center_indices[c]);
    std::copy(row.begin(), row.end(), centers.row(c).begin());
  }
  return coverage_radius(pool, centers);
}

KCenterSolution brute_force_kcenter(const Matrix& pool, std::size_t k) {
  const std::size_t n = pool.rows;
  if (n > 12 || k > 4) throw Error(ErrorKind::TooLarge, "brute force limited to N <= 12, k <= 4");
  if (k < 1 || k > n) throw Error(ErrorKind::BudgetExceedsPool, "k must be in [1, N]");

  std::vector<double> dist(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) dist[i * n + j] = squared_distance(pool.row(i), pool.row(j));
  }
  std::vector<std::size_t> combo(k);
  std::iota(combo.begin(), combo.end(), 0);
  KCenterSolution best{INFINITY, {}};
  while (true) {
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double nearest = INFINITY;
      for (std::size_t c : combo) nearest = std::min(nearest, dist[i * n + c]);
      worst = std::max(worst, nearest);
    }
    if (worst < best.radius) {
      best.radius = worst;
      best.centers = combo;
    }
    // Next combination in lexicographic order.
    std::size_t pos = k;
    while (pos > 0 && combo[pos - 1] == n - k + pos - 1) --pos;
    if (pos == 0) break;
    ++combo[pos - 1];
    for (std::size_t j = pos; j < k; ++j) combo[j] = combo[j - 1] + 1;
  }
  best.radius = std::sqrt(best.radius);
  return best;
}

nlohmann::json to_json(const SelectionResult& r) {
  nlohmann::json diagnostics = nlohmann::json::object();
  if (r.coverage_radius) diagnostics["coverage_radius"] = *r.coverage_radius;
  if (r.uncertainty) {
    diagnostics["mean_uncertainty"] = r.uncertainty->mean;
    diagnostics["min_uncertainty"] = r.uncertainty->min;
    diagnostics["max_uncertainty"] = r.uncertainty->max;
  }
  return {{"method", std::string(to_string(r.method))},
          {"budget", r.budget},
          {"chosen", r.chosen},
          {"diagnostics", diagnostics}};
}

void save_selection(const SelectionResult& result, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
  os << to_json(result).dump(2) << "\n";
}

}  // namespace tablesvc
