#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tablesvc/core.hpp"
#include "tablesvc/matrix.hpp"

namespace tablesvc {

enum class SelectionMethod { Random, Uncertainty, Diversity };

std::string_view to_string(SelectionMethod method);
SelectionMethod parse_selection_method(std::string_view text);

struct UncertaintyStats {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct SelectionResult {
  SelectionMethod method = SelectionMethod::Random;
  std::size_t budget = 0;
  std::vector<std::size_t> chosen;  // in selection order
  std::optional<double> coverage_radius;      // diversity
  std::optional<UncertaintyStats> uncertainty;  // uncertainty, over chosen items
};

// Seeded uniform sample without replacement. Budget must be in [1, pool].
SelectionResult select_random(std::size_t pool_size, std::size_t budget, std::uint64_t seed);

// Shannon entropy (exclusive) or mean per-class binary entropy (multi-label).
// Entropy terms are summed in sorted order so class order cannot matter.
double prediction_entropy(const std::vector<double>& probabilities, LabelMode mode);

// Highest-entropy `budget` items, ties to the lower index.
SelectionResult select_uncertainty(const std::vector<std::vector<double>>& pool_probabilities, std::size_t budget,
                                   LabelMode mode);

// Greedy k-center: first the point farthest from the pool centroid, then
// repeatedly the point farthest from its nearest chosen center. Euclidean;
// ties to the lower index.
SelectionResult select_diversity(const Matrix& pool_features, std::size_t budget);

// Max over pool points of the distance to the nearest center (center rows).
double coverage_radius(const Matrix& pool_features, const Matrix& centers);
double coverage_radius(const Matrix& pool_features, const std::vector<std::size_t>& center_indices);

struct KCenterSolution {
  double radius = 0.0;
  std::vector<std::size_t> centers;  // lexicographically first optimal subset
};

// Exhaustive search over all C(N, k) subsets; N <= 12, k <= min(4, N).
KCenterSolution brute_force_kcenter(const Matrix& pool_features, std::size_t k);

nlohmann::json to_json(const SelectionResult& result);
void save_selection(const SelectionResult& result, const std::filesystem::path& path);

}  // namespace tablesvc
