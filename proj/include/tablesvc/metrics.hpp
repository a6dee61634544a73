#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tablesvc/core.hpp"

namespace tablesvc {

struct Model;

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

// Binary counts; labels are 0/1. Throws LengthMismatch.
ConfusionCounts confusion_counts(std::span<const int> truth, std::span<const int> predicted);

// Per service class. Multi-label counts each flag independently; exclusive
// labels (at most one flag) give one-vs-rest counts the same way.
std::array<ConfusionCounts, kServiceClasses> confusion_counts(const std::vector<ServiceLabel>& truth,
                                                             const std::vector<ServiceLabel>& predicted);

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Zero denominators give 0 for that quantity.
ClassScores f1_score(const ConfusionCounts& counts);

struct F1Summary {
  std::vector<ClassScores> per_class;
  double macro_f1 = 0.0;
};

F1Summary f1_scores(std::span<const ConfusionCounts> counts);

// Mann-Whitney statistic via average ranks; ties count 1/2. Throws
// DegenerateLabels when either class is absent.
double roc_auc(std::span<const double> scores, std::span<const int> labels);
// Same, with nullopt as the undefined marker.
std::optional<double> try_roc_auc(std::span<const double> scores, std::span<const int> labels);

struct ClassMetrics {
  std::string name;
  ConfusionCounts counts;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> auc;
  std::size_t support = 0;  // positives
};

struct MetricsReport {
  std::vector<ClassMetrics> per_class;
  double macro_f1 = 0.0;
  std::optional<double> macro_auc;  // mean over classes with defined AUC
  std::size_t frame_count = 0;
};

// `probabilities` rows must hold at least the four service-class scores.
MetricsReport build_report(const std::vector<ServiceLabel>& truth, const std::vector<ServiceLabel>& predicted,
                           const std::vector<std::vector<double>>& probabilities);

MetricsReport evaluate(const Model& model, const Dataset& dataset, std::span<const double> thresholds = {});

nlohmann::json to_json(const MetricsReport& report);
std::string report_csv(const MetricsReport& report);
void save_report(const MetricsReport& report, const std::filesystem::path& dir);

}  // namespace tablesvc
