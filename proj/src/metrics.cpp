#include "tablesvc/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "tablesvc/learner.hpp"

namespace tablesvc {

ConfusionCounts confusion_counts(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) {
    throw Error(ErrorKind::LengthMismatch, "truth and prediction lengths differ");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool t = truth[i] != 0;
    const bool p = predicted[i] != 0;
    if (t && p) ++c.tp;
    else if (!t && p) ++c.fp;
    else if (t && !p) ++c.fn;
    else ++c.tn;
  }
  return c;
}

std::array<ConfusionCounts, kServiceClasses> confusion_counts(const std::vector<ServiceLabel>& truth,
                                                             const std::vector<ServiceLabel>& predicted) {
  if (truth.size() != predicted.size()) {
    throw Error(ErrorKind::LengthMismatch, "truth and prediction lengths differ");
  }
  std::array<ConfusionCounts, kServiceClasses> out{};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = truth[i].flags();
    const auto p = predicted[i].flags();
    for (std::size_t c = 0; c < kServiceClasses; ++c) {
      ConfusionCounts& k = out[c];
      if (t[c] && p[c]) ++k.tp;
      else if (!t[c] && p[c]) ++k.fp;
      else if (t[c] && !p[c]) ++k.fn;
      else ++k.tn;
    }
  }
  return out;
}

ClassScores f1_score(const ConfusionCounts& c) {
  ClassScores s;
  const auto tp = static_cast<double>(c.tp);
  if (c.tp + c.fp > 0) s.precision = tp / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) s.recall = tp / static_cast<double>(c.tp + c.fn);
  if (s.precision + s.recall > 0.0) s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

F1Summary f1_scores(std::span<const ConfusionCounts> counts) {
  F1Summary out;
  double total = 0.0;
  for (const ConfusionCounts& c : counts) {
    out.per_class.push_back(f1_score(c));
    total += out.per_class.back().f1;
  }
  if (!counts.empty()) out.macro_f1 = total / static_cast<double>(counts.size());
  return out;
}

std::optional<double> try_roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error(ErrorKind::LengthMismatch, "scores and labels lengths differ");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Ranks are 1-based; tied groups share the mean rank, so every rank is a
  // multiple of 1/2 and the sum below is exact.
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] != 0) {
        positive_rank_sum += rank;
        ++positives;
      }
    }
    i = j + 1;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;
  const auto np = static_cast<double>(positives);
  const double u = positive_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(negatives));
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  const auto auc = try_roc_auc(scores, labels);
  if (!auc) throw Error(ErrorKind::DegenerateLabels, "ROC AUC needs both positive and negative labels");
  return *auc;
}

MetricsReport build_report(const std::vector<ServiceLabel>& truth, const std::vector<ServiceLabel>& predicted,
                           const std::vector<std::vector<double>>& probabilities) {
  if (truth.size() != probabilities.size()) {
    throw Error(ErrorKind::LengthMismatch, "truth and probability lengths differ");
  }
  const auto counts = confusion_counts(truth, predicted);
  MetricsReport report;
  report.frame_count = truth.size();
  double f1_total = 0.0;
  double auc_total = 0.0;
  std::size_t auc_defined = 0;
  std::vector<double> scores(truth.size());
  std::vector<int> labels(truth.size());
  for (std::size_t c = 0; c < kServiceClasses; ++c) {
    ClassMetrics m;
    m.name = std::string(kServiceNames[c]);
    m.counts = counts[c];
    const ClassScores s = f1_score(counts[c]);
    m.precision = s.precision;
    m.recall = s.recall;
    m.f1 = s.f1;
    m.support = counts[c].tp + counts[c].fn;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (probabilities[i].size() < kServiceClasses) throw Error(ErrorKind::DimMismatch, "too few class scores");
      scores[i] = probabilities[i][c];
      labels[i] = truth[i].flags()[c] ? 1 : 0;
    }
    m.auc = try_roc_auc(scores, labels);
    f1_total += m.f1;
    if (m.auc) {
      auc_total += *m.auc;
      ++auc_defined;
    }
    report.per_class.push_back(std::move(m));
  }
  report.macro_f1 = f1_total / static_cast<double>(kServiceClasses);
  if (auc_defined > 0) report.macro_auc = auc_total / static_cast<double>(auc_defined);
  return report;
}

MetricsReport evaluate(const Model& model, const Dataset& dataset, std::span<const double> thresholds) {
  if (dataset.empty()) throw Error(ErrorKind::EmptyDataset, "cannot evaluate on an empty dataset");
  const Predictions pred = predict(model, dataset, thresholds);
  std::vector<ServiceLabel> truth;
  truth.reserve(dataset.size());
  for (const Frame& f : dataset.frames) {
    truth.push_back(model.mode == LabelMode::Exclusive ? f.label.exclusive() : f.label);
  }
  return build_report(truth, pred.labels, pred.probabilities);
}

nlohmann::json to_json(const MetricsReport& report) {
  nlohmann::json j;
  j["frame_count"] = report.frame_count;
  j["macro_f1"] = report.macro_f1;
  j["macro_auc"] = report.macro_auc ? nlohmann::json(*report.macro_auc) : nlohmann::json(nullptr);
  nlohmann::json classes = nlohmann::json::array();
  for (const ClassMetrics& m : report.per_class) {
    classes.push_back({{"class", m.name},
                       {"tp", m.counts.tp},
                       {"fp", m.counts.fp},
                       {"fn", m.counts.fn},
                       {"tn", m.counts.tn},
                       {"precision", m.precision},
                       {"recall", m.recall},
                       {"f1", m.f1},
                       {"auc", m.auc ? nlohmann::json(*m.auc) : nlohmann::json(nullptr)},
                       {"support", m.support}});
  }
  j["per_class"] = classes;
  return j;
}

namespace {

std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string report_csv(const MetricsReport& report) {
  std::string out = "class,tp,fp,fn,tn,precision,recall,f1,auc\n";
  double p_total = 0.0, r_total = 0.0;
  for (const ClassMetrics& m : report.per_class) {
    out += m.name + "," + std::to_string(m.counts.tp) + "," + std::to_string(m.counts.fp) + "," +
           std::to_string(m.counts.fn) + "," + std::to_string(m.counts.tn) + "," + fixed6(m.precision) + "," +
           fixed6(m.recall) + "," + fixed6(m.f1) + "," + (m.auc ? fixed6(*m.auc) : "NA") + "\n";
    p_total += m.precision;
    r_total += m.recall;
  }
  const auto n = static_cast<double>(std::max<std::size_t>(report.per_class.size(), 1));
  out += "macro,,,,," + fixed6(p_total / n) + "," + fixed6(r_total / n) + "," + fixed6(report.macro_f1) + "," +
         (report.macro_auc ? fixed6(*report.macro_auc) : "NA") + "\n";
  return out;
}

void save_report(const MetricsReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoFailure, "cannot create " + dir.string());
  std::ofstream js(dir / "report.json", std::ios::trunc);
  std::ofstream csv(dir / "report.csv", std::ios::trunc);
  if (!js || !csv) throw Error(ErrorKind::IoFailure, "cannot write report into " + dir.string());
  js << to_json(report).dump(2) << "\n";
  csv << report_csv(report);
}

}  // namespace tablesvc
