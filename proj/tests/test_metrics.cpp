#include "doctest.h"

#include <numeric>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "tablesvc/harness.hpp"
#include "tablesvc/metrics.hpp"
#include "tablesvc/rng.hpp"

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

// Model whose only input is the table-info average and whose head ignores it.
Model constant_model(const Dims& dims, double bias) {
  ModelSignature sig;
  sig.sources = {{Source::TableInfo, Aggregator::Avg}};
  Model m = init_model(sig, dims, LabelMode::MultiLabel, 1);
  std::fill(m.params.weights.data.begin(), m.params.weights.data.end(), 0.0);
  std::fill(m.params.bias.begin(), m.params.bias.end(), bias);
  return m;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("binary confusion counts") {
  const std::vector<int> truth{1, 1, 1, 0, 0};
  const std::vector<int> pred{1, 1, 0, 1, 0};
  CHECK(confusion_counts(truth, pred) == ConfusionCounts{2, 1, 1, 1});
  const ConfusionCounts perfect = confusion_counts(truth, truth);
  CHECK(perfect.fp == 0);
  CHECK(perfect.fn == 0);
  const ConfusionCounts negative = confusion_counts(truth, std::vector<int>(5, 0));
  CHECK(negative.tp == 0);
  CHECK(negative.fp == 0);
  CHECK(kind_of([&] { confusion_counts(truth, std::vector<int>{1}); }) == ErrorKind::LengthMismatch);
}

TEST_CASE("per-class counts sum to the frame count") {
  Rng rng(6);
  std::vector<ServiceLabel> truth(37), pred(37);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    truth[i] = {rng.bernoulli(0.5), rng.bernoulli(0.3), rng.bernoulli(0.2), rng.bernoulli(0.1)};
    pred[i] = {rng.bernoulli(0.5), rng.bernoulli(0.3), rng.bernoulli(0.2), rng.bernoulli(0.1)};
  }
  const auto counts = confusion_counts(truth, pred);
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(counts[c].total() == 37);
    std::vector<int> t, p;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      t.push_back(truth[i].flags()[c]);
      p.push_back(pred[i].flags()[c]);
    }
    const oracle::HandCounts h = oracle::count(t, p);
    CHECK(counts[c] == ConfusionCounts{h.tp, h.fp, h.fn, h.tn});
  }
  CHECK(kind_of([&] { confusion_counts(truth, std::vector<ServiceLabel>(3)); }) == ErrorKind::LengthMismatch);
}

TEST_CASE("f1 examples") {
  CHECK(std::abs(f1_score({2, 1, 1, 0}).f1 - 2.0 / 3.0) <= 1e-12);
  CHECK(f1_score({5, 0, 0, 3}).f1 == 1.0);
  CHECK(f1_score({0, 0, 0, 9}).f1 == 0.0);
  CHECK(f1_score({0, 0, 0, 9}).precision == 0.0);
  CHECK(f1_score({0, 0, 4, 9}).recall == 0.0);
}

TEST_CASE("f1 matches hand arithmetic and is symmetric in fp and fn") {
  Rng rng(10);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t tp = rng.below(20), fp = rng.below(20), fn = rng.below(20);
    const double f = f1_score({tp, fp, fn, 0}).f1;
    CHECK(f == doctest::Approx(oracle::hand_f1(tp, fp, fn)).epsilon(1e-12));
    CHECK(f == doctest::Approx(f1_score({tp, fn, fp, 0}).f1).epsilon(1e-15));
  }
  std::vector<ConfusionCounts> counts{{1, 2, 3, 4}, {5, 0, 1, 2}, {0, 0, 0, 1}, {3, 3, 3, 3}};
  const F1Summary s = f1_scores(counts);
  double mean = 0.0;
  for (const ClassScores& c : s.per_class) mean += c.f1;
  CHECK(s.macro_f1 == mean / 4.0);
}

TEST_CASE("roc auc examples") {
  CHECK(roc_auc(std::vector<double>{0.9, 0.8, 0.4, 0.3}, std::vector<int>{1, 0, 1, 0}) == 0.75);
  CHECK(roc_auc(std::vector<double>{0.9, 0.8, 0.4, 0.3}, std::vector<int>{1, 1, 0, 0}) == 1.0);
  CHECK(roc_auc(std::vector<double>(6, 0.3), std::vector<int>{1, 0, 1, 0, 0, 1}) == 0.5);
  CHECK(kind_of([] { roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}); }) ==
        ErrorKind::DegenerateLabels);
  CHECK_FALSE(try_roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 0}).has_value());
  CHECK(kind_of([] { roc_auc(std::vector<double>{0.1}, std::vector<int>{1, 0}); }) == ErrorKind::LengthMismatch);
}

TEST_CASE("roc auc equals the pairwise oracle with ties") {
  Rng rng(3);
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t n = 2 + rng.below(49);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(rng.below(8)) / 8.0;
      labels[i] = static_cast<int>(rng.below(2));
    }
    labels[0] = 1;
    labels[1] = 0;
    CHECK(roc_auc(scores, labels) == oracle::pairwise_auc(scores, labels));
    // Strictly increasing transforms change nothing.
    std::vector<double> warped(n);
    for (std::size_t i = 0; i < n; ++i) warped[i] = std::exp(3.0 * scores[i]) - 7.0;
    CHECK(roc_auc(warped, labels) == roc_auc(scores, labels));
  }
}

TEST_CASE("flipping labels complements a tie-free auc") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 4 + rng.below(30);
    std::vector<double> scores(n);
    std::vector<int> labels(n), flipped(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(i) + rng.uniform(0.0, 0.5);
      labels[i] = static_cast<int>(rng.below(2));
    }
    labels[0] = 1;
    labels[1] = 0;
    for (std::size_t i = 0; i < n; ++i) flipped[i] = 1 - labels[i];
    CHECK(roc_auc(scores, labels) + roc_auc(scores, flipped) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("report on a perfect predictor") {
  std::vector<ServiceLabel> truth{{true, false, false, false}, {false, true, false, true}, {false, false, true, false},
                                  {true, true, false, false}};
  std::vector<std::vector<double>> probs;
  for (const ServiceLabel& l : truth) {
    std::vector<double> p;
    for (bool f : l.flags()) p.push_back(f ? 0.9 : 0.1);
    probs.push_back(p);
  }
  const MetricsReport r = build_report(truth, truth, probs);
  CHECK(r.macro_f1 == 1.0);
  REQUIRE(r.macro_auc.has_value());
  CHECK(*r.macro_auc == 1.0);
  CHECK(r.frame_count == 4);
  CHECK(r.per_class[0].support == 2);
}

TEST_CASE("constant predictor scores") {
  Dims d;
  d.h = d.w = 1;
  d.c = 2;
  d.t = 2;
  d.r = 2;
  d.d = 2;
  Dataset ds = make_random_dataset(d, 40, 2, 7);
  for (std::size_t i = 0; i < ds.size(); ++i) ds.frames[i].label = ServiceLabel{i % 2 == 0, i % 4 == 0, i % 5 == 0, false};

  const MetricsReport above = evaluate(constant_model(d, 2.0), ds);
  const MetricsReport below = evaluate(constant_model(d, -2.0), ds);
  for (std::size_t c = 0; c < 3; ++c) {
    const double s = static_cast<double>(above.per_class[c].support);
    const double n = static_cast<double>(ds.size()) - s;
    CHECK(above.per_class[c].f1 == doctest::Approx(2.0 * s / (2.0 * s + n)).epsilon(1e-12));
    CHECK(below.per_class[c].f1 == 0.0);
    CHECK(*above.per_class[c].auc == 0.5);
  }
  CHECK_FALSE(above.per_class[3].auc.has_value());
  REQUIRE(above.macro_auc.has_value());
  CHECK(*above.macro_auc == 0.5);
  CHECK(kind_of([&] { evaluate(constant_model(d, 0.0), Dataset{ds.manifest, {}}); }) == ErrorKind::EmptyDataset);
}

TEST_CASE("macro auc skips undefined classes") {
  std::vector<ServiceLabel> truth{{true, false, false, false}, {false, true, false, false}, {true, true, true, false}};
  std::vector<std::vector<double>> probs{{0.9, 0.2, 0.1, 0.0}, {0.1, 0.8, 0.3, 0.0}, {0.8, 0.7, 0.6, 0.0}};
  const MetricsReport r = build_report(truth, truth, probs);
  CHECK_FALSE(r.per_class[3].auc.has_value());
  REQUIRE(r.macro_auc.has_value());
  CHECK(*r.macro_auc == doctest::Approx((*r.per_class[0].auc + *r.per_class[1].auc + *r.per_class[2].auc) / 3.0));
}

TEST_CASE("report serialization") {
  fixtures::TempDir tmp("metrics");
  std::vector<ServiceLabel> truth{{true, false, false, false}, {false, false, false, false}};
  std::vector<std::vector<double>> probs{{0.9, 0.1, 0.1, 0.1}, {0.2, 0.1, 0.1, 0.1}};
  const MetricsReport r = build_report(truth, truth, probs);
  save_report(r, tmp.path());
  const std::string csv = fixtures::read_bytes(tmp / "report.csv");
  CHECK(csv.rfind("class,tp,fp,fn,tn,precision,recall,f1,auc\n", 0) == 0);
  CHECK(csv.find("\nrefill,") != std::string::npos);
  CHECK(csv.find("\nmacro,") != std::string::npos);
  const auto j = nlohmann::json::parse(fixtures::read_bytes(tmp / "report.json"));
  CHECK(j.at("frame_count") == 2);
  CHECK(j.at("per_class").size() == 4);
}

}  // TEST_SUITE
