#include "doctest.h"

#include <cstring>
#include <numeric>
#include <set>

#include "fixtures.hpp"
#include "tablesvc/core.hpp"
#include "tablesvc/harness.hpp"

using namespace tablesvc;

namespace {

Dims small_dims() {
  Dims d;
  d.h = 2;
  d.w = 2;
  d.c = 3;
  d.t = 2;
  d.r = 3;
  d.d = 4;
  return d;
}

std::set<std::pair<std::int64_t, std::int64_t>> frame_keys(const Dataset& ds) {
  std::set<std::pair<std::int64_t, std::int64_t>> keys;
  for (const Frame& f : ds.frames) keys.insert({f.bundle.episode_id, f.bundle.frame_id});
  return keys;
}

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

}  // namespace

TEST_SUITE("core") {

TEST_CASE("split 10 frames at 0.9 gives 9 train and 1 eval, disjoint") {
  const Dataset ds = make_random_dataset(small_dims(), 10, 2, 3);
  const auto [train, eval] = split_dataset(ds, 0.9, 7);
  CHECK(train.size() == 9);
  CHECK(eval.size() == 1);
  auto a = frame_keys(train);
  for (const auto& k : frame_keys(eval)) CHECK(a.count(k) == 0);
}

TEST_CASE("split with fraction 1 keeps everything in train") {
  const Dataset ds = make_random_dataset(small_dims(), 7, 1, 4);
  const auto [train, eval] = split_dataset(ds, 1.0, 1);
  CHECK(train.size() == 7);
  CHECK(eval.empty());
}

TEST_CASE("split is deterministic per seed") {
  const Dataset ds = make_random_dataset(small_dims(), 23, 3, 5);
  CHECK(split_dataset(ds, 0.5, 11) == split_dataset(ds, 0.5, 11));
}

TEST_CASE("split partitions exactly for several fractions") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Dataset ds = make_random_dataset(small_dims(), 17 + seed, 3, seed);
    for (double fraction : {0.5, 0.9, 1.0}) {
      const auto [train, eval] = split_dataset(ds, fraction, seed);
      CHECK(train.size() + eval.size() == ds.size());
      CHECK(train.size() == static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ds.size()))));
      auto keys = frame_keys(train);
      const auto eval_keys = frame_keys(eval);
      keys.insert(eval_keys.begin(), eval_keys.end());
      CHECK(keys == frame_keys(ds));
    }
  }
}

TEST_CASE("split rejects empty datasets and bad fractions") {
  Dataset empty;
  CHECK(kind_of([&] { split_dataset(empty, 0.5, 1); }) == ErrorKind::EmptyDataset);
  const Dataset ds = make_random_dataset(small_dims(), 4, 1, 1);
  CHECK(kind_of([&] { split_dataset(ds, 0.0, 1); }) == ErrorKind::InvalidConfig);
  CHECK(kind_of([&] { split_dataset(ds, 1.5, 1); }) == ErrorKind::InvalidConfig);
}

TEST_CASE("save then load round-trips field by field") {
  fixtures::TempDir tmp("core_rt");
  const Dataset ds = make_random_dataset(Dims{}, 12, 2, 9);
  save_dataset(ds, tmp / "ds");
  const Dataset back = load_dataset(tmp / "ds");
  CHECK(back == ds);
  CHECK(back.manifest == ds.manifest);
}

TEST_CASE("saving twice gives byte-identical files") {
  fixtures::TempDir tmp("core_twice");
  const Dataset ds = make_random_dataset(small_dims(), 8, 2, 2);
  save_dataset(ds, tmp / "a");
  save_dataset(ds, tmp / "b");
  CHECK(fixtures::tree_bytes(tmp / "a") == fixtures::tree_bytes(tmp / "b"));
}

TEST_CASE("save, load, save is byte-identical across seeds") {
  fixtures::TempDir tmp("core_sls");
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Dataset ds = make_random_dataset(small_dims(), 3 + seed, 1 + seed % 3, seed);
    save_dataset(ds, tmp / "first");
    save_dataset(load_dataset(tmp / "first"), tmp / "second");
    CHECK(fixtures::tree_bytes(tmp / "first") == fixtures::tree_bytes(tmp / "second"));
  }
}

TEST_CASE("manifest and labels layout") {
  fixtures::TempDir tmp("core_layout");
  const Dims d = small_dims();
  const Dataset ds = make_random_dataset(d, 5, 1, 3);
  save_dataset(ds, tmp.path());
  const auto manifest = nlohmann::json::parse(fixtures::read_bytes(tmp / "manifest.json"));
  CHECK(manifest.at("frame_count") == 5);
  CHECK(manifest.at("dims").at("r") == d.r);
  CHECK(manifest.at("label_mode") == "multi");
  const std::string labels = fixtures::read_bytes(tmp / "labels.csv");
  CHECK(labels.rfind("episode,frame,refill,trash,dessert,lost\n", 0) == 0);
  CHECK(fixtures::read_bytes(tmp / "features.bin").size() == 5 * d.floats_per_frame() * 4);
}

TEST_CASE("unwritable destination raises IoFailure") {
  fixtures::TempDir tmp("core_io");
  fixtures::write_bytes(tmp / "plain_file", "x");
  const Dataset ds = make_random_dataset(small_dims(), 2, 1, 1);
  CHECK(kind_of([&] { save_dataset(ds, tmp / "plain_file" / "sub"); }) == ErrorKind::IoFailure);
  CHECK(kind_of([&] { load_dataset(tmp / "missing"); }) == ErrorKind::IoFailure);
}

TEST_CASE("truncated blob raises ManifestMismatch") {
  fixtures::TempDir tmp("core_trunc");
  save_dataset(make_random_dataset(small_dims(), 4, 1, 6), tmp.path());
  std::string blob = fixtures::read_bytes(tmp / "features.bin");
  blob.resize(blob.size() - 4);
  fixtures::write_bytes(tmp / "features.bin", blob);
  CHECK(kind_of([&] { load_dataset(tmp.path()); }) == ErrorKind::ManifestMismatch);
}

TEST_CASE("doubled category probabilities raise InvariantViolation") {
  fixtures::TempDir tmp("core_scaled");
  const Dims d = small_dims();
  save_dataset(make_random_dataset(d, 3, 1, 8), tmp.path());
  std::string blob = fixtures::read_bytes(tmp / "features.bin");
  const std::size_t offset = (d.h * d.w * d.c + d.t * d.d + d.r * d.d) * 4;
  for (std::size_t i = 0; i < d.k; ++i) {
    float v;
    std::memcpy(&v, blob.data() + offset + 4 * i, 4);
    v *= 2.0f;
    std::memcpy(blob.data() + offset + 4 * i, &v, 4);
  }
  fixtures::write_bytes(tmp / "features.bin", blob);
  CHECK(kind_of([&] { load_dataset(tmp.path()); }) == ErrorKind::InvariantViolation);
}

TEST_CASE("constructed datasets have simplices summing to one") {
  const Dataset ds = make_random_dataset(Dims{}, 20, 4, 12);
  auto sum = [](const std::vector<float>& v) { return std::accumulate(v.begin(), v.end(), 0.0); };
  for (const Frame& f : ds.frames) {
    CHECK(sum(f.bundle.table_info.progress_probs) == doctest::Approx(1.0).epsilon(1e-6));
    for (const RegionInfo& r : f.bundle.table_info.regions) {
      CHECK(std::abs(sum(r.category_probs) - 1.0) <= 1e-6);
      CHECK(std::abs(sum(r.amount_probs) - 1.0) <= 1e-6);
    }
  }
  CHECK_NOTHROW(validate_dataset(ds));
}

TEST_CASE("exclusive collapse follows lost > dessert > refill > trash") {
  ServiceLabel all{true, true, true, true};
  CHECK(all.exclusive() == ServiceLabel{false, false, false, true});
  CHECK(ServiceLabel{true, true, true, false}.exclusive() == ServiceLabel{false, false, true, false});
  CHECK(ServiceLabel{true, true, false, false}.exclusive() == ServiceLabel{true, false, false, false});
  CHECK(ServiceLabel{}.exclusive_index() == kNoneClass);
  CHECK(ServiceLabel{false, true, false, false}.exclusive_index() == 1);
  CHECK(kind_of([&] { (void)all.exclusive_index(); }) == ErrorKind::InvalidLabel);
}

TEST_CASE("label mode names parse both ways") {
  CHECK(parse_label_mode(to_string(LabelMode::MultiLabel)) == LabelMode::MultiLabel);
  CHECK(parse_label_mode(to_string(LabelMode::Exclusive)) == LabelMode::Exclusive);
  CHECK(kind_of([] { parse_label_mode("both"); }) == ErrorKind::InvalidConfig);
}

}  // TEST_SUITE
