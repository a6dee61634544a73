#include "tablesvc/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tablesvc/rng.hpp"

namespace tablesvc {

using json = nlohmann::json;

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::InvalidConfig, what);
}

constexpr std::size_t kFixedSlots = 4;  // trash, personal item, person, dessert

}  // namespace

void WorldConfig::validate() const {
  require(duration_s >= 1, "duration_s must be >= 1");
  require(dish_count >= 1, "dish_count must be >= 1");
  require(dims.k == kCategoryCount, "synthetic world needs k = 12 categories");
  require(dims.p == 3, "synthetic world needs p = 3 progress states");
  require(dims.a >= 2, "need at least 2 amount bins");
  require(dims.r >= static_cast<std::size_t>(dish_count) + kFixedSlots, "r must be >= dish_count + 4");
  require(dims.h >= 1 && dims.w >= 1 && dims.c >= 1 && dims.t >= 1 && dims.d >= 1, "dims must be >= 1");
  require(initial_amount_min >= 0.0 && initial_amount_min <= initial_amount_max && initial_amount_max <= 1.0,
          "need 0 <= initial_amount_min <= initial_amount_max <= 1");
  require(consumption_rate >= 0.0, "consumption_rate must be >= 0");
  require(consumption_spread >= 0.0 && consumption_spread <= 1.0, "consumption_spread must be in [0,1]");
  require(wait_max_s >= 0 && finish_cutoff_s >= 0, "phase times must be >= 0");
  require(trash_rate_per_min >= 0.0, "trash_rate_per_min must be >= 0");
  require(trash_clear_s >= 1 && dessert_delay_s >= 0, "service delays must be positive");
  require(absence_prob_per_min >= 0.0, "absence_prob_per_min must be >= 0");
  require(absence_min_s >= 1 && absence_max_s >= absence_min_s, "absence range invalid");
  require(personal_item_prob >= 0.0 && personal_item_prob <= 1.0, "personal_item_prob must be in [0,1]");
  require(refill_threshold > 0.0 && refill_threshold < 1.0, "refill_threshold must be in (0,1)");
  require(lost_threshold_s >= 0.0, "lost_threshold_s must be >= 0");
  require(label_flip_rate >= 0.0 && label_flip_rate < 1.0, "label_flip_rate must be in [0,1)");
  require(feature_noise >= 0.0 && std::isfinite(feature_noise), "feature_noise must be >= 0");
  require(fps > 0.0 && fps <= 1.0, "fps must be in (0, 1]");
  require(duplicate_factor >= 1, "duplicate_factor must be >= 1");
}

WorldConfig WorldConfig::preset(std::string_view name) {
  WorldConfig c;
  if (name == "default") return c;
  if (name == "clean") {
    c.label_flip_rate = 0.0;
    c.feature_noise = 0.0;
    return c;
  }
  if (name == "cafeteria") {
    // Refill on most frames, trash on about a quarter, lost rare.
    c.duration_s = 1220;
    c.dish_count = 8;
    c.initial_amount_min = 0.0;
    c.initial_amount_max = 0.6;
    c.consumption_rate = 0.01;
    c.consumption_spread = 0.9;
    c.wait_max_s = 10;
    c.finish_cutoff_s = 1100;
    c.trash_rate_per_min = 0.25;
    c.trash_clear_s = 90;
    c.dessert_delay_s = 120;
    c.absence_prob_per_min = 0.35;
    c.absence_min_s = 60;
    c.absence_max_s = 80;
    c.personal_item_prob = 1.0;
    return c;
  }
  if (name == "redundant") {
    // Every frame is emitted four times; copies differ only by slight jitter.
    c.duration_s = 600;
    c.finish_cutoff_s = 480;
    c.duplicate_factor = 4;
    c.label_flip_rate = 0.0;
    c.feature_noise = 0.02;
    return c;
  }
  throw Error(ErrorKind::InvalidConfig, "unknown world preset '" + std::string(name) + "'");
}

json to_json(const WorldConfig& c) {
  const Dims& d = c.dims;
  json j;
  j["dims"] = {{"h", d.h}, {"w", d.w}, {"c", d.c}, {"t", d.t}, {"r", d.r},
               {"d", d.d}, {"k", d.k}, {"a", d.a}, {"p", d.p}};
  j["label_mode"] = std::string(to_string(c.label_mode));
  j["duration_s"] = c.duration_s;
  j["dish_count"] = c.dish_count;
  j["initial_amount_min"] = c.initial_amount_min;
  j["initial_amount_max"] = c.initial_amount_max;
  j["consumption_rate"] = c.consumption_rate;
  j["consumption_spread"] = c.consumption_spread;
  j["wait_max_s"] = c.wait_max_s;
  j["finish_cutoff_s"] = c.finish_cutoff_s;
  j["trash_rate_per_min"] = c.trash_rate_per_min;
  j["trash_clear_s"] = c.trash_clear_s;
  j["dessert_delay_s"] = c.dessert_delay_s;
  j["absence_prob_per_min"] = c.absence_prob_per_min;
  j["absence_min_s"] = c.absence_min_s;
  j["absence_max_s"] = c.absence_max_s;
  j["personal_item_prob"] = c.personal_item_prob;
  j["refill_threshold"] = c.refill_threshold;
  j["lost_threshold_s"] = c.lost_threshold_s;
  j["label_flip_rate"] = c.label_flip_rate;
  j["feature_noise"] = c.feature_noise;
  j["fps"] = c.fps;
  j["duplicate_factor"] = c.duplicate_factor;
  j["map_seed"] = c.map_seed;
  return j;
}

WorldConfig world_config_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, "world config must be a JSON object");
  WorldConfig c = WorldConfig::preset(j.value("preset", std::string("default")));
  try {
    if (j.contains("dims")) {
      const json& jd = j["dims"];
      Dims& d = c.dims;
      d.h = jd.value("h", d.h); d.w = jd.value("w", d.w); d.c = jd.value("c", d.c);
      d.t = jd.value("t", d.t); d.r = jd.value("r", d.r); d.d = jd.value("d", d.d);
      d.k = jd.value("k", d.k); d.a = jd.value("a", d.a); d.p = jd.value("p", d.p);
    }
    if (j.contains("label_mode")) c.label_mode = parse_label_mode(j["label_mode"].get<std::string>());
#define TABLESVC_FIELD(name) c.name = j.value(#name, c.name)
    TABLESVC_FIELD(duration_s);
    TABLESVC_FIELD(dish_count);
    TABLESVC_FIELD(initial_amount_min);
    TABLESVC_FIELD(initial_amount_max);
    TABLESVC_FIELD(consumption_rate);
    TABLESVC_FIELD(consumption_spread);
    TABLESVC_FIELD(wait_max_s);
    TABLESVC_FIELD(finish_cutoff_s);
    TABLESVC_FIELD(trash_rate_per_min);
    TABLESVC_FIELD(trash_clear_s);
    TABLESVC_FIELD(dessert_delay_s);
    TABLESVC_FIELD(absence_prob_per_min);
    TABLESVC_FIELD(absence_min_s);
    TABLESVC_FIELD(absence_max_s);
    TABLESVC_FIELD(personal_item_prob);
    TABLESVC_FIELD(refill_threshold);
    TABLESVC_FIELD(lost_threshold_s);
    TABLESVC_FIELD(label_flip_rate);
    TABLESVC_FIELD(feature_noise);
    TABLESVC_FIELD(fps);
    TABLESVC_FIELD(duplicate_factor);
    TABLESVC_FIELD(map_seed);
#undef TABLESVC_FIELD
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("world config: ") + e.what());
  }
  c.validate();
  return c;
}

WorldConfig load_world_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::IoFailure, "cannot open " + path);
  try {
    return world_config_from_json(json::parse(is));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::InvalidConfig, path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Episode dynamics

std::vector<EpisodeState> simulate_episode(const WorldConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(derive_seed(seed, 0xe9));

  const auto dishes = static_cast<std::size_t>(config.dish_count);
  EpisodeState state;
  state.dish_amounts.resize(dishes);
  std::vector<double> rates(dishes);
  for (std::size_t i = 0; i < dishes; ++i) {
    state.dish_amounts[i] = rng.uniform(config.initial_amount_min, config.initial_amount_max);
    const double spread = config.consumption_spread;
    rates[i] = config.consumption_rate * rng.uniform(1.0 - spread, 1.0 + spread) / 60.0;
  }
  state.personal_item = rng.bernoulli(config.personal_item_prob);
  const auto wait_s = static_cast<double>(rng.below(static_cast<std::uint64_t>(config.wait_max_s) + 1));

  double finished_at = -1.0;
  double trash_since = -1.0;
  double absence_len = 0.0;
  double left_at = 0.0;

  std::vector<EpisodeState> states;
  states.reserve(static_cast<std::size_t>(config.duration_s));
  for (int second = 0; second < config.duration_s; ++second) {
    const auto t = static_cast<double>(second);
    state.t = t;

    if (state.progress == Progress::Waiting && t >= wait_s) state.progress = Progress::Eating;
    if (state.progress == Progress::Eating) {
      for (std::size_t i = 0; i < dishes; ++i) {
        const double bite = rates[i] * rng.uniform(0.0, 2.0);
        state.dish_amounts[i] = std::max(0.0, state.dish_amounts[i] - bite);
      }
      const bool all_low = std::all_of(state.dish_amounts.begin(), state.dish_amounts.end(),
                                       [&](double a) { return a < config.refill_threshold; });
      if (all_low) state.progress = Progress::Finished;
    }
    if (state.progress != Progress::Finished && t >= config.finish_cutoff_s) {
      state.progress = Progress::Finished;
    }
    if (state.progress == Progress::Finished) {
      if (finished_at < 0.0) finished_at = t;
      if (t - finished_at >= config.dessert_delay_s) state.dessert_served = true;
    }

    if (state.progress != Progress::Waiting) {
      if (rng.bernoulli(config.trash_rate_per_min / 60.0)) {
        if (state.trash_count == 0) trash_since = t;
        ++state.trash_count;
      }
      if (state.trash_count > 0 && t - trash_since >= config.trash_clear_s) state.trash_count = 0;

      if (state.person_present) {
        if (rng.bernoulli(config.absence_prob_per_min / 60.0)) {
          state.person_present = false;
          left_at = t;
          absence_len = static_cast<double>(
              config.absence_min_s +
              static_cast<int>(rng.below(static_cast<std::uint64_t>(config.absence_max_s - config.absence_min_s) + 1)));
        }
      } else if (t - left_at >= absence_len) {
        state.person_present = true;
      }
    }
    state.absence_s = state.person_present ? 0.0 : t - left_at;
    states.push_back(state);
  }
  return states;
}

ServiceLabel oracle_service_labels(const EpisodeState& state, const WorldConfig& config) {
  ServiceLabel label;
  label.refill = state.progress == Progress::Eating &&
                 std::any_of(state.dish_amounts.begin(), state.dish_amounts.end(),
                             [&](double a) { return a < config.refill_threshold; });
  label.trash = state.trash_count >= 1;
  label.dessert = state.progress == Progress::Finished && !state.dessert_served;
  label.lost = !state.person_present && state.absence_s >= config.lost_threshold_s && state.personal_item;
  return config.label_mode == LabelMode::Exclusive ? label.exclusive() : label;
}

std::size_t amount_bin(double amount, double refill_threshold, std::size_t bins) {
  if (amount < refill_threshold) return 0;
  const double frac = (amount - refill_threshold) / (1.0 - refill_threshold);
  const auto upper = static_cast<double>(bins - 1);
  return 1 + std::min(bins - 2, static_cast<std::size_t>(std::floor(frac * upper)));
}

// ---------------------------------------------------------------------------
// Feature emission

namespace {

bool person_visible(const EpisodeState& s, const WorldConfig& c) {
  return s.person_present || s.absence_s < c.lost_threshold_s;
}

std::size_t latent_dim(const WorldConfig& c) { return static_cast<std::size_t>(c.dish_count) + 10; }

Vector latent_state(const EpisodeState& s, const WorldConfig& c) {
  Vector v;
  v.reserve(latent_dim(c));
  double min_amount = 1.0;
  double low = 0.0;
  for (double a : s.dish_amounts) {
    v.push_back(a);
    min_amount = std::min(min_amount, a);
    low += a < c.refill_threshold ? 1.0 : 0.0;
  }
  v.push_back(min_amount);
  v.push_back(low / static_cast<double>(s.dish_amounts.size()));
  v.push_back(std::min(s.trash_count, 3) / 3.0);
  v.push_back(person_visible(s, c) ? 1.0 : 0.0);
  v.push_back(s.personal_item ? 1.0 : 0.0);
  v.push_back(s.dessert_served ? 1.0 : 0.0);
  for (int p = 0; p < 3; ++p) v.push_back(static_cast<int>(s.progress) == p ? 1.0 : 0.0);
  v.push_back(std::min(s.t / 1800.0, 2.0));
  return v;
}

Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
  for (double& x : m.data) x = rng.normal() * scale;
  return m;
}

struct Slot {
  Category category = Category::Other;
  double amount = 1.0;
  bool detected = false;
  std::array<float, 4> box{};
};

struct Layout {
  std::vector<std::array<float, 4>> boxes;  // one per slot
  std::vector<Category> distractors;        // for slots after the fixed ones
  Category item = Category::Phone;
};

Layout episode_layout(const WorldConfig& c, std::uint64_t seed) {
  // Place settings are fixed by the table; only the distractors vary.
  Rng place(derive_seed(c.map_seed, 0x1b));
  Rng rng(derive_seed(seed, 0x1a));
  Layout layout;
  layout.boxes.resize(c.dims.r);
  for (auto& box : layout.boxes) {
    box = {static_cast<float>(place.uniform(0.15, 0.85)), static_cast<float>(place.uniform(0.15, 0.85)),
           static_cast<float>(place.uniform(0.05, 0.25)), static_cast<float>(place.uniform(0.05, 0.25))};
  }
  layout.item = Category::Phone;
  static constexpr Category kDistractors[] = {Category::Cup, Category::Bottle, Category::Tissue,
                                              Category::Tray, Category::Cutlery};
  const std::size_t fixed = static_cast<std::size_t>(c.dish_count) + kFixedSlots;
  for (std::size_t i = fixed; i < c.dims.r; ++i) {
    layout.distractors.push_back(rng.bernoulli(0.5) ? kDistractors[rng.below(5)] : Category::Other);
  }
  return layout;
}

std::vector<Slot> fill_slots(const EpisodeState& s, const WorldConfig& c, const Layout& layout) {
  std::vector<Slot> slots(c.dims.r);
  std::size_t i = 0;
  for (double amount : s.dish_amounts) {
    slots[i].category = Category::Dishes;
    slots[i].amount = amount;
    ++i;
  }
  if (s.trash_count >= 1) slots[i].category = Category::Trash;
  ++i;
  // The item stays in the diner's hands until they leave it behind.
  if (s.personal_item && !person_visible(s, c)) slots[i].category = layout.item;
  ++i;
  // A diner who just stood up stays in view until the lost threshold passes;
  // after that the seat itself is detected as an empty chair (Other).
  slots[i].category = person_visible(s, c) ? Category::PersonHand : Category::Other;
  slots[i].detected = true;
  ++i;
  if (s.dessert_served) slots[i].category = Category::Dessert;
  ++i;
  for (Category d : layout.distractors) slots[i++].category = d;
  for (std::size_t j = 0; j < slots.size(); ++j) {
    if (slots[j].category != Category::Other || slots[j].detected) slots[j].box = layout.boxes[j];
  }
  return slots;
}

// One-hot at `truth` with probability 1 - eps, otherwise 0.8 on a uniformly
// chosen wrong class and the remainder spread over the other classes.
std::vector<float> noisy_one_hot(std::size_t truth, std::size_t n, double eps, Rng& rng) {
  std::vector<float> probs(n, 0.0f);
  if (eps > 0.0 && rng.bernoulli(eps)) {
    std::size_t wrong = rng.below(n - 1);
    if (wrong >= truth) ++wrong;
    const auto rest = static_cast<float>(0.2 / static_cast<double>(n - 1));
    for (std::size_t i = 0; i < n; ++i) probs[i] = i == wrong ? 0.8f : rest;
  } else {
    probs[truth] = 1.0f;
  }
  return probs;
}

}  // namespace

FeatureEmitter::FeatureEmitter(const WorldConfig& config) : config_(config) {
  config_.validate();
  const Dims& d = config_.dims;
  Rng rng(derive_seed(config_.map_seed, 0x3a95));
  const std::size_t s = latent_dim(config_);
  for (std::size_t i = 0; i < d.h * d.w; ++i) cell_maps_.push_back(gaussian_matrix(rng, d.c, s));
  for (std::size_t i = 0; i < d.t; ++i) token_maps_.push_back(gaussian_matrix(rng, d.d, s));
  region_map_ = gaussian_matrix(rng, d.d, d.k + 1 + 4 + d.p + 1);
}

FeatureBundle FeatureEmitter::emit(const EpisodeState& state, std::uint64_t seed, std::uint64_t variant) const {
  const WorldConfig& c = config_;
  const Dims& d = c.dims;
  if (state.dish_amounts.size() != static_cast<std::size_t>(c.dish_count)) {
    throw Error(ErrorKind::InvalidConfig, "state dish count does not match config");
  }
  const Layout layout = episode_layout(c, seed);
  const std::vector<Slot> slots = fill_slots(state, c, layout);
  const auto t_key = static_cast<std::uint64_t>(std::llround(state.t * 1000.0));
  Rng flips(derive_seed(seed, t_key, 0xf1 + (variant << 8)));
  Rng noise(derive_seed(seed, t_key, 0xa0 + (variant << 8)));
  const double sigma = c.feature_noise;

  FeatureBundle b;
  b.elapsed_s = state.t;

  const Vector z = latent_state(state, c);
  auto project = [&](const Matrix& m, std::vector<float>& out) {
    for (std::size_t r = 0; r < m.rows; ++r) {
      double v = dot(m.row(r), z);
      if (sigma > 0.0) v += sigma * noise.normal();
      out.push_back(static_cast<float>(v));
    }
  };
  b.backbone_grid.reserve(d.h * d.w * d.c);
  for (const Matrix& m : cell_maps_) project(m, b.backbone_grid);
  b.encoder_tokens.reserve(d.t * d.d);
  for (const Matrix& m : token_maps_) project(m, b.encoder_tokens);

  const double eps = c.label_flip_rate;
  const auto progress = static_cast<std::size_t>(state.progress);
  b.region_features.reserve(d.r * d.d);
  b.table_info.regions.reserve(d.r);
  for (const Slot& slot : slots) {
    const auto category = static_cast<std::size_t>(slot.category);
    const std::size_t bin = slot.category == Category::Dishes
                                ? amount_bin(slot.amount, c.refill_threshold, d.a)
                                : d.a - 1;
    Vector latent(region_map_.cols, 0.0);
    latent[category] = 1.0;
    latent[d.k] = slot.amount;
    for (std::size_t j = 0; j < 4; ++j) latent[d.k + 1 + j] = slot.box[j];
    latent[d.k + 5 + progress] = 1.0;
    latent[d.k + 5 + d.p] = slot.box[2] > 0.0f ? 1.0 : 0.0;
    for (std::size_t r = 0; r < d.d; ++r) {
      double v = dot(region_map_.row(r), latent);
      if (sigma > 0.0) v += sigma * noise.normal();
      b.region_features.push_back(static_cast<float>(v));
    }

    RegionInfo info;
    info.category_probs = noisy_one_hot(category, d.k, eps, flips);
    info.amount_probs = noisy_one_hot(bin, d.a, eps, flips);
    info.box = slot.box;
    b.table_info.regions.push_back(std::move(info));
  }
  b.table_info.progress_probs = noisy_one_hot(progress, d.p, eps, flips);
  b.table_info.elapsed_s = state.t;
  return b;
}

FeatureBundle emit_features(const EpisodeState& state, const WorldConfig& config, std::uint64_t seed) {
  return FeatureEmitter(config).emit(state, seed);
}

// ---------------------------------------------------------------------------
// Sampling and benchmark assembly

std::vector<std::size_t> sample_fps(const std::vector<double>& timestamps, double target_fps) {
  if (!(target_fps > 0.0) || !std::isfinite(target_fps)) {
    throw Error(ErrorKind::InvalidRate, "target_fps must be > 0");
  }
  std::vector<std::size_t> kept;
  if (timestamps.empty()) return kept;
  const double t0 = timestamps.front();
  if (timestamps.size() >= 2) {
    const double span = timestamps.back() - t0;
    if (span > 0.0) {
      const double source_fps = static_cast<double>(timestamps.size() - 1) / span;
      if (source_fps < target_fps * (1.0 - 1e-9)) {
        throw Error(ErrorKind::InvalidRate, "source rate is below the target rate");
      }
    }
  }
  long long last_window = -1;
  for (std::size_t i = 0; i < timestamps.size(); ++i) {
    const auto window = static_cast<long long>(std::floor((timestamps[i] - t0) * target_fps + 1e-9));
    if (window > last_window) {
      kept.push_back(i);
      last_window = window;
    }
  }
  return kept;
}

std::vector<Frame> sample_fps(const std::vector<Frame>& frames, double target_fps) {
  std::vector<double> stamps;
  stamps.reserve(frames.size());
  for (const Frame& f : frames) stamps.push_back(f.bundle.elapsed_s);
  std::vector<Frame> out;
  for (std::size_t i : sample_fps(stamps, target_fps)) out.push_back(frames[i]);
  return out;
}

std::string seed_digest(const WorldConfig& config, std::uint64_t seed) {
  const std::string text = to_json(config).dump() + "#" + std::to_string(seed);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Benchmark build_benchmark(const WorldConfig& config, int episodes, std::uint64_t seed) {
  config.validate();
  if (episodes < 2) throw Error(ErrorKind::InvalidConfig, "need at least 2 episodes");

  const FeatureEmitter emitter(config);
  std::vector<std::vector<Frame>> per_episode(static_cast<std::size_t>(episodes));
  std::vector<std::array<bool, kServiceClasses>> seen_by(per_episode.size());
  for (int e = 0; e < episodes; ++e) {
    const std::uint64_t episode_seed = derive_seed(seed, static_cast<std::uint64_t>(e));
    const std::vector<EpisodeState> states = simulate_episode(config, episode_seed);
    std::vector<double> stamps;
    stamps.reserve(states.size());
    for (const EpisodeState& s : states) stamps.push_back(s.t);

    std::vector<Frame>& frames = per_episode[static_cast<std::size_t>(e)];
    std::array<bool, kServiceClasses> seen{};
    std::int64_t frame_id = 0;
    for (std::size_t i : sample_fps(stamps, config.fps)) {
      const ServiceLabel label = oracle_service_labels(states[i], config);
      const auto f = label.flags();
      for (std::size_t c = 0; c < kServiceClasses; ++c) seen[c] = seen[c] || f[c];
      for (int dup = 0; dup < config.duplicate_factor; ++dup) {
        Frame frame;
        frame.bundle = emitter.emit(states[i], episode_seed, static_cast<std::uint64_t>(dup));
        frame.bundle.episode_id = e;
        frame.bundle.frame_id = frame_id++;
        frame.label = label;
        frames.push_back(std::move(frame));
      }
    }
    seen_by[static_cast<std::size_t>(e)] = seen;
  }

  const auto n_train = static_cast<std::size_t>(
      std::clamp<long long>(std::llround(2.0 / 9.0 * episodes), 1, episodes - 1));
  // Train gets, per alarm class, the first episode showing it (while room
  // remains), then the remaining episodes in index order.
  std::vector<std::int64_t> order;
  std::vector<bool> taken(per_episode.size(), false);
  for (std::size_t c = 0; c < kServiceClasses && order.size() < n_train; ++c) {
    bool covered = false;
    for (std::int64_t e : order) covered = covered || seen_by[static_cast<std::size_t>(e)][c];
    if (covered) continue;
    for (std::size_t e = 0; e < per_episode.size(); ++e) {
      if (!taken[e] && seen_by[e][c]) {
        taken[e] = true;
        order.push_back(static_cast<std::int64_t>(e));
        break;
      }
    }
  }
  for (std::size_t e = 0; e < per_episode.size(); ++e) {
    if (!taken[e]) order.push_back(static_cast<std::int64_t>(e));
  }

  Benchmark bench;
  bench.train_episodes.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  bench.test_episodes.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(bench.train_episodes.begin(), bench.train_episodes.end());
  std::sort(bench.test_episodes.begin(), bench.test_episodes.end());

  Manifest manifest;
  manifest.dims = config.dims;
  manifest.label_mode = config.label_mode;
  manifest.fps = config.fps;
  manifest.seed_digest = seed_digest(config, seed);
  bench.train.manifest = manifest;
  bench.test.manifest = manifest;
  for (std::int64_t e : bench.train_episodes) {
    for (Frame& f : per_episode[static_cast<std::size_t>(e)]) bench.train.frames.push_back(std::move(f));
  }
  for (std::int64_t e : bench.test_episodes) {
    for (Frame& f : per_episode[static_cast<std::size_t>(e)]) bench.test.frames.push_back(std::move(f));
  }
  return bench;
}

}  // namespace tablesvc
