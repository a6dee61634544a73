#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tablesvc/core.hpp"
#include "tablesvc/matrix.hpp"

namespace tablesvc {

enum class Progress : std::uint8_t { Waiting = 0, Eating = 1, Finished = 2 };

// Object vocabulary; requires Dims::k == 12.
enum class Category : std::uint8_t {
  Dishes = 0,
  Cup,
  Bottle,
  Trash,
  Tissue,
  Phone,
  Bag,
  Tray,
  Cutlery,
  Dessert,
  PersonHand,
  Other,  // also marks an empty region slot
};
inline constexpr std::size_t kCategoryCount = 12;

// Latent table state at one second of an episode.
struct EpisodeState {
  double t = 0.0;
  std::vector<double> dish_amounts;  // fraction remaining, non-increasing over t
  int trash_count = 0;
  bool person_present = true;
  double absence_s = 0.0;  // 0 whenever person_present
  bool personal_item = false;
  bool dessert_served = false;
  Progress progress = Progress::Waiting;

  friend bool operator==(const EpisodeState&, const EpisodeState&) = default;
};

struct WorldConfig {
  Dims dims;
  LabelMode label_mode = LabelMode::MultiLabel;

  int duration_s = 1200;
  int dish_count = 4;
  double initial_amount_min = 0.6;  // dishes start uniform in [min, max]
  double initial_amount_max = 1.0;
  double consumption_rate = 0.08;   // mean fraction eaten per minute
  double consumption_spread = 0.5;  // per-dish rate uniform in mean * [1-s, 1+s]
  int wait_max_s = 60;              // waiting phase length uniform in [0, max]
  int finish_cutoff_s = 1000;       // progress is finished from here on

  double trash_rate_per_min = 0.3;
  int trash_clear_s = 120;  // staff clears trash this long after it appears
  int dessert_delay_s = 90;  // dessert arrives this long after finishing

  double absence_prob_per_min = 0.05;
  int absence_min_s = 120;
  int absence_max_s = 900;
  double personal_item_prob = 0.5;

  double refill_threshold = 0.15;  // dish "almost empty" below this
  double lost_threshold_s = 60.0;

  double label_flip_rate = 0.1;  // epsilon: table-info class flip probability
  double feature_noise = 0.3;    // sigma: Gaussian noise on dense features

  double fps = 1.0;          // output sampling rate; simulation runs at 1 Hz
  int duplicate_factor = 1;  // each sampled frame emitted this many times
  std::uint64_t map_seed = 17;  // seeds the fixed feature projections

  // Validates ranges and vocabulary sizes; throws InvalidConfig.
  void validate() const;

  static WorldConfig preset(std::string_view name);  // "default", "cafeteria", "redundant", "clean"
};

nlohmann::json to_json(const WorldConfig& config);
// Keys absent from `j` keep their preset values; "preset" selects the base.
WorldConfig world_config_from_json(const nlohmann::json& j);
WorldConfig load_world_config(const std::string& path);

std::vector<EpisodeState> simulate_episode(const WorldConfig& config, std::uint64_t seed);

ServiceLabel oracle_service_labels(const EpisodeState& state, const WorldConfig& config);

// Remaining-food bin: 0 below the refill threshold, the rest split [theta, 1]
// evenly.
std::size_t amount_bin(double amount, double refill_threshold, std::size_t bins);

// Holds the per-dataset random projections from latent state to dense
// features; emission is deterministic per (state, seed, variant).
class FeatureEmitter {
 public:
  explicit FeatureEmitter(const WorldConfig& config);

  // `seed` fixes the episode's object layout; `variant` selects an
  // independent noise draw for near-duplicate frames.
  FeatureBundle emit(const EpisodeState& state, std::uint64_t seed, std::uint64_t variant = 0) const;

  const WorldConfig& config() const { return config_; }

 private:
  WorldConfig config_;
  std::vector<Matrix> cell_maps_;   // H*W maps, C x S
  std::vector<Matrix> token_maps_;  // T maps, D x S
  Matrix region_map_;               // D x (K + 1 + 4 + P + 1)
};

FeatureBundle emit_features(const EpisodeState& state, const WorldConfig& config, std::uint64_t seed);

// Keeps the first frame of each 1/target_fps window; order preserved.
std::vector<std::size_t> sample_fps(const std::vector<double>& timestamps, double target_fps);
std::vector<Frame> sample_fps(const std::vector<Frame>& frames, double target_fps);

struct Benchmark {
  Dataset train;
  Dataset test;
  std::vector<std::int64_t> train_episodes;
  std::vector<std::int64_t> test_episodes;
};

// Episode-level 2:7 split. Train first takes the earliest episode showing each
// alarm, then fills up in episode order.
Benchmark build_benchmark(const WorldConfig& config, int episodes, std::uint64_t seed);

std::string seed_digest(const WorldConfig& config, std::uint64_t seed);

}  // namespace tablesvc
