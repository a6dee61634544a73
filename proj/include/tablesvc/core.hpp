#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tablesvc/error.hpp"

namespace tablesvc {

inline constexpr std::size_t kServiceClasses = 4;
inline constexpr std::array<std::string_view, kServiceClasses> kServiceNames = {
    "refill", "trash", "dessert", "lost"};

// Manifest dimensions shared by every bundle in a dataset.
struct Dims {
  std::size_t h = 4;   // backbone grid height
  std::size_t w = 4;   // backbone grid width
  std::size_t c = 16;  // backbone channels
  std::size_t t = 8;   // encoder tokens
  std::size_t r = 12;  // region slots
  std::size_t d = 16;  // encoder/decoder width
  std::size_t k = 12;  // object categories
  std::size_t a = 5;   // remaining-food bins
  std::size_t p = 3;   // meal progress states

  std::size_t region_info_dim() const { return k + a + 4; }
  std::size_t global_info_dim() const { return p + 1; }
  // f32 values per frame in features.bin.
  std::size_t floats_per_frame() const {
    return h * w * c + t * d + r * d + r * region_info_dim() + p + 1;
  }

  friend bool operator==(const Dims&, const Dims&) = default;
};

enum class LabelMode { MultiLabel, Exclusive };

std::string_view to_string(LabelMode mode);
LabelMode parse_label_mode(std::string_view text);

struct RegionInfo {
  std::vector<float> category_probs;  // K-simplex
  std::vector<float> amount_probs;    // A-simplex, bin 0 = almost empty
  std::array<float, 4> box{};         // cx, cy, w, h in [0,1]

  friend bool operator==(const RegionInfo&, const RegionInfo&) = default;
};

struct TableInfo {
  std::vector<RegionInfo> regions;
  std::vector<float> progress_probs;  // P-simplex
  double elapsed_s = 0.0;

  friend bool operator==(const TableInfo&, const TableInfo&) = default;
};

// One frame of simulated recognition outputs. Bulk arrays are stored as
// f32, matching the on-disk blob; arithmetic promotes to double.
struct FeatureBundle {
  std::int64_t episode_id = 0;
  std::int64_t frame_id = 0;
  double elapsed_s = 0.0;
  std::vector<float> backbone_grid;   // H*W*C, row-major (h, w, c)
  std::vector<float> encoder_tokens;  // T*D
  std::vector<float> region_features;  // R*D
  TableInfo table_info;

  friend bool operator==(const FeatureBundle&, const FeatureBundle&) = default;
};

struct ServiceLabel {
  bool refill = false;
  bool trash = false;
  bool dessert = false;
  bool lost = false;

  std::array<bool, kServiceClasses> flags() const { return {refill, trash, dessert, lost}; }
  static ServiceLabel from_flags(const std::array<bool, kServiceClasses>& f) {
    return {f[0], f[1], f[2], f[3]};
  }
  std::size_t count() const { return refill + trash + dessert + lost; }

  // Collapses to at most one flag, priority lost > dessert > refill > trash.
  ServiceLabel exclusive() const;
  // Class index in exclusive mode: 0..3 for the service classes, 4 = none.
  // Requires at most one flag set.
  std::size_t exclusive_index() const;

  friend bool operator==(const ServiceLabel&, const ServiceLabel&) = default;
};

inline constexpr std::size_t kNoneClass = kServiceClasses;

struct Frame {
  FeatureBundle bundle;
  ServiceLabel label;

  friend bool operator==(const Frame&, const Frame&) = default;
};

struct Manifest {
  Dims dims;
  LabelMode label_mode = LabelMode::MultiLabel;
  double fps = 1.0;
  std::string seed_digest;

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

struct Dataset {
  Manifest manifest;
  std::vector<Frame> frames;

  std::size_t size() const { return frames.size(); }
  bool empty() const { return frames.empty(); }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Checks every type invariant (dims conformance, finiteness, simplex sums
// within `simplex_tol`, box range, elapsed ordering within episodes, label
// mode). Throws ManifestMismatch or InvariantViolation.
void validate_dataset(const Dataset& dataset, double simplex_tol = 1e-6);

// Seeded uniform shuffle, then the first round(fraction * N) frames go to
// train. Both outputs keep the shuffled order.
std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset, double train_fraction,
                                          std::uint64_t seed);

// Dataset directory: manifest.json, features.bin, labels.csv.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// Subset by frame index, preserving the given order.
Dataset subset(const Dataset& dataset, const std::vector<std::size_t>& indices);

// Frame count per service class.
std::array<std::size_t, kServiceClasses> label_counts(const Dataset& dataset);

}  // namespace tablesvc
