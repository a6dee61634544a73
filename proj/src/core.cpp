#include "tablesvc/core.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "tablesvc/rng.hpp"

namespace tablesvc {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string_view to_string(LabelMode mode) {
  return mode == LabelMode::MultiLabel ? "multi" : "exclusive";
}

LabelMode parse_label_mode(std::string_view text) {
  if (text == "multi" || text == "multi-label" || text == "multilabel") return LabelMode::MultiLabel;
  if (text == "exclusive") return LabelMode::Exclusive;
  throw Error(ErrorKind::InvalidConfig, "unknown label mode '" + std::string(text) + "'");
}

ServiceLabel ServiceLabel::exclusive() const {
  ServiceLabel out;
  if (lost) out.lost = true;
  else if (dessert) out.dessert = true;
  else if (refill) out.refill = true;
  else if (trash) out.trash = true;
  return out;
}

std::size_t ServiceLabel::exclusive_index() const {
  if (count() > 1) throw Error(ErrorKind::InvalidLabel, "more than one flag set in exclusive mode");
  const auto f = flags();
  for (std::size_t c = 0; c < kServiceClasses; ++c) {
    if (f[c]) return c;
  }
  return kNoneClass;
}

namespace {

void check_simplex(std::span<const float> probs, double tol, const char* what) {
  double sum = 0.0;
  for (float v : probs) {
    if (!std::isfinite(v) || v < 0.0f) {
      throw Error(ErrorKind::InvariantViolation, std::string(what) + " has a negative or non-finite entry");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > tol) {
    std::ostringstream msg;
    msg << what << " sums to " << sum;
    throw Error(ErrorKind::InvariantViolation, msg.str());
  }
}

void check_finite(std::span<const float> values, const char* what) {
  for (float v : values) {
    if (!std::isfinite(v)) throw Error(ErrorKind::InvariantViolation, std::string(what) + " has a non-finite entry");
  }
}

void check_size(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    std::ostringstream msg;
    msg << what << ": expected " << want << " values, got " << got;
    throw Error(ErrorKind::ManifestMismatch, msg.str());
  }
}

// Renormalizes only when the sum is off by more than f32 rounding, so that
// load -> save reproduces the input bytes.
void renormalize(std::vector<float>& probs) {
  double sum = 0.0;
  for (float v : probs) sum += v;
  if (std::abs(sum - 1.0) <= 1e-6) return;
  for (float& v : probs) v = static_cast<float>(v / sum);
}

}  // namespace

void validate_dataset(const Dataset& dataset, double simplex_tol) {
  const Dims& d = dataset.manifest.dims;
  std::map<std::int64_t, std::vector<std::pair<std::int64_t, double>>> episodes;
  for (const Frame& frame : dataset.frames) {
    const FeatureBundle& b = frame.bundle;
    check_size(b.backbone_grid.size(), d.h * d.w * d.c, "backbone_grid");
    check_size(b.encoder_tokens.size(), d.t * d.d, "encoder_tokens");
    check_size(b.region_features.size(), d.r * d.d, "region_features");
    check_size(b.table_info.regions.size(), d.r, "table_info.regions");
    check_size(b.table_info.progress_probs.size(), d.p, "progress_probs");
    check_finite(b.backbone_grid, "backbone_grid");
    check_finite(b.encoder_tokens, "encoder_tokens");
    check_finite(b.region_features, "region_features");
    for (const RegionInfo& region : b.table_info.regions) {
      check_size(region.category_probs.size(), d.k, "category_probs");
      check_size(region.amount_probs.size(), d.a, "amount_probs");
      check_simplex(region.category_probs, simplex_tol, "category_probs");
      check_simplex(region.amount_probs, simplex_tol, "amount_probs");
      for (float v : region.box) {
        if (!(v >= 0.0f && v <= 1.0f)) throw Error(ErrorKind::InvariantViolation, "box coordinate outside [0,1]");
      }
    }
    check_simplex(b.table_info.progress_probs, simplex_tol, "progress_probs");
    if (!std::isfinite(b.elapsed_s) || b.elapsed_s < 0.0) {
      throw Error(ErrorKind::InvariantViolation, "elapsed_s must be finite and >= 0");
    }
    if (dataset.manifest.label_mode == LabelMode::Exclusive && frame.label.count() > 1) {
      throw Error(ErrorKind::InvariantViolation, "exclusive label with more than one flag");
    }
    episodes[b.episode_id].emplace_back(b.frame_id, b.elapsed_s);
  }
  for (auto& [episode, stamps] : episodes) {
    std::sort(stamps.begin(), stamps.end());
    for (std::size_t i = 1; i < stamps.size(); ++i) {
      if (stamps[i].second < stamps[i - 1].second) {
        throw Error(ErrorKind::InvariantViolation,
                    "elapsed_s decreases within episode " + std::to_string(episode));
      }
    }
  }
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& dataset, double train_fraction,
                                          std::uint64_t seed) {
  if (dataset.empty()) throw Error(ErrorKind::EmptyDataset, "cannot split an empty dataset");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "train_fraction must be in (0, 1]");
  }
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed, 0x51u));
  rng.shuffle(order);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(order.size())));
  std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> eval_idx(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return {subset(dataset, train_idx), subset(dataset, eval_idx)};
}

Dataset subset(const Dataset& dataset, const std::vector<std::size_t>& indices) {
  Dataset out;
  out.manifest = dataset.manifest;
  out.frames.reserve(indices.size());
  for (std::size_t i : indices) out.frames.push_back(dataset.frames.at(i));
  return out;
}

std::array<std::size_t, kServiceClasses> label_counts(const Dataset& dataset) {
  std::array<std::size_t, kServiceClasses> counts{};
  for (const Frame& frame : dataset.frames) {
    const auto f = frame.label.flags();
    for (std::size_t c = 0; c < kServiceClasses; ++c) counts[c] += f[c];
  }
  return counts;
}

// ---------------------------------------------------------------------------
// File IO

namespace {

void append_f32(std::string& out, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
  char bytes[4];
  std::memcpy(bytes, &bits, 4);
  out.append(bytes, 4);
}

float read_f32(const char* p) {
  std::uint32_t bits;
  std::memcpy(&bits, p, 4);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
  return std::bit_cast<float>(bits);
}

void append_all(std::string& out, std::span<const float> values) {
  for (float v : values) append_f32(out, v);
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::IoFailure, "cannot open " + path.string() + " for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error(ErrorKind::IoFailure, "write failed: " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  if (is.bad()) throw Error(ErrorKind::IoFailure, "read failed: " + path.string());
  return ss.str();
}

json manifest_json(const Manifest& m, std::size_t frame_count) {
  const Dims& d = m.dims;
  json j;
  j["dims"] = {{"h", d.h}, {"w", d.w}, {"c", d.c}, {"t", d.t}, {"r", d.r},
               {"d", d.d}, {"k", d.k}, {"a", d.a}, {"p", d.p}};
  j["label_mode"] = std::string(to_string(m.label_mode));
  j["fps"] = m.fps;
  j["frame_count"] = frame_count;
  j["seed_digest"] = m.seed_digest;
  return j;
}

}  // namespace

void save_dataset(const Dataset& dataset, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoFailure, "cannot create " + dir.string() + ": " + ec.message());

  write_file(dir / "manifest.json", manifest_json(dataset.manifest, dataset.size()).dump(2) + "\n");

  std::string blob;
  blob.reserve(dataset.size() * dataset.manifest.dims.floats_per_frame() * 4);
  std::string labels = "episode,frame,refill,trash,dessert,lost\n";
  for (const Frame& frame : dataset.frames) {
    const FeatureBundle& b = frame.bundle;
    append_all(blob, b.backbone_grid);
    append_all(blob, b.encoder_tokens);
    append_all(blob, b.region_features);
    for (const RegionInfo& region : b.table_info.regions) {
      append_all(blob, region.category_probs);
      append_all(blob, region.amount_probs);
      append_all(blob, region.box);
    }
    append_all(blob, b.table_info.progress_probs);
    append_f32(blob, static_cast<float>(b.elapsed_s));

    const auto f = frame.label.flags();
    labels += std::to_string(b.episode_id) + "," + std::to_string(b.frame_id);
    for (bool flag : f) labels += flag ? ",1" : ",0";
    labels += "\n";
  }
  write_file(dir / "features.bin", blob);
  write_file(dir / "labels.csv", labels);
}

Dataset load_dataset(const fs::path& dir) {
  const std::string manifest_text = read_file(dir / "manifest.json");
  const std::string blob = read_file(dir / "features.bin");
  const std::string labels_text = read_file(dir / "labels.csv");

  Dataset dataset;
  std::size_t frame_count = 0;
  try {
    const json j = json::parse(manifest_text);
    const json& jd = j.at("dims");
    Dims& d = dataset.manifest.dims;
    d.h = jd.at("h"); d.w = jd.at("w"); d.c = jd.at("c");
    d.t = jd.at("t"); d.r = jd.at("r"); d.d = jd.at("d");
    d.k = jd.at("k"); d.a = jd.at("a"); d.p = jd.at("p");
    dataset.manifest.label_mode = parse_label_mode(j.at("label_mode").get<std::string>());
    dataset.manifest.fps = j.at("fps");
    dataset.manifest.seed_digest = j.at("seed_digest");
    frame_count = j.at("frame_count");
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ManifestMismatch, dir.string() + "/manifest.json: " + e.what());
  }

  const Dims& d = dataset.manifest.dims;
  const std::size_t per_frame = d.floats_per_frame();
  if (blob.size() != frame_count * per_frame * 4) {
    std::ostringstream msg;
    msg << dir.string() << "/features.bin: " << blob.size() << " bytes, manifest implies "
        << frame_count * per_frame * 4;
    throw Error(ErrorKind::ManifestMismatch, msg.str());
  }

  std::istringstream labels(labels_text);
  std::string line;
  std::getline(labels, line);
  if (line != "episode,frame,refill,trash,dessert,lost") {
    throw Error(ErrorKind::ManifestMismatch, dir.string() + "/labels.csv: bad header");
  }

  const char* cursor = blob.data();
  auto take = [&](std::size_t n) {
    std::vector<float> out(n);
    for (std::size_t i = 0; i < n; ++i, cursor += 4) out[i] = read_f32(cursor);
    return out;
  };

  dataset.frames.reserve(frame_count);
  for (std::size_t i = 0; i < frame_count; ++i) {
    if (!std::getline(labels, line)) {
      throw Error(ErrorKind::ManifestMismatch, dir.string() + "/labels.csv: fewer rows than frame_count");
    }
    Frame frame;
    FeatureBundle& b = frame.bundle;
    long long episode = 0, frame_id = 0;
    int flags[4] = {0, 0, 0, 0};
    if (std::sscanf(line.c_str(), "%lld,%lld,%d,%d,%d,%d", &episode, &frame_id, &flags[0], &flags[1],
                    &flags[2], &flags[3]) != 6) {
      throw Error(ErrorKind::ManifestMismatch, dir.string() + "/labels.csv: malformed row '" + line + "'");
    }
    for (int f : flags) {
      if (f != 0 && f != 1) throw Error(ErrorKind::InvariantViolation, "label flags must be 0 or 1");
    }
    b.episode_id = episode;
    b.frame_id = frame_id;
    frame.label = {flags[0] == 1, flags[1] == 1, flags[2] == 1, flags[3] == 1};

    b.backbone_grid = take(d.h * d.w * d.c);
    b.encoder_tokens = take(d.t * d.d);
    b.region_features = take(d.r * d.d);
    b.table_info.regions.resize(d.r);
    for (RegionInfo& region : b.table_info.regions) {
      region.category_probs = take(d.k);
      region.amount_probs = take(d.a);
      const auto box = take(4);
      std::copy(box.begin(), box.end(), region.box.begin());
    }
    b.table_info.progress_probs = take(d.p);
    b.elapsed_s = read_f32(cursor);
    cursor += 4;
    b.table_info.elapsed_s = b.elapsed_s;
    dataset.frames.push_back(std::move(frame));
  }
  if (std::getline(labels, line) && !line.empty()) {
    throw Error(ErrorKind::ManifestMismatch, dir.string() + "/labels.csv: more rows than frame_count");
  }

  validate_dataset(dataset, 1e-4);
  for (Frame& frame : dataset.frames) {
    for (RegionInfo& region : frame.bundle.table_info.regions) {
      renormalize(region.category_probs);
      renormalize(region.amount_probs);
    }
    renormalize(frame.bundle.table_info.progress_probs);
  }
  return dataset;
}

}  // namespace tablesvc
