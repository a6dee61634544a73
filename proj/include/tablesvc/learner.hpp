#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tablesvc/aggregation.hpp"
#include "tablesvc/core.hpp"
#include "tablesvc/matrix.hpp"

namespace tablesvc {

// ---------------------------------------------------------------------------
// Model description

enum class Source { Backbone, Encoder, Decoder, TableInfo };

std::string_view to_string(Source source);
Source parse_source(std::string_view text);

struct SourceSpec {
  Source source = Source::Backbone;
  Aggregator aggregator = Aggregator::Avg;

  std::string name() const;  // e.g. "table_info:attention"
  friend bool operator==(const SourceSpec&, const SourceSpec&) = default;
};

SourceSpec parse_source_spec(std::string_view text);

// Which inputs a head consumes and how they are reduced. Source order is the
// concatenation order and therefore part of the model's identity.
struct ModelSignature {
  std::vector<SourceSpec> sources;
  std::optional<Aggregator> temporal;  // unset: single-frame model
  std::size_t window = kDefaultWindow;
  std::size_t projection_dim = 0;  // 0: no projection layer

  std::string describe() const;
  friend bool operator==(const ModelSignature&, const ModelSignature&) = default;
};

nlohmann::json to_json(const ModelSignature& sig);
ModelSignature signature_from_json(const nlohmann::json& j);

// Width of a source's aggregated vector (table info includes the global part).
std::size_t source_width(Source source, const Dims& dims);
std::size_t input_width(const ModelSignature& sig, const Dims& dims);
// 4 service classes, plus a trailing "none" class in exclusive mode.
std::size_t output_classes(LabelMode mode);

struct Projection {
  Matrix matrix;  // projection_dim x input width
  bool frozen = true;

  friend bool operator==(const Projection&, const Projection&) = default;
};

struct HeadParams {
  Matrix weights;  // classes x (projection_dim or input width)
  Vector bias;
  std::map<std::string, AttentionParams> attention;  // keyed by source name or "temporal"
  std::optional<Projection> projection;

  friend bool operator==(const HeadParams&, const HeadParams&) = default;
};

// Named view of one parameter tensor, in a fixed traversal order.
struct ParamBlock {
  std::string path;
  std::span<double> values;
  std::size_t rows = 1;
  std::size_t cols = 0;
  bool frozen = false;
};

std::vector<ParamBlock> param_blocks(HeadParams& params);
HeadParams zeros_like(const HeadParams& params);

struct Model {
  ModelSignature signature;
  Dims dims;
  LabelMode mode = LabelMode::MultiLabel;
  std::uint64_t seed = 0;
  HeadParams params;

  friend bool operator==(const Model&, const Model&) = default;
};

// Affine head with weights uniform in [-1/sqrt(in), 1/sqrt(in)], zero bias.
HeadParams init_params(std::size_t in_dim, std::size_t out_dim, std::uint64_t seed);

// Full model: head, one AttentionParams per attended source (plus temporal),
// optional projection.
Model init_model(const ModelSignature& sig, const Dims& dims, LabelMode mode, std::uint64_t seed,
                 bool frozen_projection = true);

// ---------------------------------------------------------------------------
// Inputs

// Per-frame inputs reduced as far as the signature allows without parameters:
// parameter-free sources are pooled once, attended sources keep elements.
class SampleSet {
 public:
  struct FrameInput {
    std::vector<Vector> fixed;     // per source; empty for attended sources
    std::vector<Matrix> elements;  // per source; empty for pooled sources
    std::vector<Vector> globals;   // per source; table-info global vector
  };

  SampleSet(const Dataset& dataset, const ModelSignature& sig);

  std::size_t size() const { return windows_.size(); }
  const Dims& dims() const { return dims_; }
  const ModelSignature& signature() const { return sig_; }
  const ServiceLabel& label(std::size_t i) const { return labels_[i]; }
  // Frame indices of sample i's window, oldest first, ending at frame i.
  const std::vector<std::size_t>& window(std::size_t i) const { return windows_[i]; }
  const FrameInput& frame(std::size_t j) const { return frames_[j]; }

 private:
  Dims dims_;
  ModelSignature sig_;
  std::vector<FrameInput> frames_;
  std::vector<std::vector<std::size_t>> windows_;
  std::vector<ServiceLabel> labels_;
};

struct Prediction {
  Vector scores;         // logits
  Vector probabilities;  // softmax (exclusive) or per-class sigmoid
};

Prediction affine_forward(const HeadParams& params, std::span<const double> input, LabelMode mode);
Prediction forward(const Model& model, const SampleSet& samples, std::size_t index);

// ---------------------------------------------------------------------------
// Losses

inline constexpr double kProbClamp = 1e-7;

// Exclusive: -w ln p[true]. Multi-label: mean over classes of
// -(w_c y ln p + (1 - y) ln(1 - p)). Probabilities clamped to [1e-7, 1-1e-7].
double task_loss(std::span<const double> probabilities, const ServiceLabel& label, LabelMode mode,
                 std::span<const double> class_weights = {});

struct MultitaskLossParts {
  double loss_c = 0.0;
  double loss_bb = 0.0;
  double loss_a = 0.0;
  double loss_prog = 0.0;
};

// Unweighted sum of the four recognition losses; throws NonFinite.
double combine_multitask_loss(const MultitaskLossParts& parts);

// Inverse label frequency per class, capped at 20 (1 for empty classes).
Vector inverse_frequency_weights(const Dataset& dataset, double cap = 20.0);

// ---------------------------------------------------------------------------
// Gradients

struct LossAndGrad {
  double loss = 0.0;
  HeadParams grad;
};

// Mean loss and gradient over `batch` (sample indices). Frozen projection
// gradients are exact zeros.
LossAndGrad loss_and_grad(const Model& model, const SampleSet& samples, std::span<const std::size_t> batch,
                          std::span<const double> class_weights = {});

HeadParams grad(const Model& model, const SampleSet& samples, std::span<const std::size_t> batch,
                std::span<const double> class_weights = {});

double batch_loss(const Model& model, const SampleSet& samples, std::span<const std::size_t> batch,
                  std::span<const double> class_weights = {});

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_path;  // "weights[2,7]" style
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

// Central differences over every trainable coordinate. `corrupt` perturbs the
// analytic gradient (negative-control hook for tests).
GradCheckReport gradient_check(const Model& model, const SampleSet& samples, std::span<const std::size_t> batch,
                               double epsilon, std::span<const double> class_weights = {},
                               double corrupt = 0.0);

// ---------------------------------------------------------------------------
// Training

struct ScheduleSegment {
  double learning_rate = 1e-2;
  int epochs = 1;
};

std::vector<ScheduleSegment> service_schedule();    // 1e-2 x40, 1e-3 x40, 1e-5 x20
std::vector<ScheduleSegment> base_head_schedule();  // 2e-4 x40, 2e-5 x10

struct TrainConfig {
  std::vector<ScheduleSegment> schedule = service_schedule();
  std::size_t batch_size = 32;
  LabelMode label_mode = LabelMode::MultiLabel;
  std::uint64_t seed = 1;
  bool frozen_projection = true;
  std::optional<Vector> class_weights;  // unset: inverse frequency (multi-label)

  int total_epochs() const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochRecord {
  int epoch = 0;
  double learning_rate = 0.0;
  double loss = 0.0;
  double train_macro_f1 = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpochRecord> history;
};

TrainResult train(const Dataset& train_set, const ModelSignature& sig, const TrainConfig& config);

struct Predictions {
  std::vector<Vector> probabilities;  // per frame
  std::vector<ServiceLabel> labels;   // hard labels
};

// Multi-label: per-class thresholds (default 0.5). Exclusive: argmax, ties
// to the lowest index; the "none" class yields no flags.
ServiceLabel decide(std::span<const double> probabilities, LabelMode mode, std::span<const double> thresholds = {});
Predictions predict(const Model& model, const Dataset& dataset, std::span<const double> thresholds = {});
Predictions predict(const Model& model, const SampleSet& samples, std::span<const double> thresholds = {});

// Header line of JSON, then the parameter blocks as little-endian f32.
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace tablesvc
