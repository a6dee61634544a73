#include "tablesvc/learner.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "tablesvc/metrics.hpp"
#include "tablesvc/rng.hpp"

namespace tablesvc {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Signatures

std::string_view to_string(Source source) {
  switch (source) {
    case Source::Backbone: return "backbone";
    case Source::Encoder: return "encoder";
    case Source::Decoder: return "decoder";
    case Source::TableInfo: return "table_info";
  }
  return "?";
}

Source parse_source(std::string_view text) {
  if (text == "backbone") return Source::Backbone;
  if (text == "encoder") return Source::Encoder;
  if (text == "decoder") return Source::Decoder;
  if (text == "table_info" || text == "table-info" || text == "tableinfo") return Source::TableInfo;
  throw Error(ErrorKind::InvalidConfig, "unknown source '" + std::string(text) + "'");
}

std::string SourceSpec::name() const {
  return std::string(to_string(source)) + ":" + std::string(to_string(aggregator));
}

SourceSpec parse_source_spec(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) return {parse_source(text), Aggregator::Avg};
  return {parse_source(text.substr(0, colon)), parse_aggregator(text.substr(colon + 1))};
}

std::string ModelSignature::describe() const {
  std::string out;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (i > 0) out += "+";
    out += sources[i].name();
  }
  if (temporal) out += "|temporal:" + std::string(to_string(*temporal)) + "/" + std::to_string(window);
  if (projection_dim > 0) out += "|proj:" + std::to_string(projection_dim);
  return out;
}

json to_json(const ModelSignature& sig) {
  json sources = json::array();
  for (const SourceSpec& s : sig.sources) sources.push_back(s.name());
  return {{"sources", sources},
          {"temporal", sig.temporal ? std::string(to_string(*sig.temporal)) : std::string("none")},
          {"window", sig.window},
          {"projection_dim", sig.projection_dim}};
}

ModelSignature signature_from_json(const json& j) {
  ModelSignature sig;
  try {
    for (const auto& s : j.at("sources")) sig.sources.push_back(parse_source_spec(s.get<std::string>()));
    const std::string temporal = j.value("temporal", std::string("none"));
    if (temporal != "none") sig.temporal = parse_aggregator(temporal);
    sig.window = j.value("window", kDefaultWindow);
    sig.projection_dim = j.value("projection_dim", std::size_t{0});
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("signature: ") + e.what());
  }
  if (sig.sources.empty()) throw Error(ErrorKind::InvalidConfig, "signature needs at least one source");
  if (sig.window < 1) throw Error(ErrorKind::InvalidConfig, "window must be >= 1");
  return sig;
}

namespace {

std::size_t element_width(Source source, const Dims& dims) {
  switch (source) {
    case Source::Backbone: return dims.c;
    case Source::Encoder:
    case Source::Decoder: return dims.d;
    case Source::TableInfo: return dims.region_info_dim();
  }
  return 0;
}

std::string attention_key(const SourceSpec& spec) { return std::string(to_string(spec.source)); }
constexpr const char* kTemporalKey = "temporal";

Matrix to_matrix(const std::vector<float>& values, std::size_t rows, std::size_t cols) {
  if (values.size() != rows * cols) throw Error(ErrorKind::DimMismatch, "feature array does not match dims");
  Matrix m(rows, cols);
  std::copy(values.begin(), values.end(), m.data.begin());
  return m;
}

}  // namespace

std::size_t source_width(Source source, const Dims& dims) {
  return element_width(source, dims) + (source == Source::TableInfo ? dims.global_info_dim() : 0);
}

std::size_t input_width(const ModelSignature& sig, const Dims& dims) {
  std::size_t total = 0;
  for (const SourceSpec& s : sig.sources) total += source_width(s.source, dims);
  return total;
}

std::size_t output_classes(LabelMode mode) {
  return mode == LabelMode::Exclusive ? kServiceClasses + 1 : kServiceClasses;
}

// ---------------------------------------------------------------------------
// Parameters

std::vector<ParamBlock> param_blocks(HeadParams& p) {
  std::vector<ParamBlock> blocks;
  blocks.push_back({"weights", p.weights.data, p.weights.rows, p.weights.cols, false});
  blocks.push_back({"bias", p.bias, 1, p.bias.size(), false});
  for (auto& [key, att] : p.attention) {
    blocks.push_back({"attention." + key + ".a", att.a, 1, att.a.size(), false});
    blocks.push_back({"attention." + key + ".b", std::span<double>(&att.b, 1), 1, 1, false});
  }
  if (p.projection) {
    Projection& proj = *p.projection;
    blocks.push_back({"projection", proj.matrix.data, proj.matrix.rows, proj.matrix.cols, proj.frozen});
  }
  return blocks;
}

HeadParams zeros_like(const HeadParams& params) {
  HeadParams z = params;
  std::fill(z.weights.data.begin(), z.weights.data.end(), 0.0);
  std::fill(z.bias.begin(), z.bias.end(), 0.0);
  for (auto& [key, att] : z.attention) {
    std::fill(att.a.begin(), att.a.end(), 0.0);
    att.b = 0.0;
  }
  if (z.projection) std::fill(z.projection->matrix.data.begin(), z.projection->matrix.data.end(), 0.0);
  return z;
}

HeadParams init_params(std::size_t in_dim, std::size_t out_dim, std::uint64_t seed) {
  if (in_dim < 1 || out_dim < 1) throw Error(ErrorKind::InvalidDim, "head dims must be >= 1");
  Rng rng(derive_seed(seed, 0x11));
  HeadParams p;
  p.weights = Matrix(out_dim, in_dim);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  for (double& w : p.weights.data) w = rng.uniform(-bound, bound);
  p.bias.assign(out_dim, 0.0);
  return p;
}

Model init_model(const ModelSignature& sig, const Dims& dims, LabelMode mode, std::uint64_t seed,
                 bool frozen_projection) {
  if (sig.sources.empty()) throw Error(ErrorKind::InvalidConfig, "signature needs at least one source");
  if (sig.window < 1) throw Error(ErrorKind::InvalidConfig, "window must be >= 1");
  Model model;
  model.signature = sig;
  model.dims = dims;
  model.mode = mode;
  model.seed = seed;

  const std::size_t width = input_width(sig, dims);
  const std::size_t head_in = sig.projection_dim > 0 ? sig.projection_dim : width;
  model.params = init_params(head_in, output_classes(mode), derive_seed(seed, 1));

  std::uint64_t stream = 0;
  auto attention = [&](std::size_t n) {
    Rng rng(derive_seed(seed, 2, stream++));
    AttentionParams att;
    const double bound = 1.0 / std::sqrt(static_cast<double>(n));
    att.a.resize(n);
    for (double& v : att.a) v = rng.uniform(-bound, bound);
    return att;
  };
  for (const SourceSpec& s : sig.sources) {
    if (s.aggregator == Aggregator::Attention) {
      const std::string key = attention_key(s);
      if (model.params.attention.contains(key)) {
        throw Error(ErrorKind::InvalidConfig, "source '" + key + "' attended twice");
      }
      model.params.attention.emplace(key, attention(element_width(s.source, dims)));
    }
  }
  if (sig.temporal == Aggregator::Attention) model.params.attention.emplace(kTemporalKey, attention(width));

  if (sig.projection_dim > 0) {
    Rng rng(derive_seed(seed, 3));
    Projection proj;
    proj.matrix = Matrix(sig.projection_dim, width);
    const double bound = 1.0 / std::sqrt(static_cast<double>(width));
    for (double& v : proj.matrix.data) v = rng.uniform(-bound, bound);
    proj.frozen = frozen_projection;
    model.params.projection = std::move(proj);
  }
  return model;
}

// ---------------------------------------------------------------------------
// Sample sets

SampleSet::SampleSet(const Dataset& dataset, const ModelSignature& sig) : dims_(dataset.manifest.dims), sig_(sig) {
  if (sig.sources.empty()) throw Error(ErrorKind::InvalidConfig, "signature needs at least one source");
  const Dims& d = dims_;
  const std::size_t n_sources = sig.sources.size();
  frames_.reserve(dataset.size());
  labels_.reserve(dataset.size());
  for (const Frame& frame : dataset.frames) {
    const FeatureBundle& b = frame.bundle;
    FrameInput in;
    in.fixed.resize(n_sources);
    in.elements.resize(n_sources);
    in.globals.resize(n_sources);
    for (std::size_t s = 0; s < n_sources; ++s) {
      const SourceSpec& spec = sig.sources[s];
      Matrix elements;
      Vector global;
      switch (spec.source) {
        case Source::Backbone: elements = to_matrix(b.backbone_grid, d.h * d.w, d.c); break;
        case Source::Encoder: elements = to_matrix(b.encoder_tokens, d.t, d.d); break;
        case Source::Decoder: elements = to_matrix(b.region_features, d.r, d.d); break;
        case Source::TableInfo: {
          EncodedTableInfo enc = encode_table_info(b.table_info, d);
          elements = std::move(enc.regions);
          global = std::move(enc.global);
          break;
        }
      }
      // A frame with no detected regions pools to zeros under every aggregator.
      if (spec.aggregator == Aggregator::Attention) {
        in.elements[s] = std::move(elements);
        in.globals[s] = std::move(global);
      } else {
        Vector pooled = spec.aggregator == Aggregator::Max && elements.rows > 0 ? max_pool(elements)
                                                                                : average_pool(elements).vector;
        pooled.insert(pooled.end(), global.begin(), global.end());
        in.fixed[s] = std::move(pooled);
      }
    }
    frames_.push_back(std::move(in));
    labels_.push_back(frame.label);
  }

  windows_.resize(dataset.size());
  if (!sig.temporal) {
    for (std::size_t i = 0; i < windows_.size(); ++i) windows_[i] = {i};
    return;
  }
  std::map<std::pair<std::int64_t, std::int64_t>, std::size_t> index;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    index.emplace(std::make_pair(dataset.frames[i].bundle.episode_id, dataset.frames[i].bundle.frame_id), i);
  }
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const FeatureBundle& b = dataset.frames[i].bundle;
    for (std::size_t back = sig.window; back-- > 1;) {
      const auto it = index.find({b.episode_id, b.frame_id - static_cast<std::int64_t>(back)});
      if (it != index.end()) windows_[i].push_back(it->second);
    }
    windows_[i].push_back(i);
  }
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

struct FrameTrace {
  Vector x;
  std::vector<AttentionResult> attention;  // per source; unused for pooled ones
};

struct Trace {
  std::vector<FrameTrace> frames;
  Matrix window;
  AttentionResult temporal_attention;
  Vector z;  // input to the (optional) projection
  Vector u;  // input to the affine head
  Vector logits;
};

std::vector<std::size_t> source_offsets(const ModelSignature& sig, const Dims& dims) {
  std::vector<std::size_t> offsets;
  std::size_t at = 0;
  for (const SourceSpec& s : sig.sources) {
    offsets.push_back(at);
    at += source_width(s.source, dims);
  }
  return offsets;
}

const AttentionParams& attention_params(const HeadParams& p, const std::string& key) {
  const auto it = p.attention.find(key);
  if (it == p.attention.end()) throw Error(ErrorKind::MissingParams, "no attention parameters for '" + key + "'");
  return it->second;
}

FrameTrace forward_frame(const Model& m, const SampleSet::FrameInput& in) {
  const ModelSignature& sig = m.signature;
  FrameTrace ft;
  ft.x.reserve(input_width(sig, m.dims));
  ft.attention.resize(sig.sources.size());
  for (std::size_t s = 0; s < sig.sources.size(); ++s) {
    if (sig.sources[s].aggregator == Aggregator::Attention) {
      const AttentionParams& params = attention_params(m.params, attention_key(sig.sources[s]));
      if (in.elements[s].rows == 0) ft.attention[s].output.assign(in.elements[s].cols, 0.0);
      else ft.attention[s] = simple_attention(in.elements[s], params);
      ft.x.insert(ft.x.end(), ft.attention[s].output.begin(), ft.attention[s].output.end());
      ft.x.insert(ft.x.end(), in.globals[s].begin(), in.globals[s].end());
    } else {
      ft.x.insert(ft.x.end(), in.fixed[s].begin(), in.fixed[s].end());
    }
  }
  return ft;
}

Vector affine(const Matrix& w, std::span<const double> bias, std::span<const double> x) {
  if (w.cols != x.size()) {
    throw Error(ErrorKind::DimMismatch,
                "input width " + std::to_string(x.size()) + " != weight width " + std::to_string(w.cols));
  }
  Vector out(w.rows);
  for (std::size_t r = 0; r < w.rows; ++r) out[r] = dot(w.row(r), x) + (bias.empty() ? 0.0 : bias[r]);
  return out;
}

Trace forward_trace(const Model& m, const SampleSet& samples, std::size_t index) {
  const ModelSignature& sig = m.signature;
  if (!(samples.signature() == sig)) throw Error(ErrorKind::DimMismatch, "sample set built for another signature");
  if (!(samples.dims() == m.dims)) throw Error(ErrorKind::DimMismatch, "sample set dims differ from model dims");
  Trace tr;
  const auto& window = samples.window(index);
  for (std::size_t j : window) tr.frames.push_back(forward_frame(m, samples.frame(j)));

  if (!sig.temporal) {
    tr.z = tr.frames.front().x;
  } else {
    tr.window = Matrix(tr.frames.size(), tr.frames.front().x.size());
    for (std::size_t j = 0; j < tr.frames.size(); ++j) {
      std::copy(tr.frames[j].x.begin(), tr.frames[j].x.end(), tr.window.row(j).begin());
    }
    if (*sig.temporal == Aggregator::Attention) {
      tr.temporal_attention = simple_attention(tr.window, attention_params(m.params, kTemporalKey));
      tr.z = tr.temporal_attention.output;
    } else {
      tr.z = temporal_aggregate(tr.window, *sig.temporal, nullptr, sig.window);
    }
  }
  tr.u = m.params.projection ? affine(m.params.projection->matrix, {}, tr.z) : tr.z;
  tr.logits = affine(m.params.weights, m.params.bias, tr.u);
  return tr;
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Vector probabilities_from_logits(const Vector& logits, LabelMode mode) {
  Vector p(logits.size());
  if (mode == LabelMode::MultiLabel) {
    for (std::size_t c = 0; c < logits.size(); ++c) p[c] = sigmoid(logits[c]);
    return p;
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) total += (p[c] = std::exp(logits[c] - top));
  for (double& v : p) v /= total;
  return p;
}

double weight_for(std::span<const double> weights, std::size_t c) {
  return c < weights.size() ? weights[c] : 1.0;
}

// Loss on logits, consistent with task_loss on the clamped probabilities;
// clamped terms contribute no gradient.
double logits_loss(const Vector& logits, const Vector& probs, const ServiceLabel& label, LabelMode mode,
                   std::span<const double> weights, Vector* d_logits) {
  const double lo = kProbClamp;
  const double hi = 1.0 - kProbClamp;
  if (d_logits) d_logits->assign(logits.size(), 0.0);
  if (mode == LabelMode::Exclusive) {
    const std::size_t y = label.exclusive().exclusive_index();
    if (y >= logits.size()) throw Error(ErrorKind::InvalidLabel, "label class outside head outputs");
    const double w = weight_for(weights, y);
    const double top = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double l : logits) total += std::exp(l - top);
    const double log_p = logits[y] - top - std::log(total);
    const double p = probs[y];
    if (p < lo) return -w * std::log(lo);
    if (p > hi) return -w * std::log(hi);
    if (d_logits) {
      for (std::size_t k = 0; k < logits.size(); ++k) (*d_logits)[k] = w * (probs[k] - (k == y ? 1.0 : 0.0));
    }
    return -w * log_p;
  }
  const auto flags = label.flags();
  const auto n = static_cast<double>(logits.size());
  double loss = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    const double p = probs[c];
    const double l = logits[c];
    double term = 0.0;
    double g = 0.0;
    if (flags[c]) {
      const double w = weight_for(weights, c);
      if (p < lo) term = -w * std::log(lo);
      else if (p > hi) term = -w * std::log(hi);
      else {
        term = w * softplus(-l);
        g = w * (p - 1.0);
      }
    } else {
      if (p > hi) term = -std::log(lo);
      else if (p < lo) term = -std::log(hi);
      else {
        term = softplus(l);
        g = p;
      }
    }
    loss += term;
    if (d_logits) (*d_logits)[c] = g / n;
  }
  return loss / n;
}

bool needs_input_gradient(const Model& m) {
  if (m.signature.temporal == Aggregator::Attention) return true;
  return std::any_of(m.signature.sources.begin(), m.signature.sources.end(),
                     [](const SourceSpec& s) { return s.aggregator == Aggregator::Attention; });
}

void backward(const Model& m, const SampleSet& samples, std::size_t index, const Trace& tr, const Vector& d_logits,
              HeadParams& g) {
  const HeadParams& p = m.params;
  const std::size_t classes = p.weights.rows;
  const std::size_t head_in = p.weights.cols;
  for (std::size_t k = 0; k < classes; ++k) {
    const double dk = d_logits[k];
    if (dk == 0.0) continue;
    auto gw = g.weights.row(k);
    for (std::size_t j = 0; j < head_in; ++j) gw[j] += dk * tr.u[j];
    g.bias[k] += dk;
  }
  const bool want_projection = p.projection && !p.projection->frozen;
  const bool want_input = needs_input_gradient(m);
  if (!want_projection && !want_input) return;

  Vector du(head_in, 0.0);
  for (std::size_t k = 0; k < classes; ++k) {
    const auto w = p.weights.row(k);
    for (std::size_t j = 0; j < head_in; ++j) du[j] += w[j] * d_logits[k];
  }
  Vector dz;
  if (p.projection) {
    const Matrix& proj = p.projection->matrix;
    if (want_projection) {
      for (std::size_t r = 0; r < proj.rows; ++r) {
        auto gp = g.projection->matrix.row(r);
        for (std::size_t c = 0; c < proj.cols; ++c) gp[c] += du[r] * tr.z[c];
      }
    }
    if (!want_input) return;
    dz.assign(proj.cols, 0.0);
    for (std::size_t r = 0; r < proj.rows; ++r) {
      const auto row = proj.row(r);
      for (std::size_t c = 0; c < proj.cols; ++c) dz[c] += row[c] * du[r];
    }
  } else {
    dz = std::move(du);
  }

  // Gradient w.r.t. each frame vector in the window.
  const ModelSignature& sig = m.signature;
  const std::size_t n_frames = tr.frames.size();
  Matrix dx(n_frames, dz.size());
  if (!sig.temporal) {
    std::copy(dz.begin(), dz.end(), dx.row(0).begin());
  } else if (*sig.temporal == Aggregator::Avg) {
    for (std::size_t j = 0; j < n_frames; ++j) {
      for (std::size_t c = 0; c < dz.size(); ++c) dx(j, c) = dz[c] / static_cast<double>(n_frames);
    }
  } else if (*sig.temporal == Aggregator::Max) {
    for (std::size_t c = 0; c < dz.size(); ++c) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < n_frames; ++j) {
        if (tr.window(j, c) > tr.window(best, c)) best = j;
      }
      dx(best, c) = dz[c];
    }
  } else {
    const AttentionParams& att = attention_params(p, kTemporalKey);
    AttentionBackward back = simple_attention_backward(tr.window, att, tr.temporal_attention, dz, true);
    auto& ga = g.attention.at(kTemporalKey);
    for (std::size_t c = 0; c < ga.a.size(); ++c) ga.a[c] += back.d_a[c];
    dx = std::move(back.d_elements);
  }

  const auto offsets = source_offsets(sig, m.dims);
  const auto& window = samples.window(index);
  for (std::size_t j = 0; j < n_frames; ++j) {
    const SampleSet::FrameInput& in = samples.frame(window[j]);
    for (std::size_t s = 0; s < sig.sources.size(); ++s) {
      if (sig.sources[s].aggregator != Aggregator::Attention || in.elements[s].rows == 0) continue;
      const std::string key = attention_key(sig.sources[s]);
      const Matrix& elements = in.elements[s];
      const std::span<const double> slice(dx.row(j).data() + offsets[s], elements.cols);
      const AttentionBackward back =
          simple_attention_backward(elements, attention_params(p, key), tr.frames[j].attention[s], slice, false);
      auto& ga = g.attention.at(key);
      for (std::size_t c = 0; c < ga.a.size(); ++c) ga.a[c] += back.d_a[c];
    }
  }
}

// Sum of per-sample losses and gradients; probabilities optionally captured.
double accumulate(const Model& m, const SampleSet& samples, std::span<const std::size_t> batch,
                  std::span<const double> weights, HeadParams* g, std::vector<Vector>* probs_out) {
  double total = 0.0;
  Vector d_logits;
  for (std::size_t i : batch) {
    const Trace tr = forward_trace(m, samples, i);
    const Vector probs = probabilities_from_logits(tr.logits, m.mode);
    total += logits_loss(tr.logits, probs, samples.label(i), m.mode, weights, g ? &d_logits : nullptr);
    if (g) backward(m, samples, i, tr, d_logits, *g);
    if (probs_out) probs_out->push_back(probs);
  }
  return total;
}

void scale(HeadParams& g, double factor) {
  for (ParamBlock& b : param_blocks(g)) {
    for (double& v : b.values) v *= factor;
  }
}

}  // namespace

Prediction affine_forward(const HeadParams& params, std::span<const double> input, LabelMode mode) {
  Prediction out;
  out.scores = affine(params.weights, params.bias, input);
  out.probabilities = probabilities_from_logits(out.scores, mode);
  return out;
}

Prediction forward(const Model& model, const SampleSet& samples, std::size_t index) {
  Prediction out;
  out.scores = forward_trace(model, samples, index).logits;
  out.probabilities = probabilities_from_logits(out.scores, model.mode);
  return out;
}

// ---------------------------------------------------------------------------
// Losses

double task_loss(std::span<const double> probabilities, const ServiceLabel& label, LabelMode mode,
                 std::span<const double> class_weights) {
  auto clamp = [](double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); };
  for (double p : probabilities) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::InvalidProbabilities, "probability outside [0,1]");
  }
  if (mode == LabelMode::Exclusive) {
    if (label.count() > 1) throw Error(ErrorKind::InvalidLabel, "exclusive label with more than one flag");
    const std::size_t y = label.exclusive_index();
    if (y >= probabilities.size()) throw Error(ErrorKind::InvalidLabel, "label class outside prediction");
    return -weight_for(class_weights, y) * std::log(clamp(probabilities[y]));
  }
  if (probabilities.size() != kServiceClasses) throw Error(ErrorKind::InvalidLabel, "need four class probabilities");
  const auto flags = label.flags();
  double loss = 0.0;
  for (std::size_t c = 0; c < kServiceClasses; ++c) {
    const double p = clamp(probabilities[c]);
    loss += flags[c] ? -weight_for(class_weights, c) * std::log(p) : -std::log(1.0 - p);
  }
  return loss / static_cast<double>(kServiceClasses);
}

double combine_multitask_loss(const MultitaskLossParts& parts) {
  for (double v : {parts.loss_c, parts.loss_bb, parts.loss_a, parts.loss_prog}) {
    if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, "multitask loss part is not finite");
  }
  return parts.loss_c + parts.loss_bb + parts.loss_a + parts.loss_prog;
}

Vector inverse_frequency_weights(const Dataset& dataset, double cap) {
  const auto counts = label_counts(dataset);
  Vector w(kServiceClasses, 1.0);
  for (std::size_t c = 0; c < kServiceClasses; ++c) {
    if (counts[c] > 0) {
      w[c] = std::min(cap, static_cast<double>(dataset.size()) / static_cast<double>(counts[c]));
    }
  }
  return w;
}

// ---------------------------------------------------------------------------
// Gradients

LossAndGrad loss_and_grad(const Model& model, const SampleSet& samples, std::span<const std::size_t> batch,
                          std::span<const double> class_weights) {
  if (batch.empty()) throw Error(ErrorKind::EmptyInput, "empty batch");
  LossAndGrad out;
  out.grad = zeros_like(model.params);
  out.loss = accumulate(model, samples, batch, class_weights, &out.grad, nullptr);
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv;
  scale(out.grad, inv);
  return out;
}

HeadParams grad(const Model& model, const SampleSet& samples, std::span<const std::size_t> batch,
                std::span<const double> class_weights) {
  return loss_and_grad(model, samples, batch, class_weights).grad;
}

double batch_loss(const Model& model, const SampleSet& samples, std::span<const std::size_t> batch,
                  std::span<const double> class_weights) {
  if (batch.empty()) throw Error(ErrorKind::EmptyInput, "empty batch");
  return accumulate(model, samples, batch, class_weights, nullptr, nullptr) / static_cast<double>(batch.size());
}

GradCheckReport gradient_check(const Model& model, const SampleSet& samples, std::span<const std::size_t> batch,
                               double epsilon, std::span<const double> class_weights, double corrupt) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) throw Error(ErrorKind::InvalidConfig, "epsilon must be in [1e-7, 1e-3]");
  HeadParams analytic = grad(model, samples, batch, class_weights);
  Model probe = model;
  auto probe_blocks = param_blocks(probe.params);
  const auto grad_blocks = param_blocks(analytic);

  GradCheckReport report;
  for (std::size_t b = 0; b < probe_blocks.size(); ++b) {
    ParamBlock& block = probe_blocks[b];
    if (block.frozen) continue;
    for (std::size_t i = 0; i < block.values.size(); ++i) {
      const double saved = block.values[i];
      block.values[i] = saved + epsilon;
      const double up = batch_loss(probe, samples, batch, class_weights);
      block.values[i] = saved - epsilon;
      const double down = batch_loss(probe, samples, batch, class_weights);
      block.values[i] = saved;

      const double numeric = (up - down) / (2.0 * epsilon);
      const double g = grad_blocks[b].values[i] + corrupt;
      const double rel = std::abs(g - numeric) / std::max({std::abs(g), std::abs(numeric), 1e-8});
      ++report.checked;
      if (rel > report.max_rel_error || report.worst_path.empty()) {
        std::ostringstream path;
        path << block.path << "[" << i / block.cols << "," << i % block.cols << "]";
        report.max_rel_error = rel;
        report.worst_path = path.str();
        report.analytic = g;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Training

std::vector<ScheduleSegment> service_schedule() { return {{1e-2, 40}, {1e-3, 40}, {1e-5, 20}}; }
std::vector<ScheduleSegment> base_head_schedule() { return {{2e-4, 40}, {2e-5, 10}}; }

int TrainConfig::total_epochs() const {
  int total = 0;
  for (const ScheduleSegment& s : schedule) total += s.epochs;
  return total;
}

json to_json(const TrainConfig& c) {
  json schedule = json::array();
  for (const ScheduleSegment& s : c.schedule) schedule.push_back({s.learning_rate, s.epochs});
  json j = {{"schedule", schedule},
            {"batch_size", c.batch_size},
            {"label_mode", std::string(to_string(c.label_mode))},
            {"seed", c.seed},
            {"frozen_projection", c.frozen_projection}};
  j["class_weights"] = c.class_weights ? json(*c.class_weights) : json(nullptr);
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  try {
    if (j.contains("schedule")) {
      const json& s = j["schedule"];
      if (s.is_string()) {
        const std::string name = s.get<std::string>();
        if (name == "service") c.schedule = service_schedule();
        else if (name == "base-head") c.schedule = base_head_schedule();
        else throw Error(ErrorKind::InvalidConfig, "unknown schedule '" + name + "'");
      } else {
        c.schedule.clear();
        for (const auto& seg : s) c.schedule.push_back({seg.at(0).get<double>(), seg.at(1).get<int>()});
      }
    }
    c.batch_size = j.value("batch_size", c.batch_size);
    if (j.contains("label_mode")) c.label_mode = parse_label_mode(j["label_mode"].get<std::string>());
    c.seed = j.value("seed", c.seed);
    c.frozen_projection = j.value("frozen_projection", c.frozen_projection);
    if (j.contains("class_weights") && !j["class_weights"].is_null()) {
      c.class_weights = j["class_weights"].get<Vector>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("train config: ") + e.what());
  }
  return c;
}

namespace {

void validate(const TrainConfig& c) {
  if (c.schedule.empty()) throw Error(ErrorKind::InvalidConfig, "schedule must not be empty");
  for (const ScheduleSegment& s : c.schedule) {
    if (!(s.learning_rate > 0.0) || s.epochs < 1) {
      throw Error(ErrorKind::InvalidConfig, "schedule segments need learning_rate > 0 and epochs >= 1");
    }
  }
  if (c.batch_size < 1) throw Error(ErrorKind::InvalidConfig, "batch_size must be >= 1");
}

}  // namespace

TrainResult train(const Dataset& train_set, const ModelSignature& sig, const TrainConfig& config) {
  if (train_set.empty()) throw Error(ErrorKind::EmptyDataset, "cannot train on an empty dataset");
  validate(config);

  TrainResult result;
  result.model = init_model(sig, train_set.manifest.dims, config.label_mode, config.seed, config.frozen_projection);
  Model& model = result.model;
  const SampleSet samples(train_set, sig);

  Vector weights;
  if (config.class_weights) weights = *config.class_weights;
  else if (config.label_mode == LabelMode::MultiLabel) weights = inverse_frequency_weights(train_set);

  std::vector<ServiceLabel> truth;
  truth.reserve(samples.size());
  for (const Frame& f : train_set.frames) {
    truth.push_back(config.label_mode == LabelMode::Exclusive ? f.label.exclusive() : f.label);
  }

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(config.seed, 0x7a1));
  std::vector<Vector> epoch_probs;
  std::vector<ServiceLabel> epoch_pred(samples.size());
  std::vector<ServiceLabel> epoch_truth(samples.size());
  int epoch = 0;
  for (const ScheduleSegment& segment : config.schedule) {
    for (int e = 0; e < segment.epochs; ++e, ++epoch) {
      rng.shuffle(order);
      double epoch_loss = 0.0;
      std::size_t seen = 0;
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t end = std::min(order.size(), start + config.batch_size);
        const std::span<const std::size_t> batch(order.data() + start, end - start);
        HeadParams g = zeros_like(model.params);
        epoch_probs.clear();
        const double loss = accumulate(model, samples, batch, weights, &g, &epoch_probs);
        if (!std::isfinite(loss)) {
          throw Error(ErrorKind::DivergedLoss, "non-finite loss at epoch " + std::to_string(epoch));
        }
        for (std::size_t k = 0; k < batch.size(); ++k) {
          epoch_pred[seen + k] = decide(epoch_probs[k], model.mode);
          epoch_truth[seen + k] = truth[batch[k]];
        }
        seen += batch.size();
        epoch_loss += loss;

        const double step = segment.learning_rate / static_cast<double>(batch.size());
        auto blocks = param_blocks(model.params);
        const auto grads = param_blocks(g);
        for (std::size_t b = 0; b < blocks.size(); ++b) {
          if (blocks[b].frozen) continue;
          for (std::size_t i = 0; i < blocks[b].values.size(); ++i) blocks[b].values[i] -= step * grads[b].values[i];
        }
      }
      const auto counts = confusion_counts(epoch_truth, epoch_pred);
      result.history.push_back({epoch + 1, segment.learning_rate, epoch_loss / static_cast<double>(samples.size()),
                                f1_scores(counts).macro_f1});
    }
  }
  return result;
}

ServiceLabel decide(std::span<const double> probabilities, LabelMode mode, std::span<const double> thresholds) {
  if (mode == LabelMode::Exclusive) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < probabilities.size(); ++c) {
      if (probabilities[c] > probabilities[best]) best = c;
    }
    std::array<bool, kServiceClasses> flags{};
    if (best < kServiceClasses) flags[best] = true;
    return ServiceLabel::from_flags(flags);
  }
  std::array<bool, kServiceClasses> flags{};
  for (std::size_t c = 0; c < kServiceClasses && c < probabilities.size(); ++c) {
    const double threshold = c < thresholds.size() ? thresholds[c] : 0.5;
    flags[c] = probabilities[c] >= threshold;
  }
  return ServiceLabel::from_flags(flags);
}

Predictions predict(const Model& model, const SampleSet& samples, std::span<const double> thresholds) {
  Predictions out;
  out.probabilities.reserve(samples.size());
  out.labels.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    Prediction p = forward(model, samples, i);
    out.labels.push_back(decide(p.probabilities, model.mode, thresholds));
    out.probabilities.push_back(std::move(p.probabilities));
  }
  return out;
}

Predictions predict(const Model& model, const Dataset& dataset, std::span<const double> thresholds) {
  if (!(dataset.manifest.dims == model.dims)) throw Error(ErrorKind::DimMismatch, "dataset dims differ from model");
  return predict(model, SampleSet(dataset, model.signature), thresholds);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kCheckpointFormat = "tablesvc-checkpoint-1";

json dims_json(const Dims& d) {
  return {{"h", d.h}, {"w", d.w}, {"c", d.c}, {"t", d.t}, {"r", d.r},
          {"d", d.d}, {"k", d.k}, {"a", d.a}, {"p", d.p}};
}

Dims dims_from_json(const json& j) {
  Dims d;
  d.h = j.at("h"); d.w = j.at("w"); d.c = j.at("c");
  d.t = j.at("t"); d.r = j.at("r"); d.d = j.at("d");
  d.k = j.at("k"); d.a = j.at("a"); d.p = j.at("p");
  return d;
}

}  // namespace

void save_model(const Model& model, const std::filesystem::path& path) {
  Model copy = model;
  json blocks = json::array();
  std::string blob;
  for (const ParamBlock& b : param_blocks(copy.params)) {
    blocks.push_back({{"path", b.path}, {"rows", b.rows}, {"cols", b.cols}, {"frozen", b.frozen}});
    for (double v : b.values) {
      std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
      char bytes[4];
      std::memcpy(bytes, &bits, 4);
      blob.append(bytes, 4);
    }
  }
  const json header = {{"format", kCheckpointFormat},
                       {"signature", to_json(model.signature)},
                       {"dims", dims_json(model.dims)},
                       {"mode", std::string(to_string(model.mode))},
                       {"seed", model.seed},
                       {"frozen_projection", model.params.projection ? model.params.projection->frozen : true},
                       {"blocks", blocks},
                       {"blob_bytes", blob.size()}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
  os << header.dump() << "\n";
  os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!os) throw Error(ErrorKind::IoFailure, "write failed: " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  std::string header_line;
  std::getline(is, header_line);
  std::string blob((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());

  Model model;
  try {
    const json header = json::parse(header_line);
    if (header.at("format") != kCheckpointFormat) throw Error(ErrorKind::ManifestMismatch, "unknown checkpoint format");
    model = init_model(signature_from_json(header.at("signature")), dims_from_json(header.at("dims")),
                       parse_label_mode(header.at("mode").get<std::string>()), header.at("seed").get<std::uint64_t>(),
                       header.at("frozen_projection").get<bool>());
    if (header.at("blob_bytes").get<std::size_t>() != blob.size()) {
      throw Error(ErrorKind::ManifestMismatch, path.string() + ": parameter blob length mismatch");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ManifestMismatch, path.string() + ": " + e.what());
  }
  std::size_t expected = 0;
  auto blocks = param_blocks(model.params);
  for (const ParamBlock& b : blocks) expected += b.values.size() * 4;
  if (expected != blob.size()) throw Error(ErrorKind::ManifestMismatch, path.string() + ": blob does not match signature");
  const char* cursor = blob.data();
  for (ParamBlock& b : blocks) {
    for (double& v : b.values) {
      std::uint32_t bits;
      std::memcpy(&bits, cursor, 4);
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
      v = std::bit_cast<float>(bits);
      cursor += 4;
    }
  }
  return model;
}

}  // namespace tablesvc
