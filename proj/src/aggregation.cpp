#include "tablesvc/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace tablesvc {

std::string_view to_string(Aggregator agg) {
  switch (agg) {
    case Aggregator::Avg: return "avg";
    case Aggregator::Max: return "max";
    case Aggregator::Attention: return "attention";
  }
  return "?";
}

Aggregator parse_aggregator(std::string_view text) {
  if (text == "avg" || text == "average") return Aggregator::Avg;
  if (text == "max") return Aggregator::Max;
  if (text == "attention" || text == "attn") return Aggregator::Attention;
  throw Error(ErrorKind::InvalidConfig, "unknown aggregator '" + std::string(text) + "'");
}

Matrix stack_rows(const std::vector<Vector>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols) throw Error(ErrorKind::DimMismatch, "ragged element list");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

PoolResult average_pool(const Matrix& elements) {
  PoolResult out;
  out.vector.assign(elements.cols, 0.0);
  if (elements.rows == 0) {
    out.empty = true;
    return out;
  }
  for (std::size_t r = 0; r < elements.rows; ++r) {
    const auto row = elements.row(r);
    for (std::size_t c = 0; c < elements.cols; ++c) out.vector[c] += row[c];
  }
  const auto n = static_cast<double>(elements.rows);
  for (double& v : out.vector) v /= n;
  return out;
}

Vector max_pool(const Matrix& elements) {
  if (elements.rows == 0) throw Error(ErrorKind::EmptyInput, "max_pool needs at least one element");
  Vector out(elements.row(0).begin(), elements.row(0).end());
  for (std::size_t r = 1; r < elements.rows; ++r) {
    const auto row = elements.row(r);
    for (std::size_t c = 0; c < elements.cols; ++c) out[c] = std::max(out[c], row[c]);
  }
  return out;
}

AttentionResult simple_attention(const Matrix& elements, const AttentionParams& params) {
  if (elements.rows == 0) throw Error(ErrorKind::EmptyInput, "attention needs at least one element");
  if (params.a.size() != elements.cols) {
    throw Error(ErrorKind::DimMismatch, "attention vector width " + std::to_string(params.a.size()) +
                                            " != element width " + std::to_string(elements.cols));
  }
  AttentionResult out;
  out.scores.resize(elements.rows);
  out.weights.resize(elements.rows);
  double top = -INFINITY;
  for (std::size_t r = 0; r < elements.rows; ++r) {
    out.weights[r] = dot(params.a, elements.row(r));
    top = std::max(top, out.weights[r]);
  }
  double total = 0.0;
  for (std::size_t r = 0; r < elements.rows; ++r) {
    out.scores[r] = out.weights[r] + params.b;
    out.weights[r] = std::exp(out.weights[r] - top);
    total += out.weights[r];
  }
  out.output.assign(elements.cols, 0.0);
  for (std::size_t r = 0; r < elements.rows; ++r) {
    out.weights[r] /= total;
    const auto row = elements.row(r);
    for (std::size_t c = 0; c < elements.cols; ++c) out.output[c] += out.weights[r] * row[c];
  }
  return out;
}

AttentionBackward simple_attention_backward(const Matrix& elements, const AttentionParams& params,
                                            const AttentionResult& forward, std::span<const double> d_output,
                                            bool want_elements) {
  AttentionBackward g;
  g.d_a.assign(elements.cols, 0.0);
  if (want_elements) g.d_elements = Matrix(elements.rows, elements.cols);
  // dL/ds_i = w_i (f_i - out) . d_out
  for (std::size_t r = 0; r < elements.rows; ++r) {
    const auto row = elements.row(r);
    double d_score = 0.0;
    for (std::size_t c = 0; c < elements.cols; ++c) d_score += (row[c] - forward.output[c]) * d_output[c];
    d_score *= forward.weights[r];
    for (std::size_t c = 0; c < elements.cols; ++c) g.d_a[c] += d_score * row[c];
    if (want_elements) {
      auto d_row = g.d_elements.row(r);
      for (std::size_t c = 0; c < elements.cols; ++c) {
        d_row[c] = forward.weights[r] * d_output[c] + d_score * params.a[c];
      }
    }
  }
  return g;
}

Vector combine_features(const std::vector<Vector>& parts) {
  Vector out;
  std::size_t total = 0;
  for (const Vector& p : parts) total += p.size();
  out.reserve(total);
  for (const Vector& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

Vector temporal_aggregate(const Matrix& window, Aggregator mode, const AttentionParams* params,
                          std::size_t max_window) {
  if (window.rows == 0) throw Error(ErrorKind::EmptyWindow, "temporal window is empty");
  if (window.rows > max_window) {
    throw Error(ErrorKind::DimMismatch, "window of " + std::to_string(window.rows) + " frames exceeds " +
                                            std::to_string(max_window));
  }
  switch (mode) {
    case Aggregator::Avg: return average_pool(window).vector;
    case Aggregator::Max: return max_pool(window);
    case Aggregator::Attention:
      if (params == nullptr) throw Error(ErrorKind::MissingParams, "attention mode needs parameters");
      return simple_attention(window, *params).output;
  }
  return {};
}

EncodedTableInfo encode_table_info(const TableInfo& info, const Dims& dims) {
  EncodedTableInfo out;
  std::vector<const RegionInfo*> detected;
  for (const RegionInfo& region : info.regions) {
    if (region.category_probs.size() != dims.k || region.amount_probs.size() != dims.a) {
      throw Error(ErrorKind::DimMismatch, "region info does not match dims");
    }
    if (region.box[2] > 0.0f && region.box[3] > 0.0f) detected.push_back(&region);
  }
  out.regions = Matrix(detected.size(), dims.region_info_dim());
  for (std::size_t r = 0; r < detected.size(); ++r) {
    const RegionInfo& region = *detected[r];
    auto row = out.regions.row(r);
    auto it = std::copy(region.category_probs.begin(), region.category_probs.end(), row.begin());
    it = std::copy(region.amount_probs.begin(), region.amount_probs.end(), it);
    std::copy(region.box.begin(), region.box.end(), it);
  }
  if (info.progress_probs.size() != dims.p) throw Error(ErrorKind::DimMismatch, "progress_probs does not match dims");
  out.global.assign(info.progress_probs.begin(), info.progress_probs.end());
  out.global.push_back(std::min(info.elapsed_s / kTimeScale_s, kTimeClamp));
  return out;
}

}  // namespace tablesvc
