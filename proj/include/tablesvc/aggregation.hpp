#pragma once

#include <string_view>
#include <vector>

#include "tablesvc/core.hpp"
#include "tablesvc/matrix.hpp"

namespace tablesvc {

enum class Aggregator { Avg, Max, Attention };

std::string_view to_string(Aggregator agg);
Aggregator parse_aggregator(std::string_view text);

// Linear scoring functional for simple attention: score_i = a . f_i + b.
struct AttentionParams {
  Vector a;
  double b = 0.0;

  friend bool operator==(const AttentionParams&, const AttentionParams&) = default;
};

struct PoolResult {
  Vector vector;
  bool empty = false;  // set when the input had no elements
};

struct AttentionResult {
  Vector output;
  Vector weights;  // softmax over elements
  Vector scores;   // raw a . f_i + b
};

// Packs equal-length vectors as rows; throws DimMismatch on ragged input.
Matrix stack_rows(const std::vector<Vector>& rows);

// Mean over rows. No rows gives a zero vector of width `elements.cols` and
// sets the empty flag.
PoolResult average_pool(const Matrix& elements);

// Coordinate-wise maximum; throws EmptyInput when there are no rows.
Vector max_pool(const Matrix& elements);

// softmax(a . f_i + b) weighted sum. The bias cancels in the softmax, so the
// weights are computed from a . f_i shifted by its maximum.
AttentionResult simple_attention(const Matrix& elements, const AttentionParams& params);

struct AttentionBackward {
  Vector d_a;
  double d_b = 0.0;   // always 0: softmax is shift invariant
  Matrix d_elements;  // only filled when requested
};

// Gradient of the attention output w.r.t. its parameters (and optionally the
// elements), given the upstream gradient `d_output`.
AttentionBackward simple_attention_backward(const Matrix& elements, const AttentionParams& params,
                                            const AttentionResult& forward, std::span<const double> d_output,
                                            bool want_elements);

Vector combine_features(const std::vector<Vector>& parts);

inline constexpr std::size_t kDefaultWindow = 5;

// Aggregates a window of frame vectors (rows, oldest first). Short windows
// at episode start are aggregated over the available rows.
Vector temporal_aggregate(const Matrix& window, Aggregator mode, const AttentionParams* params,
                          std::size_t max_window = kDefaultWindow);

struct EncodedTableInfo {
  Matrix regions;  // R x (K + A + 4): [category | amount | box]
  Vector global;   // P + 1: [progress | min(elapsed / 1800, 2)]
};

inline constexpr double kTimeScale_s = 1800.0;
inline constexpr double kTimeClamp = 2.0;

EncodedTableInfo encode_table_info(const TableInfo& info, const Dims& dims);

}  // namespace tablesvc
