#pragma once

// Cross-frame self-attention: plain scaled dot-product attention, value
// mapping onto a rotating reference frame, dual-softmax matching confidence
// and the confidence-gated blend of the two.
//
// The functions in this header are the OpenMP kernels used by the sampler.
// framewise/attention_serial.hpp carries a plain serial implementation of the
// same operations that the tests and benchmarks compare against.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "framewise/matrix.hpp"

namespace framewise::attention {

enum class Mode {
    per_frame,     // each frame attends to itself
    first_frame,   // every frame attends to frame 1's keys/values
    sparse_causal, // frame f attends to frames 1 and f-1
    rvm,           // rotational value mapping
    rvm_dsf,       // rotational value mapping + dual-softmax filtering
};

std::string_view to_string(Mode mode);
/// Throws std::invalid_argument on an unknown name.
Mode parse_mode(std::string_view name);
std::vector<Mode> all_modes();

struct CrossFrameConfig {
    Mode mode = Mode::rvm_dsf;
    int period = 4;         // m: timesteps per reference frame
    double quantile = 0.4;  // q: confidence quantile used as the mask threshold
    bool scale_dual_softmax = true;

    void validate() const;
};

/// Per-frame query/key/value, each F matrices of N x d.
struct FrameQKV {
    std::vector<Matrix> queries;
    std::vector<Matrix> keys;
    std::vector<Matrix> values;

    std::size_t frames() const { return queries.size(); }
    void validate() const;
};

/// Non-owning view of one frame's keys and values.
struct FrameKV {
    const Matrix *keys = nullptr;
    const Matrix *values = nullptr;
};

struct ConfidenceMask {
    std::vector<std::uint8_t> mask; // one entry per target token, 0 or 1
    double phi = 0.0;               // threshold the confidences were compared against
};

/// Softmax(Q K^T / sqrt(d)) V. K and V may have a different token count than Q.
Matrix scaled_attention(const Matrix &q, const Matrix &k, const Matrix &v);

/// 1-based reference frame for a step counted from the start of value mapping:
/// (floor(t_prime / period) mod frames) + 1.
int rotational_reference(long t_prime, int period, int frames);

/// Frame f's queries against the reference frame's keys and values.
Matrix value_map(const Matrix &q_f, const Matrix &k_ref, const Matrix &v_ref);

/// Elementwise product of the row softmax of S = Q_f K_ref^T and the column
/// softmax of the same logits (the transposed Softmax(K_ref Q_f^T)). S is
/// divided by sqrt(d) when `scale` is set.
Matrix dual_softmax(const Matrix &q_f, const Matrix &k_ref, bool scale);

/// Mean of each row of the dual-softmax matrix: one confidence per target token.
std::vector<double> token_confidence(const Matrix &c_dual);

/// Threshold per-token confidences at their lower empirical q-quantile
/// (sorted index ceil(qN)-1). A token is kept when it strictly exceeds phi;
/// q == 0 keeps every token.
ConfidenceMask confidence_mask(std::span<const double> confidence, double q);
ConfidenceMask confidence_mask(const Matrix &c_dual, double q);

/// Row i comes from value_map when mask[i] is 1, from the frame's own
/// attention otherwise.
Matrix filtered_value_map(const Matrix &q_f, const Matrix &k_f, const Matrix &v_f,
                          const Matrix &k_ref, const Matrix &v_ref,
                          std::span<const std::uint8_t> mask);

/// Dispatch over the comparison modes. `t_prime` is required by rvm and rvm_dsf.
std::vector<Matrix> cross_frame_attention(const FrameQKV &qkv, const CrossFrameConfig &config,
                                          std::optional<long> t_prime);

/// General form used when some context frames come from a cache. `context`
/// lists the keys/values of every frame visible to this batch in frame order;
/// `queries[i]` belongs to context slot `first_query_slot + i`. Frame-relative
/// rules (first frame, previous frame, rotation) act on context slots.
std::vector<Matrix> cross_frame_attention(std::span<const Matrix> queries,
                                          std::span<const FrameKV> context,
                                          std::size_t first_query_slot,
                                          const CrossFrameConfig &config,
                                          std::optional<long> t_prime);

} // namespace framewise::attention
