#pragma once

// Serial reference implementation of the attention kernels. Straight loops,
// materialised score matrices, no threading. Kept for tests and benchmarks.

#include "framewise/attention.hpp"

namespace framewise::attention::serial {

Matrix scaled_attention(const Matrix &q, const Matrix &k, const Matrix &v);
Matrix value_map(const Matrix &q_f, const Matrix &k_ref, const Matrix &v_ref);
Matrix dual_softmax(const Matrix &q_f, const Matrix &k_ref, bool scale);
Matrix filtered_value_map(const Matrix &q_f, const Matrix &k_f, const Matrix &v_f,
                          const Matrix &k_ref, const Matrix &v_ref,
                          std::span<const std::uint8_t> mask);
std::vector<Matrix> cross_frame_attention(const FrameQKV &qkv, const CrossFrameConfig &config,
                                          std::optional<long> t_prime);

} // namespace framewise::attention::serial
