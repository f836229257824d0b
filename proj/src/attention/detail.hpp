#pragma once

#include <string>

#include "framewise/attention.hpp"

namespace framewise::attention::detail {

void check_attention_inputs(const Matrix &q, const Matrix &k, const Matrix &v);
void check_same_shape(const Matrix &a, const Matrix &b, const char *what);
void check_finite(const Matrix &m, const char *what);
void check_mask(std::span<const std::uint8_t> mask, std::size_t tokens);

/// Rows of `a` followed by rows of `b`.
Matrix concat_rows(const Matrix &a, const Matrix &b);

void check_context(std::span<const Matrix> queries, std::span<const FrameKV> context,
                   std::size_t first_query_slot, const CrossFrameConfig &config,
                   std::optional<long> t_prime);

} // namespace framewise::attention::detail
