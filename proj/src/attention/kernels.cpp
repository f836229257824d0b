#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "detail.hpp"
#include "framewise/attention.hpp"

namespace framewise::attention {
namespace {

// Below this many query rows the threading overhead outweighs the work.
constexpr std::ptrdiff_t kParallelRows = 32;

double dot(const double *a, const double *b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        acc += a[i] * b[i];
    return acc;
}

// One output row of Softmax(q k^T * scale) v. `weights` is scratch of size k.rows().
void attend_row(const double *q, const Matrix &k, const Matrix &v, double scale,
                std::vector<double> &weights, double *out) {
    const std::size_t m = k.rows();
    const std::size_t d = k.cols();
    double max_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
        weights[j] = dot(q, k.data() + j * d, d) * scale;
        max_logit = std::max(max_logit, weights[j]);
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        weights[j] = std::exp(weights[j] - max_logit);
        denom += weights[j];
    }
    const std::size_t dv = v.cols();
    std::fill(out, out + dv, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
        const double w = weights[j] / denom;
        const double *vj = v.data() + j * dv;
        for (std::size_t c = 0; c < dv; ++c)
            out[c] += w * vj[c];
    }
}

Matrix attention_unchecked(const Matrix &q, const Matrix &k, const Matrix &v) {
    const auto n = static_cast<std::ptrdiff_t>(q.rows());
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    Matrix out(q.rows(), v.cols());
#pragma omp parallel if (n >= kParallelRows)
    {
        std::vector<double> weights(k.rows());
#pragma omp for schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i)
            attend_row(q.data() + i * q.cols(), k, v, scale, weights, out.data() + i * v.cols());
    }
    return out;
}

Matrix blend_rows(const Matrix &mapped, const Matrix &own, std::span<const std::uint8_t> mask) {
    Matrix out = own;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i])
            std::copy(mapped.row(i).begin(), mapped.row(i).end(), out.row(i).begin());
    return out;
}

} // namespace

Matrix scaled_attention(const Matrix &q, const Matrix &k, const Matrix &v) {
    detail::check_attention_inputs(q, k, v);
    return attention_unchecked(q, k, v);
}

Matrix value_map(const Matrix &q_f, const Matrix &k_ref, const Matrix &v_ref) {
    detail::check_same_shape(q_f, k_ref, "value_map K_ref");
    detail::check_same_shape(k_ref, v_ref, "value_map V_ref");
    return scaled_attention(q_f, k_ref, v_ref);
}

Matrix dual_softmax(const Matrix &q_f, const Matrix &k_ref, bool scale) {
    detail::check_same_shape(q_f, k_ref, "dual_softmax K_ref");
    if (q_f.rows() == 0 || q_f.cols() == 0)
        throw std::invalid_argument("dual_softmax: empty input");
    detail::check_finite(q_f, "dual_softmax Q");
    detail::check_finite(k_ref, "dual_softmax K");

    const std::size_t n = q_f.rows();
    const std::size_t m = k_ref.rows();
    const std::size_t d = q_f.cols();
    const double s = scale ? 1.0 / std::sqrt(static_cast<double>(d)) : 1.0;
    const auto rows = static_cast<std::ptrdiff_t>(n);
    const auto cols = static_cast<std::ptrdiff_t>(m);

    Matrix logits(n, m);
    Matrix row_soft(n, m);
    Matrix out(n, m);
#pragma omp parallel if (rows >= kParallelRows)
    {
#pragma omp for schedule(static)
        for (std::ptrdiff_t i = 0; i < rows; ++i) {
            const double *qi = q_f.data() + i * d;
            double *li = logits.data() + i * m;
            double max_logit = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < m; ++j) {
                li[j] = dot(qi, k_ref.data() + j * d, d) * s;
                max_logit = std::max(max_logit, li[j]);
            }
            double denom = 0.0;
            double *ri = row_soft.data() + i * m;
            for (std::size_t j = 0; j < m; ++j) {
                ri[j] = std::exp(li[j] - max_logit);
                denom += ri[j];
            }
            for (std::size_t j = 0; j < m; ++j)
                ri[j] /= denom;
        }
        // Column softmax over the query axis, multiplied into the row softmax.
#pragma omp for schedule(static)
        for (std::ptrdiff_t j = 0; j < cols; ++j) {
            double max_logit = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < n; ++i)
                max_logit = std::max(max_logit, logits(i, j));
            double denom = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                denom += std::exp(logits(i, j) - max_logit);
            for (std::size_t i = 0; i < n; ++i)
                out(i, j) = row_soft(i, j) * (std::exp(logits(i, j) - max_logit) / denom);
        }
    }
    return out;
}

Matrix filtered_value_map(const Matrix &q_f, const Matrix &k_f, const Matrix &v_f,
                          const Matrix &k_ref, const Matrix &v_ref,
                          std::span<const std::uint8_t> mask) {
    detail::check_same_shape(q_f, k_f, "filtered_value_map K_f");
    detail::check_same_shape(k_f, v_f, "filtered_value_map V_f");
    detail::check_mask(mask, q_f.rows());
    const Matrix mapped = value_map(q_f, k_ref, v_ref);
    const Matrix own = scaled_attention(q_f, k_f, v_f);
    return blend_rows(mapped, own, mask);
}

std::vector<Matrix> cross_frame_attention(std::span<const Matrix> queries,
                                          std::span<const FrameKV> context,
                                          std::size_t first_query_slot,
                                          const CrossFrameConfig &config,
                                          std::optional<long> t_prime) {
    detail::check_context(queries, context, first_query_slot, config, t_prime);

    const int slots = static_cast<int>(context.size());
    int reference = 0; // 0-based slot for rvm / rvm_dsf
    if (config.mode == Mode::rvm || config.mode == Mode::rvm_dsf)
        reference = rotational_reference(*t_prime, config.period, slots) - 1;

    std::vector<Matrix> out;
    out.reserve(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const std::size_t slot = first_query_slot + i;
        const Matrix &q = queries[i];
        const FrameKV own = context[slot];
        switch (config.mode) {
        case Mode::per_frame:
            out.push_back(scaled_attention(q, *own.keys, *own.values));
            break;
        case Mode::first_frame:
            out.push_back(scaled_attention(q, *context[0].keys, *context[0].values));
            break;
        case Mode::sparse_causal:
            if (slot == 0) {
                out.push_back(scaled_attention(q, *own.keys, *own.values));
            } else {
                const FrameKV prev = context[slot - 1];
                out.push_back(scaled_attention(q, detail::concat_rows(*context[0].keys, *prev.keys),
                                               detail::concat_rows(*context[0].values, *prev.values)));
            }
            break;
        case Mode::rvm: {
            const FrameKV ref = context[static_cast<std::size_t>(reference)];
            out.push_back(value_map(q, *ref.keys, *ref.values));
            break;
        }
        case Mode::rvm_dsf: {
            const FrameKV ref = context[static_cast<std::size_t>(reference)];
            ConfidenceMask mask;
            if (config.quantile == 0.0)
                mask.mask.assign(q.rows(), 1);
            else
                mask = confidence_mask(dual_softmax(q, *ref.keys, config.scale_dual_softmax),
                                       config.quantile);
            out.push_back(filtered_value_map(q, *own.keys, *own.values, *ref.keys, *ref.values,
                                             mask.mask));
            break;
        }
        }
    }
    return out;
}

std::vector<Matrix> cross_frame_attention(const FrameQKV &qkv, const CrossFrameConfig &config,
                                          std::optional<long> t_prime) {
    qkv.validate();
    std::vector<FrameKV> context;
    context.reserve(qkv.frames());
    for (std::size_t f = 0; f < qkv.frames(); ++f)
        context.push_back({&qkv.keys[f], &qkv.values[f]});
    return cross_frame_attention(qkv.queries, context, 0, config, t_prime);
}

} // namespace framewise::attention
