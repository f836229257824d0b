#include <algorithm>
#include <cmath>

#include "detail.hpp"
#include "framewise/attention_serial.hpp"

namespace framewise::attention::serial {
namespace {

Matrix logits(const Matrix &q, const Matrix &k, double scale) {
    Matrix s(q.rows(), k.rows());
    for (std::size_t i = 0; i < q.rows(); ++i)
        for (std::size_t j = 0; j < k.rows(); ++j) {
            double acc = 0.0;
            for (std::size_t c = 0; c < q.cols(); ++c)
                acc += q(i, c) * k(j, c);
            s(i, j) = acc * scale;
        }
    return s;
}

void softmax_rows(Matrix &s) {
    for (std::size_t i = 0; i < s.rows(); ++i) {
        auto row = s.row(i);
        const double mx = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double &x : row) {
            x = std::exp(x - mx);
            sum += x;
        }
        for (double &x : row)
            x /= sum;
    }
}

Matrix transpose(const Matrix &a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            t(j, i) = a(i, j);
    return t;
}

} // namespace

Matrix scaled_attention(const Matrix &q, const Matrix &k, const Matrix &v) {
    detail::check_attention_inputs(q, k, v);
    Matrix p = logits(q, k, 1.0 / std::sqrt(static_cast<double>(q.cols())));
    softmax_rows(p);
    Matrix out(q.rows(), v.cols());
    for (std::size_t i = 0; i < q.rows(); ++i)
        for (std::size_t j = 0; j < k.rows(); ++j)
            for (std::size_t c = 0; c < v.cols(); ++c)
                out(i, c) += p(i, j) * v(j, c);
    return out;
}

Matrix value_map(const Matrix &q_f, const Matrix &k_ref, const Matrix &v_ref) {
    detail::check_same_shape(q_f, k_ref, "value_map K_ref");
    detail::check_same_shape(k_ref, v_ref, "value_map V_ref");
    return scaled_attention(q_f, k_ref, v_ref);
}

Matrix dual_softmax(const Matrix &q_f, const Matrix &k_ref, bool scale) {
    detail::check_same_shape(q_f, k_ref, "dual_softmax K_ref");
    detail::check_finite(q_f, "dual_softmax Q");
    detail::check_finite(k_ref, "dual_softmax K");
    const double s = scale ? 1.0 / std::sqrt(static_cast<double>(q_f.cols())) : 1.0;
    Matrix forward = logits(q_f, k_ref, s);
    Matrix backward = logits(k_ref, q_f, s);
    softmax_rows(forward);
    softmax_rows(backward);
    const Matrix backward_t = transpose(backward);
    Matrix out(forward.rows(), forward.cols());
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j)
            out(i, j) = forward(i, j) * backward_t(i, j);
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
    Matrix out(own.rows(), own.cols());
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t c = 0; c < out.cols(); ++c)
            out(i, c) = mask[i] ? mapped(i, c) : own(i, c);
    return out;
}

std::vector<Matrix> cross_frame_attention(const FrameQKV &qkv, const CrossFrameConfig &config,
                                          std::optional<long> t_prime) {
    qkv.validate();
    config.validate();
    const std::size_t frames = qkv.frames();
    if ((config.mode == Mode::rvm || config.mode == Mode::rvm_dsf) && !t_prime)
        throw std::invalid_argument("cross_frame_attention: rotational modes require t'");

    std::vector<Matrix> out;
    for (std::size_t f = 0; f < frames; ++f) {
        const Matrix &q = qkv.queries[f];
        switch (config.mode) {
        case Mode::per_frame:
            out.push_back(scaled_attention(q, qkv.keys[f], qkv.values[f]));
            break;
        case Mode::first_frame:
            out.push_back(scaled_attention(q, qkv.keys[0], qkv.values[0]));
            break;
        case Mode::sparse_causal:
            if (f == 0)
                out.push_back(scaled_attention(q, qkv.keys[0], qkv.values[0]));
            else
                out.push_back(scaled_attention(q, detail::concat_rows(qkv.keys[0], qkv.keys[f - 1]),
                                               detail::concat_rows(qkv.values[0], qkv.values[f - 1])));
            break;
        case Mode::rvm:
        case Mode::rvm_dsf: {
            const auto r = static_cast<std::size_t>(
                rotational_reference(*t_prime, config.period, static_cast<int>(frames)) - 1);
            if (config.mode == Mode::rvm) {
                out.push_back(value_map(q, qkv.keys[r], qkv.values[r]));
            } else {
                const auto mask = confidence_mask(
                    dual_softmax(q, qkv.keys[r], config.scale_dual_softmax), config.quantile);
                out.push_back(filtered_value_map(q, qkv.keys[f], qkv.values[f], qkv.keys[r],
                                                 qkv.values[r], mask.mask));
            }
            break;
        }
        }
    }
    return out;
}

} // namespace framewise::attention::serial
