#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "detail.hpp"

namespace framewise {

Matrix matmul(const Matrix &a, const Matrix &b) {
    if (a.cols() != b.rows())
        throw std::invalid_argument("matmul: inner dimensions differ (" +
                                    std::to_string(a.cols()) + " vs " +
                                    std::to_string(b.rows()) + ")");
    Matrix out(a.rows(), b.cols());
    const auto rows = static_cast<std::ptrdiff_t>(a.rows());
    const std::size_t inner = a.cols();
    const std::size_t cols = b.cols();
#pragma omp parallel for schedule(static) if (rows >= 64)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        double *o = out.data() + i * cols;
        const double *ai = a.data() + i * inner;
        for (std::size_t p = 0; p < inner; ++p) {
            const double s = ai[p];
            const double *bp = b.data() + p * cols;
            for (std::size_t j = 0; j < cols; ++j)
                o[j] += s * bp[j];
        }
    }
    return out;
}

bool all_finite(const Matrix &m) {
    return std::all_of(m.values().begin(), m.values().end(),
                       [](double x) { return std::isfinite(x); });
}

} // namespace framewise

namespace framewise::attention {

std::string_view to_string(Mode mode) {
    switch (mode) {
    case Mode::per_frame: return "per_frame";
    case Mode::first_frame: return "first_frame";
    case Mode::sparse_causal: return "sparse_causal";
    case Mode::rvm: return "rvm";
    case Mode::rvm_dsf: return "rvm_dsf";
    }
    return "unknown";
}

Mode parse_mode(std::string_view name) {
    for (Mode m : all_modes())
        if (to_string(m) == name)
            return m;
    throw std::invalid_argument("unknown attention mode '" + std::string(name) +
                                "' (expected per_frame, first_frame, sparse_causal, rvm, rvm_dsf)");
}

std::vector<Mode> all_modes() {
    return {Mode::per_frame, Mode::first_frame, Mode::sparse_causal, Mode::rvm, Mode::rvm_dsf};
}

void CrossFrameConfig::validate() const {
    if (period < 1)
        throw std::invalid_argument("CrossFrameConfig: period must be >= 1");
    if (!(quantile >= 0.0 && quantile <= 1.0))
        throw std::invalid_argument("CrossFrameConfig: quantile must lie in [0, 1]");
}

void FrameQKV::validate() const {
    if (queries.empty())
        throw std::invalid_argument("FrameQKV: at least one frame is required");
    if (keys.size() != queries.size() || values.size() != queries.size())
        throw std::invalid_argument("FrameQKV: Q, K, V frame counts differ");
    const Matrix &ref = queries.front();
    if (ref.rows() == 0 || ref.cols() == 0)
        throw std::invalid_argument("FrameQKV: N and d must be >= 1");
    for (std::size_t f = 0; f < queries.size(); ++f) {
        detail::check_same_shape(ref, queries[f], "FrameQKV query");
        detail::check_same_shape(ref, keys[f], "FrameQKV key");
        detail::check_same_shape(ref, values[f], "FrameQKV value");
        detail::check_finite(queries[f], "FrameQKV query");
        detail::check_finite(keys[f], "FrameQKV key");
        detail::check_finite(values[f], "FrameQKV value");
    }
}

int rotational_reference(long t_prime, int period, int frames) {
    if (period < 1)
        throw std::invalid_argument("rotational_reference: period must be >= 1");
    if (frames < 1)
        throw std::invalid_argument("rotational_reference: frame count must be >= 1");
    if (t_prime < 0)
        throw std::invalid_argument("rotational_reference: t' must be non-negative");
    return static_cast<int>((t_prime / period) % frames) + 1;
}

std::vector<double> token_confidence(const Matrix &c_dual) {
    std::vector<double> conf(c_dual.rows(), 0.0);
    if (c_dual.cols() == 0)
        return conf;
    for (std::size_t i = 0; i < c_dual.rows(); ++i) {
        double sum = 0.0;
        for (double x : c_dual.row(i))
            sum += x;
        conf[i] = sum / static_cast<double>(c_dual.cols());
    }
    return conf;
}

ConfidenceMask confidence_mask(std::span<const double> confidence, double q) {
    if (!(q >= 0.0 && q <= 1.0))
        throw std::invalid_argument("confidence_mask: q must lie in [0, 1]");
    if (confidence.empty())
        throw std::invalid_argument("confidence_mask: no confidences");
    for (double c : confidence)
        if (!std::isfinite(c))
            throw std::invalid_argument("confidence_mask: non-finite confidence");

    std::vector<double> sorted(confidence.begin(), confidence.end());
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast<long>(sorted.size());

    ConfidenceMask out;
    out.mask.resize(confidence.size());
    if (q == 0.0) {
        out.phi = sorted.front();
        std::fill(out.mask.begin(), out.mask.end(), std::uint8_t{1});
        return out;
    }
    // The epsilon keeps q*N that should be an integer from rounding up.
    long index = static_cast<long>(std::ceil(q * static_cast<double>(n) - 1e-9)) - 1;
    index = std::clamp(index, 0L, n - 1);
    out.phi = sorted[static_cast<std::size_t>(index)];
    for (std::size_t i = 0; i < confidence.size(); ++i)
        out.mask[i] = confidence[i] > out.phi ? 1 : 0;
    return out;
}

ConfidenceMask confidence_mask(const Matrix &c_dual, double q) {
    detail::check_finite(c_dual, "confidence_mask C_dual");
    const auto conf = token_confidence(c_dual);
    return confidence_mask(std::span<const double>(conf), q);
}

namespace detail {

void check_same_shape(const Matrix &a, const Matrix &b, const char *what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": shape mismatch (" +
                                    std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                    " vs " + std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()) + ")");
}

void check_finite(const Matrix &m, const char *what) {
    if (!all_finite(m))
        throw std::invalid_argument(std::string(what) + ": non-finite entry");
}

void check_attention_inputs(const Matrix &q, const Matrix &k, const Matrix &v) {
    if (q.rows() == 0 || q.cols() == 0)
        throw std::invalid_argument("attention: Q must be non-empty");
    if (k.cols() != q.cols())
        throw std::invalid_argument("attention: Q and K channel counts differ");
    if (k.rows() == 0 || v.rows() != k.rows())
        throw std::invalid_argument("attention: K and V token counts differ");
    if (v.cols() == 0)
        throw std::invalid_argument("attention: V must have at least one channel");
    check_finite(q, "attention Q");
    check_finite(k, "attention K");
    check_finite(v, "attention V");
}

void check_mask(std::span<const std::uint8_t> mask, std::size_t tokens) {
    if (mask.size() != tokens)
        throw std::invalid_argument("filtered_value_map: mask length " +
                                    std::to_string(mask.size()) + " != token count " +
                                    std::to_string(tokens));
    for (auto m : mask)
        if (m > 1)
            throw std::invalid_argument("filtered_value_map: mask entries must be 0 or 1");
}

Matrix concat_rows(const Matrix &a, const Matrix &b) {
    if (a.cols() != b.cols())
        throw std::invalid_argument("concat_rows: column counts differ");
    Matrix out(a.rows() + b.rows(), a.cols());
    std::copy(a.values().begin(), a.values().end(), out.values().begin());
    std::copy(b.values().begin(), b.values().end(),
              out.values().begin() + static_cast<std::ptrdiff_t>(a.size()));
    return out;
}

void check_context(std::span<const Matrix> queries, std::span<const FrameKV> context,
                   std::size_t first_query_slot, const CrossFrameConfig &config,
                   std::optional<long> t_prime) {
    config.validate();
    if (queries.empty())
        throw std::invalid_argument("cross_frame_attention: no query frames");
    if (first_query_slot + queries.size() > context.size())
        throw std::invalid_argument("cross_frame_attention: query slots exceed context");
    if ((config.mode == Mode::rvm || config.mode == Mode::rvm_dsf) && !t_prime)
        throw std::invalid_argument("cross_frame_attention: mode " +
                                    std::string(to_string(config.mode)) + " requires t'");
    const Matrix &shape = queries.front();
    for (const auto &kv : context) {
        if (kv.keys == nullptr || kv.values == nullptr)
            throw std::invalid_argument("cross_frame_attention: null context frame");
        check_same_shape(shape, *kv.keys, "cross_frame_attention key");
        check_same_shape(shape, *kv.values, "cross_frame_attention value");
    }
    for (const auto &q : queries)
        check_same_shape(shape, q, "cross_frame_attention query");
}

} // namespace detail
} // namespace framewise::attention
