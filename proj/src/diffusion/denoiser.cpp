#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "framewise/diffusion.hpp"

namespace framewise::diffusion {
namespace {

Matrix random_matrix(std::mt19937_64 &rng, std::size_t rows, std::size_t cols, double scale) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix m(rows, cols);
    for (double &x : m.values())
        x = normal(rng) * scale;
    return m;
}

double inv_sqrt(std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); }

Matrix rms_norm(const Matrix &x) {
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double ms = 0.0;
        for (double v : x.row(i))
            ms += v * v;
        const double s = 1.0 / std::sqrt(ms / static_cast<double>(x.cols()) + 1e-6);
        auto dst = out.row(i);
        auto src = x.row(i);
        for (std::size_t c = 0; c < x.cols(); ++c)
            dst[c] = src[c] * s;
    }
    return out;
}

void add_in_place(Matrix &x, const Matrix &delta) {
    for (std::size_t i = 0; i < x.size(); ++i)
        x.data()[i] += delta.data()[i];
}

double gelu(double x) {
    return 0.5 * x * (1.0 + std::tanh(0.7978845608028654 * (x + 0.044715 * x * x * x)));
}

// Sinusoidal code of the (x, y) grid position and the timestep, added to the
// projected tokens so attention can tell tokens apart.
Matrix position_time_code(int height, int width, int t, std::size_t dim) {
    Matrix code(static_cast<std::size_t>(height * width), dim);
    const std::size_t half = dim / 2;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            auto row = code.row(static_cast<std::size_t>(y * width + x));
            for (std::size_t j = 0; j < dim; ++j) {
                const double pos = j < half ? x : y;
                const std::size_t k = j < half ? j : j - half;
                const double freq = std::pow(0.3, static_cast<double>(k / 2));
                const double angle = pos * freq * std::numbers::pi / 2.0;
                row[j] = 0.5 * ((k % 2 == 0) ? std::sin(angle) : std::cos(angle));
                const double tf = std::pow(1e-2, static_cast<double>(j) / static_cast<double>(dim));
                row[j] += 0.1 * std::sin(t * tf);
            }
        }
    return code;
}

Matrix text_tokens(const TextEmbedding &emb, int tokens) {
    const auto n = static_cast<std::size_t>(tokens);
    if (emb.values.empty() || emb.values.size() % n != 0)
        throw std::invalid_argument("toy_denoiser: embedding length not divisible by text token count");
    return Matrix(n, emb.values.size() / n, emb.values);
}

} // namespace

DenoiserParams DenoiserParams::from_seed(std::uint64_t seed, DenoiserShape shape) {
    if (shape.channels < 1 || shape.model_dim < 2 || shape.text_tokens < 1 || shape.ff_dim < 1)
        throw std::invalid_argument("DenoiserParams: invalid shape");
    if (kTextEmbeddingDim % static_cast<std::size_t>(shape.text_tokens) != 0)
        throw std::invalid_argument("DenoiserParams: text tokens must divide the embedding size");
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    const auto c = static_cast<std::size_t>(shape.channels);
    const auto d = static_cast<std::size_t>(shape.model_dim);
    const auto ff = static_cast<std::size_t>(shape.ff_dim);
    const std::size_t text_dim = kTextEmbeddingDim / static_cast<std::size_t>(shape.text_tokens);

    DenoiserParams p;
    p.seed = seed;
    p.shape = shape;
    p.in_proj = random_matrix(rng, c, d, inv_sqrt(c));
    for (int b = 0; b < kBlocks; ++b) {
        BlockWeights w;
        w.wq = random_matrix(rng, d, d, 2.0 * inv_sqrt(d));
        w.wk = random_matrix(rng, d, d, 2.0 * inv_sqrt(d));
        w.wv = random_matrix(rng, d, d, inv_sqrt(d));
        w.wo = random_matrix(rng, d, d, 4.0 * inv_sqrt(d));
        w.text_wq = random_matrix(rng, d, d, inv_sqrt(d));
        w.text_wk = random_matrix(rng, text_dim, d, 4.0 * inv_sqrt(text_dim));
        w.text_wv = random_matrix(rng, text_dim, d, 4.0 * inv_sqrt(text_dim));
        w.text_wo = random_matrix(rng, d, d, 0.5 * inv_sqrt(d));
        w.ff_in = random_matrix(rng, d, ff, inv_sqrt(d));
        w.ff_out = random_matrix(rng, ff, d, 0.5 * inv_sqrt(ff));
        p.blocks.push_back(std::move(w));
    }
    p.out_proj = random_matrix(rng, d, c, inv_sqrt(d));
    return p;
}

std::vector<Matrix> toy_denoiser(const LatentVideo &z_t, int t,
                                 std::span<const TextEmbedding> embeddings,
                                 const DenoiserParams &params, const NoiseSchedule &schedule,
                                 const attention::CrossFrameConfig &attn,
                                 std::optional<long> t_prime, SelfAttentionContext *context) {
    z_t.validate();
    if (z_t.channels != params.shape.channels)
        throw std::invalid_argument("toy_denoiser: latent channels do not match the parameters");
    if (embeddings.size() != z_t.frame_count())
        throw std::invalid_argument("toy_denoiser: need one text embedding per frame");
    if (t < 1 || t > schedule.steps())
        throw std::invalid_argument("toy_denoiser: timestep outside [1, T]");

    const std::size_t frames = z_t.frame_count();
    const auto dim = static_cast<std::size_t>(params.shape.model_dim);
    const Matrix code = position_time_code(z_t.height, z_t.width, t, dim);

    std::vector<Matrix> x(frames);
    for (std::size_t f = 0; f < frames; ++f) {
        x[f] = matmul(z_t.frames[f], params.in_proj);
        add_in_place(x[f], code);
    }

    for (std::size_t b = 0; b < params.blocks.size(); ++b) {
        const BlockWeights &w = params.blocks[b];

        std::vector<Matrix> q(frames), k(frames), v(frames);
        for (std::size_t f = 0; f < frames; ++f) {
            const Matrix h = rms_norm(x[f]);
            q[f] = matmul(h, w.wq);
            k[f] = matmul(h, w.wk);
            v[f] = matmul(h, w.wv);
        }
        std::vector<attention::FrameKV> ctx;
        if (context != nullptr)
            ctx = context->prefix(static_cast<int>(b), k, v);
        const std::size_t first_slot = ctx.size();
        for (std::size_t f = 0; f < frames; ++f)
            ctx.push_back({&k[f], &v[f]});
        const auto attended = attention::cross_frame_attention(q, ctx, first_slot, attn, t_prime);

        for (std::size_t f = 0; f < frames; ++f) {
            add_in_place(x[f], matmul(attended[f], w.wo));

            const Matrix text = text_tokens(embeddings[f], params.shape.text_tokens);
            const Matrix tq = matmul(rms_norm(x[f]), w.text_wq);
            const Matrix cross = attention::scaled_attention(tq, matmul(text, w.text_wk),
                                                             matmul(text, w.text_wv));
            add_in_place(x[f], matmul(cross, w.text_wo));

            Matrix hidden = matmul(rms_norm(x[f]), w.ff_in);
            for (double &e : hidden.values())
                e = gelu(e);
            add_in_place(x[f], matmul(hidden, w.ff_out));
        }
    }

    const double sqrt_ab = std::sqrt(schedule.alpha_bar(t));
    const double sqrt_one_minus_ab = std::sqrt(1.0 - schedule.alpha_bar(t));
    std::vector<Matrix> eps(frames);
    for (std::size_t f = 0; f < frames; ++f) {
        const Matrix x0 = matmul(rms_norm(x[f]), params.out_proj);
        eps[f] = Matrix(x0.rows(), x0.cols());
        for (std::size_t i = 0; i < x0.size(); ++i)
            eps[f].data()[i] = (z_t.frames[f].data()[i] - sqrt_ab * x0.data()[i]) / sqrt_one_minus_ab;
    }
    return eps;
}

} // namespace framewise::diffusion
