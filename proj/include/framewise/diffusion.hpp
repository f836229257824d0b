#pragma once

// Miniature latent diffusion: noise schedule, forward process, deterministic
// one-step reverse update, classifier-free guidance, hashed text conditioning,
// a two-block toy denoiser built on the cross-frame attention kernels, and the
// video sampler that drives them.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "framewise/attention.hpp"
#include "framewise/matrix.hpp"

namespace framewise::diffusion {

class NoiseSchedule {
public:
    /// Linear betas from 1e-4*(1000/T) to 0.02*(1000/T); the upper end is
    /// capped at 0.999 so short schedules stay valid.
    static NoiseSchedule linear(int steps);

    /// Validates 0 < beta < 1 and strictly decreasing cumulative products.
    explicit NoiseSchedule(std::vector<double> betas);

    int steps() const { return static_cast<int>(betas_.size()); }
    /// 1-based timestep.
    double beta(int t) const;
    /// alpha_bar(0) is 1 by convention.
    double alpha_bar(int t) const;
    std::span<const double> betas() const { return betas_; }
    std::span<const double> alpha_bars() const { return alpha_bars_; }

private:
    std::vector<double> betas_;
    std::vector<double> alpha_bars_;
};

/// sqrt(1 - beta) * z_prev + sqrt(beta) * eps.
Matrix forward_noise_step(const Matrix &z_prev, double beta_t, const Matrix &eps);

/// sqrt(alpha_bar) * z0 + sqrt(1 - alpha_bar) * eps.
Matrix forward_marginal(const Matrix &z0, double alpha_bar_t, const Matrix &eps);

/// eps_uncond + s * (eps_cond - eps_uncond).
Matrix cfg_combine(const Matrix &eps_uncond, const Matrix &eps_cond, double scale);

/// Deterministic (eta = 0) update from t to t_prev.
Matrix ddim_step(const Matrix &z_t, const Matrix &eps_hat, int t, int t_prev,
                 const NoiseSchedule &schedule);

struct TextEmbedding {
    std::vector<double> values; // unit L2 norm
};

inline constexpr std::size_t kTextEmbeddingDim = 64;
/// Token standing in for the empty prompt in the unconditional branch.
inline constexpr std::string_view kNullPrompt = "<null>";

/// Whitespace tokens hashed into one-hot buckets, summed with a sinusoidal
/// position term and L2-normalised. Throws on a blank prompt.
TextEmbedding embed_text(std::string_view prompt, std::size_t dim = kTextEmbeddingDim);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

struct LatentVideo {
    int height = 0;
    int width = 0;
    int channels = 0;
    int timestep = 0;
    std::vector<Matrix> frames; // each (height*width) x channels, row = y*width + x

    std::size_t frame_count() const { return frames.size(); }
    void validate() const;
};

/// Translate a latent grid by ((k-1)*dx, (k-1)*dy) pixels with edge
/// replication. Frame 1 is never moved.
Matrix motion_shift(const Matrix &latent, int height, int width, int frame_index, int dx, int dy);

struct DenoiserShape {
    int channels = 4;     // latent channels
    int model_dim = 16;   // token width inside the blocks
    int text_tokens = 4;  // the embedding is split into this many context tokens
    int ff_dim = 32;
};

struct BlockWeights {
    Matrix wq, wk, wv, wo;
    Matrix text_wq, text_wk, text_wv, text_wo;
    Matrix ff_in, ff_out;
};

/// Pseudo-random weights reproducible from the seed alone.
struct DenoiserParams {
    std::uint64_t seed = 0;
    DenoiserShape shape;
    Matrix in_proj;
    std::vector<BlockWeights> blocks;
    Matrix out_proj;

    static DenoiserParams from_seed(std::uint64_t seed, DenoiserShape shape = {});
    static constexpr int kBlocks = 2;
};

enum class Branch { unconditional, conditional };

/// Supplies keys/values for frames that precede the current batch in the
/// attention context (the pipeline's cache) and observes the batch's own.
class SelfAttentionContext {
public:
    virtual ~SelfAttentionContext() = default;
    virtual void set_position(int step, Branch branch) = 0;
    /// Called once per self-attention layer. Returns the prefix frames.
    virtual std::vector<attention::FrameKV> prefix(int layer, std::span<const Matrix> keys,
                                                   std::span<const Matrix> values) = 0;
};

/// Noise prediction for every frame. `embeddings` has one entry per frame.
/// Internally the blocks predict a clean latent which is converted to the
/// equivalent noise at timestep t.
std::vector<Matrix> toy_denoiser(const LatentVideo &z_t, int t,
                                 std::span<const TextEmbedding> embeddings,
                                 const DenoiserParams &params, const NoiseSchedule &schedule,
                                 const attention::CrossFrameConfig &attn,
                                 std::optional<long> t_prime,
                                 SelfAttentionContext *context = nullptr);

struct Motion {
    int dx = 0;
    int dy = 0;
};

struct SamplerConfig {
    int steps = 100;          // T
    int mapping_steps = 96;   // T': value mapping is active for the final T' steps
    double guidance = 12.0;
    attention::CrossFrameConfig attention;
    std::uint64_t seed = 0;
    int height = 16;
    int width = 16;
    std::optional<Motion> motion;
    /// 1-based global index of the first frame in this batch; seeds the
    /// per-frame noise and the motion offset.
    int first_frame_index = 1;

    void validate() const;
};

/// Per-frame unit Gaussian latent seeded by (seed, global frame index).
Matrix initial_noise(std::uint64_t seed, int frame_index, int height, int width, int channels);

/// Runs the reverse process over all steps. The first T-T' steps use
/// first-frame attention (and the motion shift, applied once as mapping
/// begins); afterwards the configured mode runs with t' counted from there.
LatentVideo denoise_video(std::span<const std::string> prompts, const NoiseSchedule &schedule,
                          const DenoiserParams &params, const SamplerConfig &config,
                          SelfAttentionContext *context = nullptr);

} // namespace framewise::diffusion
