#include <cmath>
#include <stdexcept>

#include "framewise/diffusion.hpp"

namespace framewise::diffusion {

void SamplerConfig::validate() const {
    if (steps < 1)
        throw std::invalid_argument("sampler: T must be >= 1");
    if (mapping_steps < 0)
        throw std::invalid_argument("sampler: T' must be >= 0");
    if (mapping_steps > steps)
        throw std::invalid_argument("sampler: T' (" + std::to_string(mapping_steps) +
                                    ") exceeds T (" + std::to_string(steps) + ")");
    if (!std::isfinite(guidance))
        throw std::invalid_argument("sampler: guidance scale must be finite");
    if (height < 4 || width < 4)
        throw std::invalid_argument("sampler: latent height and width must be >= 4");
    if (first_frame_index < 1)
        throw std::invalid_argument("sampler: frame indices are 1-based");
    attention.validate();
}

LatentVideo denoise_video(std::span<const std::string> prompts, const NoiseSchedule &schedule,
                          const DenoiserParams &params, const SamplerConfig &config,
                          SelfAttentionContext *context) {
    config.validate();
    if (prompts.empty())
        throw std::invalid_argument("denoise_video: at least one frame prompt is required");
    if (schedule.steps() != config.steps)
        throw std::invalid_argument("denoise_video: schedule length differs from T");

    const std::size_t frames = prompts.size();
    std::vector<TextEmbedding> cond;
    cond.reserve(frames);
    for (const auto &p : prompts)
        cond.push_back(embed_text(p));
    const std::vector<TextEmbedding> uncond(frames, embed_text(kNullPrompt));

    LatentVideo z;
    z.height = config.height;
    z.width = config.width;
    z.channels = params.shape.channels;
    z.timestep = config.steps;
    for (std::size_t f = 0; f < frames; ++f)
        z.frames.push_back(initial_noise(config.seed, config.first_frame_index + static_cast<int>(f),
                                         z.height, z.width, z.channels));

    const int warmup = config.steps - config.mapping_steps;
    attention::CrossFrameConfig warmup_attention = config.attention;
    warmup_attention.mode = attention::Mode::first_frame;

    for (int i = 0; i < config.steps; ++i) {
        const int t = config.steps - i;
        const int t_prev = t - 1;

        if (config.motion && i == std::min(warmup, config.steps - 1)) {
            for (std::size_t f = 0; f < frames; ++f)
                z.frames[f] = motion_shift(z.frames[f], z.height, z.width,
                                           config.first_frame_index + static_cast<int>(f),
                                           config.motion->dx, config.motion->dy);
        }

        const bool mapping = i >= warmup;
        const attention::CrossFrameConfig &attn = mapping ? config.attention : warmup_attention;
        const std::optional<long> t_prime =
            mapping ? std::optional<long>(i - warmup) : std::nullopt;

        if (context != nullptr)
            context->set_position(i, Branch::unconditional);
        const auto eps_u = toy_denoiser(z, t, uncond, params, schedule, attn, t_prime, context);
        if (context != nullptr)
            context->set_position(i, Branch::conditional);
        const auto eps_c = toy_denoiser(z, t, cond, params, schedule, attn, t_prime, context);

        for (std::size_t f = 0; f < frames; ++f)
            z.frames[f] = ddim_step(z.frames[f], cfg_combine(eps_u[f], eps_c[f], config.guidance),
                                    t, t_prev, schedule);
        z.timestep = t_prev;
    }
    return z;
}

} // namespace framewise::diffusion
