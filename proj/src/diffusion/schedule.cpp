#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "framewise/diffusion.hpp"

namespace framewise::diffusion {
namespace {

void require_same_shape(const Matrix &a, const Matrix &b, const char *what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

} // namespace

NoiseSchedule NoiseSchedule::linear(int steps) {
    if (steps < 1)
        throw std::invalid_argument("NoiseSchedule: T must be >= 1");
    const double stretch = 1000.0 / static_cast<double>(steps);
    const double start = std::min(1e-4 * stretch, 0.999);
    const double end = std::min(0.02 * stretch, 0.999);
    std::vector<double> betas(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i) {
        const double frac = steps == 1 ? 1.0 : static_cast<double>(i) / (steps - 1);
        betas[static_cast<std::size_t>(i)] = start + (end - start) * frac;
    }
    return NoiseSchedule(std::move(betas));
}

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
    if (betas_.empty())
        throw std::invalid_argument("NoiseSchedule: empty beta sequence");
    alpha_bars_.reserve(betas_.size());
    double running = 1.0;
    for (double b : betas_) {
        if (!(b > 0.0 && b < 1.0))
            throw std::invalid_argument("NoiseSchedule: every beta must lie in (0, 1)");
        const double next = running * (1.0 - b);
        if (!(next < running))
            throw std::invalid_argument("NoiseSchedule: alpha_bar must strictly decrease");
        running = next;
        alpha_bars_.push_back(running);
    }
}

double NoiseSchedule::beta(int t) const {
    if (t < 1 || t > steps())
        throw std::out_of_range("NoiseSchedule::beta: t out of range");
    return betas_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t == 0)
        return 1.0;
    if (t < 0 || t > steps())
        throw std::out_of_range("NoiseSchedule::alpha_bar: t out of range");
    return alpha_bars_[static_cast<std::size_t>(t - 1)];
}

Matrix forward_noise_step(const Matrix &z_prev, double beta_t, const Matrix &eps) {
    if (!(beta_t > 0.0 && beta_t < 1.0))
        throw std::invalid_argument("forward_noise_step: beta must lie in (0, 1)");
    require_same_shape(z_prev, eps, "forward_noise_step");
    const double keep = std::sqrt(1.0 - beta_t);
    const double noise = std::sqrt(beta_t);
    Matrix out(z_prev.rows(), z_prev.cols());
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data()[i] = keep * z_prev.data()[i] + noise * eps.data()[i];
    return out;
}

Matrix forward_marginal(const Matrix &z0, double alpha_bar_t, const Matrix &eps) {
    if (!(alpha_bar_t > 0.0 && alpha_bar_t <= 1.0))
        throw std::invalid_argument("forward_marginal: alpha_bar must lie in (0, 1]");
    require_same_shape(z0, eps, "forward_marginal");
    const double signal = std::sqrt(alpha_bar_t);
    const double noise = std::sqrt(1.0 - alpha_bar_t);
    Matrix out(z0.rows(), z0.cols());
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data()[i] = signal * z0.data()[i] + noise * eps.data()[i];
    return out;
}

Matrix cfg_combine(const Matrix &eps_uncond, const Matrix &eps_cond, double scale) {
    require_same_shape(eps_uncond, eps_cond, "cfg_combine");
    Matrix out(eps_uncond.rows(), eps_uncond.cols());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double u = eps_uncond.data()[i];
        out.data()[i] = u + scale * (eps_cond.data()[i] - u);
    }
    return out;
}

Matrix ddim_step(const Matrix &z_t, const Matrix &eps_hat, int t, int t_prev,
                 const NoiseSchedule &schedule) {
    if (!(t > t_prev))
        throw std::invalid_argument("ddim_step: t must exceed t_prev");
    if (t_prev < 0 || t > schedule.steps())
        throw std::invalid_argument("ddim_step: timesteps outside [0, T]");
    require_same_shape(z_t, eps_hat, "ddim_step");
    const double ab_t = schedule.alpha_bar(t);
    const double ab_prev = schedule.alpha_bar(t_prev);
    const double sqrt_ab_t = std::sqrt(ab_t);
    const double sqrt_one_minus_ab_t = std::sqrt(1.0 - ab_t);
    const double sqrt_ab_prev = std::sqrt(ab_prev);
    const double sqrt_one_minus_ab_prev = std::sqrt(1.0 - ab_prev);
    Matrix out(z_t.rows(), z_t.cols());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double e = eps_hat.data()[i];
        const double z0_pred = (z_t.data()[i] - sqrt_one_minus_ab_t * e) / sqrt_ab_t;
        out.data()[i] = sqrt_ab_prev * z0_pred + sqrt_one_minus_ab_prev * e;
    }
    return out;
}

void LatentVideo::validate() const {
    if (frames.empty())
        throw std::invalid_argument("LatentVideo: no frames");
    if (height < 1 || width < 1 || channels < 1)
        throw std::invalid_argument("LatentVideo: height, width and channels must be >= 1");
    const auto tokens = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
    for (const auto &f : frames) {
        if (f.rows() != tokens || f.cols() != static_cast<std::size_t>(channels))
            throw std::invalid_argument("LatentVideo: frame shape does not match h*w x c");
        if (!all_finite(f))
            throw std::invalid_argument("LatentVideo: non-finite latent");
    }
}

Matrix motion_shift(const Matrix &latent, int height, int width, int frame_index, int dx, int dy) {
    if (frame_index < 1)
        throw std::invalid_argument("motion_shift: frame index is 1-based");
    if (height < 1 || width < 1 ||
        latent.rows() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width))
        throw std::invalid_argument("motion_shift: latent is not height*width tokens");
    const long sx = static_cast<long>(frame_index - 1) * dx;
    const long sy = static_cast<long>(frame_index - 1) * dy;
    if (std::labs(sx) >= width || std::labs(sy) >= height)
        throw std::invalid_argument("motion_shift: shift of (" + std::to_string(sx) + ", " +
                                    std::to_string(sy) + ") leaves the " +
                                    std::to_string(width) + "x" + std::to_string(height) + " grid");
    Matrix out(latent.rows(), latent.cols());
    for (long y = 0; y < height; ++y) {
        const long src_y = std::clamp(y - sy, 0L, static_cast<long>(height) - 1);
        for (long x = 0; x < width; ++x) {
            const long src_x = std::clamp(x - sx, 0L, static_cast<long>(width) - 1);
            const auto src = latent.row(static_cast<std::size_t>(src_y * width + src_x));
            std::copy(src.begin(), src.end(), out.row(static_cast<std::size_t>(y * width + x)).begin());
        }
    }
    return out;
}

Matrix initial_noise(std::uint64_t seed, int frame_index, int height, int width, int channels) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(frame_index), 0x6e6f6973u};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix z(static_cast<std::size_t>(height) * static_cast<std::size_t>(width),
             static_cast<std::size_t>(channels));
    for (double &x : z.values())
        x = normal(rng);
    return z;
}

} // namespace framewise::diffusion
