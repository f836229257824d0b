#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "framewise/pipeline.hpp"

namespace framewise::pipeline {

LatentDecoder LatentDecoder::seeded(int channels, std::uint64_t seed) {
    if (channels < 1)
        throw std::invalid_argument("LatentDecoder: channels must be >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    LatentDecoder d;
    d.projection = Matrix(static_cast<std::size_t>(channels), 3);
    for (double &w : d.projection.values())
        w = normal(rng);
    return d;
}

std::vector<RgbImage> render_video(const diffusion::LatentVideo &video, const LatentDecoder &decoder) {
    video.validate();
    if (decoder.projection.rows() != static_cast<std::size_t>(video.channels) ||
        decoder.projection.cols() != 3)
        throw std::invalid_argument("render: decoder expects " +
                                    std::to_string(decoder.projection.rows()) + " channels");

    const auto &ref = video.frames.front();
    bool constant = true;
    for (const auto &frame : video.frames)
        for (std::size_t r = 0; r < frame.rows() && constant; ++r)
            for (std::size_t c = 0; c < frame.cols() && constant; ++c)
                constant = frame(r, c) == ref(0, c);

    std::vector<Matrix> rgb;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto &frame : video.frames) {
        rgb.push_back(matmul(frame, decoder.projection));
        for (double v : rgb.back().values()) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }

    std::vector<RgbImage> out;
    for (const auto &frame : rgb) {
        RgbImage img(video.width, video.height);
        for (std::size_t i = 0; i < frame.size(); ++i) {
            if (constant || hi - lo <= 1e-12 * std::max(1.0, std::abs(hi))) {
                img.pixels[i] = 128;
            } else {
                const double scaled = 255.0 * (frame.data()[i] - lo) / (hi - lo);
                img.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(scaled), 0L, 255L));
            }
        }
        out.push_back(std::move(img));
    }
    return out;
}

RgbImage render_frame(const Matrix &z0, int height, int width, const LatentDecoder &decoder) {
    diffusion::LatentVideo single;
    single.height = height;
    single.width = width;
    single.channels = static_cast<int>(z0.cols());
    single.frames.push_back(z0);
    return render_video(single, decoder).front();
}

} // namespace framewise::pipeline
