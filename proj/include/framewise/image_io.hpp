#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace framewise {

/// 8-bit RGB image, row-major, channels interleaved.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    RgbImage() = default;
    RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w * h * 3), 0) {}

    std::uint8_t *at(int x, int y) { return pixels.data() + 3 * (static_cast<std::size_t>(y) * width + x); }
    const std::uint8_t *at(int x, int y) const {
        return pixels.data() + 3 * (static_cast<std::size_t>(y) * width + x);
    }
    bool operator==(const RgbImage &) const = default;
};

void write_png(const std::filesystem::path &path, const RgbImage &image);
RgbImage read_png(const std::filesystem::path &path);

/// Frame delay for the given frame rate: round(100 / fps) centiseconds.
int gif_delay_centiseconds(int fps);

/// Looping GIF89a with a fixed 3-3-2 RGB palette and one image per frame.
std::vector<std::uint8_t> encode_gif(std::span<const RgbImage> frames, int delay_cs);
void write_gif(const std::filesystem::path &path, std::span<const RgbImage> frames, int delay_cs);

} // namespace framewise
