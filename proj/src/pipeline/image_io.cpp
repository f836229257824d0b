#include "framewise/image_io.hpp"

#include <csetjmp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>

#include <png.h>

namespace framewise {
namespace {

struct FileCloser {
    void operator()(std::FILE *f) const {
        if (f != nullptr)
            std::fclose(f);
    }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_file(const std::filesystem::path &path, const char *mode) {
    File f(std::fopen(path.c_str(), mode));
    if (!f)
        throw std::runtime_error("cannot open " + path.string());
    return f;
}

void check_image(const RgbImage &image) {
    if (image.width < 1 || image.height < 1 ||
        image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * 3)
        throw std::invalid_argument("RgbImage: pixel buffer does not match its dimensions");
}

// GIF variable-width code packer (LSB first) with 255-byte sub-blocks.
class BitWriter {
public:
    explicit BitWriter(std::vector<std::uint8_t> &out) : out_(out) {}
    void write(unsigned code, int bits) {
        acc_ |= static_cast<std::uint32_t>(code) << nbits_;
        nbits_ += bits;
        while (nbits_ >= 8) {
            push(static_cast<std::uint8_t>(acc_ & 0xff));
            acc_ >>= 8;
            nbits_ -= 8;
        }
    }
    void finish() {
        if (nbits_ > 0)
            push(static_cast<std::uint8_t>(acc_ & 0xff));
        acc_ = 0;
        nbits_ = 0;
        flush_block();
        out_.push_back(0); // block terminator
    }

private:
    void push(std::uint8_t byte) {
        block_.push_back(byte);
        if (block_.size() == 255)
            flush_block();
    }
    void flush_block() {
        if (block_.empty())
            return;
        out_.push_back(static_cast<std::uint8_t>(block_.size()));
        out_.insert(out_.end(), block_.begin(), block_.end());
        block_.clear();
    }

    std::vector<std::uint8_t> &out_;
    std::vector<std::uint8_t> block_;
    std::uint32_t acc_ = 0;
    int nbits_ = 0;
};

void lzw_encode(std::span<const std::uint8_t> indices, std::vector<std::uint8_t> &out) {
    constexpr int kMinCodeSize = 8;
    constexpr unsigned kClear = 1u << kMinCodeSize;
    constexpr unsigned kEnd = kClear + 1;
    constexpr unsigned kMaxCodes = 4096;

    out.push_back(kMinCodeSize);
    BitWriter bits(out);
    // dict[prefix * 256 + byte] = code, 0 meaning absent (code 0 is never a
    // composite code).
    std::vector<std::uint16_t> dict(kMaxCodes * 256, 0);
    int code_size = kMinCodeSize + 1;
    unsigned next = kEnd + 1;
    bits.write(kClear, code_size);

    unsigned prefix = indices[0];
    for (std::size_t i = 1; i < indices.size(); ++i) {
        const std::uint8_t c = indices[i];
        const std::size_t slot = static_cast<std::size_t>(prefix) * 256 + c;
        if (dict[slot] != 0) {
            prefix = dict[slot];
            continue;
        }
        bits.write(prefix, code_size);
        dict[slot] = static_cast<std::uint16_t>(next++);
        // The decoder lags one entry behind, so widen once it would need to.
        if (next > (1u << code_size) && code_size < 12)
            ++code_size;
        if (next == kMaxCodes) {
            bits.write(kClear, code_size);
            std::fill(dict.begin(), dict.end(), 0);
            code_size = kMinCodeSize + 1;
            next = kEnd + 1;
        }
        prefix = c;
    }
    bits.write(prefix, code_size);
    bits.write(kEnd, code_size);
    bits.finish();
}

void put_u16(std::vector<std::uint8_t> &out, unsigned v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
}

std::uint8_t palette_index(const std::uint8_t *rgb) {
    return static_cast<std::uint8_t>((rgb[0] >> 5) << 5 | (rgb[1] >> 5) << 2 | (rgb[2] >> 6));
}

// libpng reports errors by longjmp; these helpers keep every C++ object
// with a destructor outside the setjmp frame.
bool png_write_rows(std::FILE *f, const RgbImage &image) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (png == nullptr)
        return false;
    png_infop info = png_create_info_struct(png);
    if (info == nullptr || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        return false;
    }
    png_init_io(png, f);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
                 static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < image.height; ++y)
        png_write_row(png, image.at(0, y));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return true;
}

bool png_read_rows(std::FILE *f, RgbImage &image) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (png == nullptr)
        return false;
    png_infop info = png_create_info_struct(png);
    if (info == nullptr || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        return false;
    }
    png_init_io(png, f);
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16)
        png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE)
        png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA)
        png_set_strip_alpha(png);
    png_read_update_info(png, info);
    const auto width = png_get_image_width(png, info);
    const auto height = png_get_image_height(png, info);
    if (png_get_rowbytes(png, info) != static_cast<std::size_t>(width) * 3 ||
        static_cast<std::size_t>(image.width) != width ||
        static_cast<std::size_t>(image.height) != height) {
        png_destroy_read_struct(&png, &info, nullptr);
        return false;
    }
    for (png_uint_32 y = 0; y < height; ++y)
        png_read_row(png, image.at(0, static_cast<int>(y)), nullptr);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return true;
}

bool png_dimensions(std::FILE *f, int &width, int &height) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (png == nullptr)
        return false;
    png_infop info = png_create_info_struct(png);
    if (info == nullptr || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        return false;
    }
    png_init_io(png, f);
    png_read_info(png, info);
    width = static_cast<int>(png_get_image_width(png, info));
    height = static_cast<int>(png_get_image_height(png, info));
    png_destroy_read_struct(&png, &info, nullptr);
    return true;
}

} // namespace

void write_png(const std::filesystem::path &path, const RgbImage &image) {
    check_image(image);
    File f = open_file(path, "wb");
    if (!png_write_rows(f.get(), image) || std::fflush(f.get()) != 0)
        throw std::runtime_error("cannot write PNG " + path.string());
}

RgbImage read_png(const std::filesystem::path &path) {
    int width = 0;
    int height = 0;
    {
        File f = open_file(path, "rb");
        if (!png_dimensions(f.get(), width, height) || width < 1 || height < 1)
            throw std::runtime_error("cannot read PNG " + path.string());
    }
    RgbImage image(width, height);
    File f = open_file(path, "rb");
    if (!png_read_rows(f.get(), image))
        throw std::runtime_error("cannot read PNG " + path.string());
    return image;
}

int gif_delay_centiseconds(int fps) {
    if (fps < 1)
        throw std::invalid_argument("gif delay: fps must be >= 1");
    return static_cast<int>(std::lround(100.0 / fps));
}

std::vector<std::uint8_t> encode_gif(std::span<const RgbImage> frames, int delay_cs) {
    if (frames.empty())
        throw std::invalid_argument("encode_gif: no frames");
    if (delay_cs < 0 || delay_cs > 0xffff)
        throw std::invalid_argument("encode_gif: delay out of range");
    const int width = frames.front().width;
    const int height = frames.front().height;
    for (const auto &f : frames) {
        check_image(f);
        if (f.width != width || f.height != height)
            throw std::invalid_argument("encode_gif: frames differ in size");
    }
    if (width > 0xffff || height > 0xffff)
        throw std::invalid_argument("encode_gif: image too large");

    std::vector<std::uint8_t> out;
    const std::string header = "GIF89a";
    out.insert(out.end(), header.begin(), header.end());
    put_u16(out, static_cast<unsigned>(width));
    put_u16(out, static_cast<unsigned>(height));
    out.push_back(0xf7); // global color table, 8 bits per channel, 256 entries
    out.push_back(0);    // background
    out.push_back(0);    // aspect
    for (unsigned i = 0; i < 256; ++i) {
        out.push_back(static_cast<std::uint8_t>(((i >> 5) & 7) * 255 / 7));
        out.push_back(static_cast<std::uint8_t>(((i >> 2) & 7) * 255 / 7));
        out.push_back(static_cast<std::uint8_t>((i & 3) * 255 / 3));
    }
    // NETSCAPE2.0 application extension: loop forever.
    const std::uint8_t loop[] = {0x21, 0xff, 0x0b, 'N', 'E', 'T', 'S', 'C', 'A', 'P', 'E',
                                 '2',  '.',  '0',  0x03, 0x01, 0x00, 0x00, 0x00};
    out.insert(out.end(), std::begin(loop), std::end(loop));

    std::vector<std::uint8_t> indices(static_cast<std::size_t>(width) * height);
    for (const auto &f : frames) {
        out.insert(out.end(), {0x21, 0xf9, 0x04, 0x00});
        put_u16(out, static_cast<unsigned>(delay_cs));
        out.insert(out.end(), {0x00, 0x00});
        out.push_back(0x2c);
        put_u16(out, 0);
        put_u16(out, 0);
        put_u16(out, static_cast<unsigned>(width));
        put_u16(out, static_cast<unsigned>(height));
        out.push_back(0x00);
        for (std::size_t p = 0; p < indices.size(); ++p)
            indices[p] = palette_index(f.pixels.data() + 3 * p);
        lzw_encode(indices, out);
    }
    out.push_back(0x3b);
    return out;
}

void write_gif(const std::filesystem::path &path, std::span<const RgbImage> frames, int delay_cs) {
    const auto bytes = encode_gif(frames, delay_cs);
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open " + path.string());
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
}

} // namespace framewise
