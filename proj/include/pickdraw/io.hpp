// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pickdraw/tensor.hpp"

// File-format helpers: a minimal PNG encoder (8-bit RGB, zlib-compressed),
// little-endian binary tensor records, and CSV emission. Everything takes and
// returns plain Tensors; compute stays in double, files store f32.

namespace pickdraw::io {

inline void ensure_dir(const std::string& path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec) throw std::runtime_error("ensure_dir: cannot create " + path + ": " + ec.message());
}

inline bool file_exists(const std::string& path) { return std::filesystem::exists(path); }

inline void write_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("write_bytes: cannot open " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write_bytes: short write to " + path);
}

inline std::vector<uint8_t> read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw std::runtime_error("read_bytes: cannot open " + path);
    const auto size = f.tellg();
    f.seekg(0);
    std::vector<uint8_t> bytes(static_cast<size_t>(size));
    f.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!f) throw std::runtime_error("read_bytes: short read from " + path);
    return bytes;
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("write_text: cannot open " + path);
    f << text;
}

inline std::string read_text(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("read_text: cannot open " + path);
    std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return s;
}

// ---------------------------------------------------------------------------
// Little-endian binary records
// ---------------------------------------------------------------------------

class BinWriter {
public:
    void u8(uint8_t v) { bytes_.push_back(v); }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void f32(float v) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    void f64(double v) {
        uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        bytes_.insert(bytes_.end(), s.begin(), s.end());
    }
    /// Tensor payload: rank, dims, f32 data.
    void tensor_f32(const Tensor& t) {
        u32(static_cast<uint32_t>(t.rank()));
        for (int i = 0; i < t.rank(); ++i) u32(static_cast<uint32_t>(t.dim(i)));
        for (size_t i = 0; i < t.numel(); ++i) f32(static_cast<float>(t[i]));
    }
    void tensor_u8(const Tensor& t) {
        u32(static_cast<uint32_t>(t.rank()));
        for (int i = 0; i < t.rank(); ++i) u32(static_cast<uint32_t>(t.dim(i)));
        for (size_t i = 0; i < t.numel(); ++i)
            u8(static_cast<uint8_t>(t[i] <= 0.0 ? 0 : (t[i] >= 1.0 ? 255 : t[i] * 255.0 + 0.5)));
    }

    const std::vector<uint8_t>& bytes() const { return bytes_; }
    void save(const std::string& path) const { write_bytes(path, bytes_); }

private:
    std::vector<uint8_t> bytes_;
};

class BinReader {
public:
    explicit BinReader(std::vector<uint8_t> bytes) : bytes_(std::move(bytes)) {}
    static BinReader open(const std::string& path) { return BinReader(read_bytes(path)); }

    uint8_t u8() {
        need(1);
        return bytes_[pos_++];
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes_[pos_++]) << (8 * i);
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(bytes_[pos_++]) << (8 * i);
        return v;
    }
    float f32() {
        uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    double f64() {
        uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str() {
        const uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    Tensor tensor_f32() {
        std::vector<int> shape(u32());
        for (auto& d : shape) d = static_cast<int>(u32());
        Tensor t(shape);
        for (size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<double>(f32());
        return t;
    }
    Tensor tensor_u8() {
        std::vector<int> shape(u32());
        for (auto& d : shape) d = static_cast<int>(u32());
        Tensor t(shape);
        for (size_t i = 0; i < t.numel(); ++i) t[i] = u8() / 255.0;
        return t;
    }
    bool exhausted() const { return pos_ == bytes_.size(); }

private:
    void need(size_t n) {
        if (pos_ + n > bytes_.size()) throw std::runtime_error("BinReader: truncated record");
    }
    std::vector<uint8_t> bytes_;
    size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// PNG encoding (8-bit RGB, filter 0, single IDAT)
// ---------------------------------------------------------------------------

namespace detail {

inline void png_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& payload) {
    const uint32_t len = static_cast<uint32_t>(payload.size());
    for (int i = 3; i >= 0; --i) out.push_back(static_cast<uint8_t>(len >> (8 * i)));
    const size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const uint32_t crc = static_cast<uint32_t>(
        ::crc32(0, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start)));
    for (int i = 3; i >= 0; --i) out.push_back(static_cast<uint8_t>(crc >> (8 * i)));
}

}  // namespace detail

inline std::vector<uint8_t> png_encode_rgb8(int width, int height, const std::vector<uint8_t>& rgb) {
    if (rgb.size() != static_cast<size_t>(width) * height * 3)
        throw std::invalid_argument("png_encode_rgb8: buffer size mismatch");
    std::vector<uint8_t> out{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

    std::vector<uint8_t> ihdr;
    auto be32 = [&ihdr](uint32_t v) {
        for (int i = 3; i >= 0; --i) ihdr.push_back(static_cast<uint8_t>(v >> (8 * i)));
    };
    be32(static_cast<uint32_t>(width));
    be32(static_cast<uint32_t>(height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // color type: truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    detail::png_chunk(out, "IHDR", ihdr);

    // Raw scanlines, each prefixed with filter byte 0.
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(height) * (1 + 3 * width));
    for (int y = 0; y < height; ++y) {
        raw.push_back(0);
        raw.insert(raw.end(), rgb.begin() + static_cast<size_t>(y) * width * 3,
                   rgb.begin() + static_cast<size_t>(y + 1) * width * 3);
    }
    uLongf bound = ::compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> idat(bound);
    if (::compress2(idat.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
        throw std::runtime_error("png_encode_rgb8: deflate failed");
    idat.resize(bound);
    detail::png_chunk(out, "IDAT", idat);
    detail::png_chunk(out, "IEND", {});
    return out;
}

/// [H,W,3] image in [0,1] to 8-bit RGB, nearest-neighbour upscaled.
inline std::vector<uint8_t> tensor_to_rgb8(const Tensor& img, int upscale = 1) {
    if (img.rank() != 3 || img.dim(2) != 3)
        throw std::invalid_argument("tensor_to_rgb8: expected [H x W x 3]");
    const int h = img.dim(0), w = img.dim(1);
    std::vector<uint8_t> rgb(static_cast<size_t>(h) * upscale * w * upscale * 3);
    size_t p = 0;
    for (int y = 0; y < h * upscale; ++y)
        for (int x = 0; x < w * upscale; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = img.at(y / upscale, x / upscale, c);
                v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
                rgb[p++] = static_cast<uint8_t>(v * 255.0 + 0.5);
            }
    return rgb;
}

inline void save_png(const std::string& path, const Tensor& img, int upscale = 1) {
    write_bytes(path, png_encode_rgb8(img.dim(1) * upscale, img.dim(0) * upscale,
                                      tensor_to_rgb8(img, upscale)));
}

/// Arrange equally sized [H,W,3] images into a grid with a 1-pixel separator.
inline Tensor tile_images(const std::vector<Tensor>& images, int cols, double sep_value = 1.0) {
    if (images.empty()) throw std::invalid_argument("tile_images: no images");
    const int h = images[0].dim(0), w = images[0].dim(1);
    const int rows = (static_cast<int>(images.size()) + cols - 1) / cols;
    Tensor grid({rows * h + (rows - 1), cols * w + (cols - 1), 3});
    for (size_t i = 0; i < grid.numel(); ++i) grid[i] = sep_value;
    for (size_t k = 0; k < images.size(); ++k) {
        const int r = static_cast<int>(k) / cols, c = static_cast<int>(k) % cols;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int ch = 0; ch < 3; ++ch)
                    grid.at(r * (h + 1) + y, c * (w + 1) + x, ch) = images[k].at(y, x, ch);
    }
    return grid;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) : cols_(header.size()) {
        for (size_t i = 0; i < header.size(); ++i) body_ += (i ? "," : "") + header[i];
        body_ += "\n";
    }
    void row(const std::vector<std::string>& cells) {
        if (cells.size() != cols_) throw std::invalid_argument("CsvWriter: column count mismatch");
        for (size_t i = 0; i < cells.size(); ++i) body_ += (i ? "," : "") + cells[i];
        body_ += "\n";
    }
    void save(const std::string& path) const { write_text(path, body_); }
    const std::string& text() const { return body_; }

private:
    size_t cols_;
    std::string body_;
};

}  // namespace pickdraw::io
