#pragma once

// Raster images with normalized [0, 1] samples and binary Netpbm (P5/P6)
// reading/writing, 8- and 16-bit per the Netpbm maxval rules.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lorafield/errors.hpp"
#include "lorafield/io_util.hpp"

namespace lorafield {

struct RasterImage {
    int width = 0;
    int height = 0;
    int channels = 1; // 1 (gray) or 3 (rgb)
    std::vector<double> pixels; // row-major, channel-minor, values in [0, 1]

    RasterImage() = default;
    RasterImage(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c),
          pixels(static_cast<std::size_t>(w) * h * c, fill) {}

    double& at(int row, int col, int c) {
        return pixels[(static_cast<std::size_t>(row) * width + col) * channels + c];
    }
    double at(int row, int col, int c) const {
        return pixels[(static_cast<std::size_t>(row) * width + col) * channels + c];
    }
    std::size_t sample_count() const { return pixels.size(); }

    bool same_shape(const RasterImage& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
};

namespace detail {

struct PnmCursor {
    const std::uint8_t* p;
    const std::uint8_t* end;
    std::string path;

    bool at_end() const { return p >= end; }
    std::uint8_t peek() const { return *p; }

    void skip_space_and_comments() {
        while (p < end) {
            if (std::isspace(*p)) {
                ++p;
            } else if (*p == '#') {
                while (p < end && *p != '\n') ++p;
            } else {
                break;
            }
        }
    }

    long parse_int() {
        skip_space_and_comments();
        if (at_end() || !std::isdigit(*p)) throw IoError(path + ": malformed Netpbm header");
        long v = 0;
        while (p < end && std::isdigit(*p)) {
            v = v * 10 + (*p - '0');
            if (v > 1000000000L) throw IoError(path + ": header value out of range");
            ++p;
        }
        return v;
    }
};

} // namespace detail

// Strict binary Netpbm reader. P5 -> 1 channel, P6 -> 3 channels. Samples
// are divided by maxval; maxval > 255 means two bytes per sample, most
// significant byte first.
inline RasterImage load_netpbm(const std::string& path) {
    const std::vector<std::uint8_t> bytes = read_file_bytes(path);
    if (bytes.size() < 2) throw IoError(path + ": not a Netpbm file");
    detail::PnmCursor cur{bytes.data(), bytes.data() + bytes.size(), path};

    if (cur.p[0] != 'P' || (cur.p[1] != '5' && cur.p[1] != '6'))
        throw IoError(path + ": unsupported magic (want binary P5 or P6)");
    const int channels = cur.p[1] == '6' ? 3 : 1;
    cur.p += 2;

    const long width = cur.parse_int();
    const long height = cur.parse_int();
    const long maxval = cur.parse_int();
    if (width < 1 || height < 1) throw IoError(path + ": invalid dimensions");
    if (maxval < 1 || maxval > 65535) throw IoError(path + ": maxval outside [1, 65535]");
    if (cur.at_end() || !std::isspace(*cur.p)) throw IoError(path + ": malformed Netpbm header");
    ++cur.p; // exactly one whitespace byte before the raster

    const std::size_t samples = static_cast<std::size_t>(width) * height * channels;
    const std::size_t bytes_per_sample = maxval > 255 ? 2 : 1;
    const std::size_t need = samples * bytes_per_sample;
    const std::size_t have = static_cast<std::size_t>(cur.end - cur.p);
    if (have < need) throw IoError(path + ": truncated raster data");
    if (have > need) throw IoError(path + ": trailing bytes after raster data");

    RasterImage img(static_cast<int>(width), static_cast<int>(height), channels);
    const double inv = 1.0 / static_cast<double>(maxval);
    for (std::size_t i = 0; i < samples; ++i) {
        unsigned v;
        if (bytes_per_sample == 2) {
            v = (static_cast<unsigned>(cur.p[2 * i]) << 8) | cur.p[2 * i + 1];
        } else {
            v = cur.p[i];
        }
        if (v > static_cast<unsigned>(maxval))
            throw IoError(path + ": sample exceeds maxval");
        img.pixels[i] = static_cast<double>(v) * inv;
    }
    return img;
}

// Writes P5 (1 channel) or P6 (3 channels). maxval 255 or 65535.
inline void save_netpbm(const RasterImage& img, const std::string& path, int maxval = 255) {
    if (img.channels != 1 && img.channels != 3)
        throw std::invalid_argument("save_netpbm: channels must be 1 or 3");
    if (maxval != 255 && maxval != 65535)
        throw std::invalid_argument("save_netpbm: maxval must be 255 or 65535");

    std::string header = (img.channels == 3 ? "P6\n" : "P5\n") + std::to_string(img.width) + " " +
                         std::to_string(img.height) + "\n" + std::to_string(maxval) + "\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + img.sample_count() * (maxval > 255 ? 2 : 1));
    for (double p : img.pixels) {
        const double clamped = std::clamp(p, 0.0, 1.0);
        const unsigned v = static_cast<unsigned>(std::lround(clamped * maxval));
        if (maxval > 255) {
            out.push_back(static_cast<std::uint8_t>(v >> 8));
            out.push_back(static_cast<std::uint8_t>(v & 0xFF));
        } else {
            out.push_back(static_cast<std::uint8_t>(v));
        }
    }
    write_file_atomic(path, out);
}

} // namespace lorafield
