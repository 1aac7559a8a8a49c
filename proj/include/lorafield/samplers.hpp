#pragma once

// Training/eval batch generation for images and SDF sources, the synthetic
// edit generators, and procedural frame sequences. All batches are
// deterministic given (seed, parameters) and emit coordinates in [-1, 1]^m.

#include <cmath>
#include <variant>
#include <vector>

#include "lorafield/errors.hpp"
#include "lorafield/image.hpp"
#include "lorafield/linalg.hpp"
#include "lorafield/sdf.hpp"

namespace lorafield {

struct SampleBatch {
    DenseMatrix coords;  // one sample per row
    DenseMatrix targets; // matching field values
};

// Pixel (row i, col j) center maps to (-1 + (2j+1)/W, -1 + (2i+1)/H).
inline void pixel_center(const RasterImage& img, int row, int col, double* xy) {
    xy[0] = -1.0 + (2.0 * col + 1.0) / img.width;
    xy[1] = -1.0 + (2.0 * row + 1.0) / img.height;
}

// Uniform pixel-center sampling; targets are exact pixel values, no
// interpolation.
inline SampleBatch sample_image_batch(const RasterImage& img, int count, SeededRng& rng) {
    if (count < 1) throw std::invalid_argument("sample_image_batch: count must be >= 1");
    SampleBatch batch;
    batch.coords = DenseMatrix(count, 2);
    batch.targets = DenseMatrix(count, img.channels);
    for (int s = 0; s < count; ++s) {
        const int row = static_cast<int>(rng.next_below(img.height));
        const int col = static_cast<int>(rng.next_below(img.width));
        pixel_center(img, row, col, batch.coords.row(s));
        for (int c = 0; c < img.channels; ++c) batch.targets(s, c) = img.at(row, col, c);
    }
    return batch;
}

// Deterministic sweep covering each pixel center exactly once, row-major.
inline SampleBatch image_grid_batch(const RasterImage& img) {
    SampleBatch batch;
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
    batch.coords = DenseMatrix(n, 2);
    batch.targets = DenseMatrix(n, img.channels);
    std::size_t s = 0;
    for (int row = 0; row < img.height; ++row)
        for (int col = 0; col < img.width; ++col, ++s) {
            pixel_center(img, row, col, batch.coords.row(s));
            for (int c = 0; c < img.channels; ++c) batch.targets(s, c) = img.at(row, col, c);
        }
    return batch;
}

namespace detail {

// Moves a uniform sample toward the zero set along the numeric gradient,
// then jitters. Skipped when the gradient estimate degenerates (e.g.
// piecewise-constant nearest-neighbor sources).
inline Vec3 project_near_surface(const SdfSource& src, Vec3 x, SeededRng& rng) {
    const double h = 1e-4;
    const double d = src.evaluate(x);
    Vec3 g{};
    for (int j = 0; j < 3; ++j) {
        Vec3 plus = x, minus = x;
        plus[j] += h;
        minus[j] -= h;
        g[j] = (src.evaluate(plus) - src.evaluate(minus)) / (2.0 * h);
    }
    const double norm = std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
    if (norm > 1e-6) {
        for (int j = 0; j < 3; ++j) x[j] -= d * g[j] / norm;
    }
    constexpr double jitter_sigma = 0.01;
    for (int j = 0; j < 3; ++j) {
        x[j] += rng.normal(0.0, jitter_sigma * jitter_sigma);
        x[j] = std::clamp(x[j], -1.0, 1.0);
    }
    return x;
}

} // namespace detail

// Mixture of uniform box samples and near-surface samples; targets come from
// the source evaluator.
inline SampleBatch sample_sdf_batch(const SdfSource& src, int count, SeededRng& rng,
                                    double surface_fraction = 0.5) {
    if (count < 1) throw std::invalid_argument("sample_sdf_batch: count must be >= 1");
    if (surface_fraction < 0.0 || surface_fraction > 1.0)
        throw std::invalid_argument("sample_sdf_batch: surface_fraction outside [0, 1]");
    SampleBatch batch;
    batch.coords = DenseMatrix(count, 3);
    batch.targets = DenseMatrix(count, 1);
    for (int s = 0; s < count; ++s) {
        Vec3 x = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        if (rng.next_double() < surface_fraction) x = detail::project_near_surface(src, x, rng);
        batch.coords(s, 0) = x[0];
        batch.coords(s, 1) = x[1];
        batch.coords(s, 2) = x[2];
        batch.targets(s, 0) = src.evaluate(x);
    }
    return batch;
}

// ---------------------------------------------------------------------------
// Synthetic edits
// ---------------------------------------------------------------------------

namespace detail {

// Separable Gaussian blur, sigma = radius pixels, replicated boundaries.
inline RasterImage gaussian_blur(const RasterImage& img, int radius) {
    if (radius <= 0) return img;
    const double sigma = static_cast<double>(radius);
    const int half = 3 * radius;
    std::vector<double> kernel(2 * half + 1);
    double sum = 0.0;
    for (int i = -half; i <= half; ++i) {
        kernel[i + half] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += kernel[i + half];
    }
    for (double& k : kernel) k /= sum;

    RasterImage tmp = img;
    for (int row = 0; row < img.height; ++row)
        for (int col = 0; col < img.width; ++col)
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0;
                for (int i = -half; i <= half; ++i) {
                    const int cc = std::clamp(col + i, 0, img.width - 1);
                    acc += kernel[i + half] * img.at(row, cc, c);
                }
                tmp.at(row, col, c) = acc;
            }
    RasterImage out = tmp;
    for (int row = 0; row < img.height; ++row)
        for (int col = 0; col < img.width; ++col)
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0;
                for (int i = -half; i <= half; ++i) {
                    const int rr = std::clamp(row + i, 0, img.height - 1);
                    acc += kernel[i + half] * tmp.at(rr, col, c);
                }
                out.at(row, col, c) = acc;
            }
    return out;
}

} // namespace detail

// Low-frequency Gaussian edit: per-pixel iid N(0, sigma^2) noise, blurred,
// scaled by k, added, clamped to [0, 1]. k = 0 returns the input bitwise.
inline RasterImage gaussian_lowfreq_edit(const RasterImage& img, double sigma, int blur_radius,
                                         double k, SeededRng& rng) {
    if (k < 0.0) throw std::invalid_argument("gaussian_lowfreq_edit: k must be >= 0");
    if (k == 0.0) return img;
    RasterImage noise(img.width, img.height, img.channels);
    for (double& v : noise.pixels) v = rng.normal(0.0, sigma * sigma);
    noise = detail::gaussian_blur(noise, blur_radius);
    RasterImage out = img;
    for (std::size_t i = 0; i < out.pixels.size(); ++i)
        out.pixels[i] = std::clamp(out.pixels[i] + k * noise.pixels[i], 0.0, 1.0);
    return out;
}

// ---------------------------------------------------------------------------
// Procedural frame sequences
// ---------------------------------------------------------------------------

enum class VideoKind { translating_pattern, growing_disk };

namespace detail {

inline RasterImage base_pattern(int size) {
    RasterImage img(size, size, 3);
    const double tau = 6.283185307179586;
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) {
            const double u = static_cast<double>(j) / size;
            const double v = static_cast<double>(i) / size;
            img.at(i, j, 0) = 0.5 + 0.28 * std::sin(tau * 2.0 * u) * std::cos(tau * v);
            img.at(i, j, 1) = 0.5 + 0.24 * std::sin(tau * (u + 2.0 * v));
            img.at(i, j, 2) = 0.5 + 0.20 * std::cos(tau * 3.0 * u) * std::sin(tau * 2.0 * v);
        }
    for (double& p : img.pixels) p = std::clamp(p, 0.0, 1.0);
    return img;
}

} // namespace detail

// Deterministic procedural frames with bounded inter-frame change. The
// translating pattern circularly shifts a smooth texture by `velocity`
// pixels per frame; the growing disk expands its radius each frame.
inline std::vector<RasterImage> synthetic_video(VideoKind kind, int frames, int size,
                                                int velocity = 1) {
    if (frames < 2) throw std::invalid_argument("synthetic_video: frames must be >= 2");
    if (size < 4) throw std::invalid_argument("synthetic_video: size must be >= 4");
    std::vector<RasterImage> out;
    out.reserve(frames);
    if (kind == VideoKind::translating_pattern) {
        const RasterImage base = detail::base_pattern(size);
        for (int f = 0; f < frames; ++f) {
            RasterImage frame(size, size, 3);
            const int shift = (f * velocity) % size;
            for (int i = 0; i < size; ++i)
                for (int j = 0; j < size; ++j) {
                    const int src = ((j - shift) % size + size) % size;
                    for (int c = 0; c < 3; ++c) frame.at(i, j, c) = base.at(i, src, c);
                }
            out.push_back(std::move(frame));
        }
    } else {
        const double r0 = 0.15 * size;
        const double dr = 0.35 * size / frames * std::max(velocity, 0);
        for (int f = 0; f < frames; ++f) {
            RasterImage frame(size, size, 3, 0.15);
            const double radius = r0 + f * dr;
            const double cx = 0.5 * size, cy = 0.5 * size;
            for (int i = 0; i < size; ++i)
                for (int j = 0; j < size; ++j) {
                    const double d = std::hypot(j + 0.5 - cx, i + 0.5 - cy);
                    if (d < radius) {
                        frame.at(i, j, 0) = 0.85;
                        frame.at(i, j, 1) = 0.55;
                        frame.at(i, j, 2) = 0.25;
                    }
                }
            out.push_back(std::move(frame));
        }
    }
    return out;
}

// Ordered frames of one modality; length >= 2, dimensions uniform.
struct FrameSequence {
    std::variant<std::vector<RasterImage>, std::vector<SdfSource>> frames;

    static FrameSequence from_images(std::vector<RasterImage> images) {
        if (images.size() < 2) throw std::invalid_argument("FrameSequence: need >= 2 frames");
        for (const auto& f : images)
            if (!f.same_shape(images.front()))
                throw std::invalid_argument("FrameSequence: frame dimensions differ");
        return FrameSequence{std::move(images)};
    }
    static FrameSequence from_sdfs(std::vector<SdfSource> sdfs) {
        if (sdfs.size() < 2) throw std::invalid_argument("FrameSequence: need >= 2 frames");
        return FrameSequence{std::move(sdfs)};
    }

    bool is_image() const { return frames.index() == 0; }
    std::size_t size() const {
        return is_image() ? std::get<0>(frames).size() : std::get<1>(frames).size();
    }
    const std::vector<RasterImage>& images() const { return std::get<0>(frames); }
    const std::vector<SdfSource>& sdfs() const { return std::get<1>(frames); }
};

} // namespace lorafield
