#pragma once

// Deterministic synthetic fixtures shared by the test suites: a textured
// image, a marker-stroke edit, a piecewise-constant denoising target and a
// noise generator.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "lorafield/field.hpp"
#include "lorafield/image.hpp"
#include "lorafield/linalg.hpp"

namespace lorafield::fixtures {

// Straightforward per-sample reference evaluation, independent of the
// batched implementation. Reports the smallest hidden pre-activation
// magnitude (both signs) so gradient tests can avoid ReLU kinks.
inline std::vector<double> naive_forward(const FieldArchitecture& arch, const FieldWeights& w,
                                         const AdapterSet* adapters, std::span<const double> x,
                                         double* min_preact = nullptr) {
    std::vector<double> cur = frequency_encode(x, arch.encoding_levels);
    for (int i = 0; i < arch.layer_count(); ++i) {
        const int d_out = arch.layer_out(i);
        const int d_in = arch.layer_in(i);
        std::vector<double> z(d_out, 0.0);
        for (int o = 0; o < d_out; ++o) {
            double acc = w.bias[i][o];
            for (int in = 0; in < d_in; ++in) acc += w.weight[i](o, in) * cur[in];
            z[o] = acc;
        }
        if (adapters) {
            const int r = adapters->effective_rank(i);
            std::vector<double> mid(r, 0.0);
            for (int t = 0; t < r; ++t)
                for (int in = 0; in < d_in; ++in) mid[t] += adapters->down[i](t, in) * cur[in];
            for (int o = 0; o < d_out; ++o) {
                double acc = 0.0;
                for (int t = 0; t < r; ++t) acc += adapters->up[i](o, t) * mid[t];
                z[o] += adapters->scale(i) * acc;
            }
        }
        if (i + 1 < arch.layer_count()) {
            if (min_preact)
                for (double v : z) *min_preact = std::min(*min_preact, std::abs(v));
            for (double& v : z) v = v > 0.0 ? v : 0.0;
        }
        cur = std::move(z);
    }
    return cur;
}

inline RasterImage textured_image(int n) {
    RasterImage img(n, n, 3);
    const double tau = 6.283185307179586;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double u = (j + 0.5) / n;
            const double v = (i + 0.5) / n;
            const double blob =
                0.15 * std::exp(-((u - 0.3) * (u - 0.3) + (v - 0.6) * (v - 0.6)) / 0.05);
            img.at(i, j, 0) =
                0.45 + 0.25 * std::sin(tau * (3.0 * u + 0.5 * std::sin(tau * v))) *
                           std::cos(tau * 1.5 * v) +
                blob;
            img.at(i, j, 1) = 0.5 + 0.22 * std::sin(tau * (2.0 * u + 2.2 * v)) +
                              0.08 * std::sin(tau * 7.0 * u) + 0.5 * blob;
            img.at(i, j, 2) =
                0.5 + 0.2 * std::cos(tau * (1.2 * u - 2.5 * v)) * std::sin(tau * 2.0 * v + 1.0);
        }
    for (double& p : img.pixels) p = std::clamp(p, 0.02, 0.98);
    return img;
}

// Distance from a pixel to a segment, both in unit [0,1]^2 coordinates.
inline double segment_distance(double px, double py, double x0, double y0, double x1, double y1) {
    const double dx = x1 - x0, dy = y1 - y0;
    const double len_sq = dx * dx + dy * dy;
    double t = len_sq > 0.0 ? ((px - x0) * dx + (py - y0) * dy) / len_sq : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double cx = x0 + t * dx, cy = y0 + t * dy;
    return std::hypot(px - cx, py - cy);
}

inline void draw_stroke(RasterImage& img, double x0, double y0, double x1, double y1,
                        double radius_px, const double color[3]) {
    const double soft = 1.0; // one-pixel soft edge
    for (int i = 0; i < img.height; ++i)
        for (int j = 0; j < img.width; ++j) {
            const double u = (j + 0.5) / img.width;
            const double v = (i + 0.5) / img.height;
            const double d = segment_distance(u, v, x0, y0, x1, y1) * img.width;
            if (d >= radius_px + soft) continue;
            const double a = d <= radius_px ? 1.0 : 1.0 - (d - radius_px) / soft;
            for (int c = 0; c < 3; ++c)
                img.at(i, j, c) = (1.0 - a) * img.at(i, j, c) + a * color[c];
        }
}

// Marker-style strokes over the texture; the edit is spatially localized
// and minor (about a tenth of the samples move).
inline RasterImage stroke_edit(const RasterImage& src) {
    RasterImage img = src;
    const double red[3] = {0.85, 0.08, 0.10};
    const double blue[3] = {0.10, 0.15, 0.80};
    draw_stroke(img, 0.20, 0.22, 0.70, 0.35, 1.0, red);
    draw_stroke(img, 0.64, 0.18, 0.30, 0.74, 1.0, red);
    draw_stroke(img, 0.15, 0.80, 0.80, 0.78, 0.9, blue);
    return img;
}

inline RasterImage piecewise_image(int n) {
    RasterImage img(n, n, 3);
    const double colors[5][3] = {{0.20, 0.30, 0.70},
                                 {0.75, 0.65, 0.20},
                                 {0.25, 0.65, 0.30},
                                 {0.70, 0.25, 0.30},
                                 {0.82, 0.80, 0.78}};
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double u = (j + 0.5) / n;
            const double v = (i + 0.5) / n;
            int region = (u < 0.45 ? 0 : 1) + (v < 0.55 ? 0 : 2);
            if (u > 0.3 && u < 0.62 && v > 0.28 && v < 0.52) region = 4;
            for (int c = 0; c < 3; ++c) img.at(i, j, c) = colors[region][c];
        }
    return img;
}

inline RasterImage add_noise(const RasterImage& src, double sigma, std::uint64_t seed) {
    RasterImage img = src;
    SeededRng rng(seed);
    for (double& p : img.pixels) p = std::clamp(p + rng.normal(0.0, sigma * sigma), 0.0, 1.0);
    return img;
}

} // namespace lorafield::fixtures
