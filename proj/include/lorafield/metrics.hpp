#pragma once

// Quantitative evaluation: MSE/PSNR against reference rasters, Monte-Carlo
// IoU between signed-distance fields, full-grid field rendering, and the
// metric report CSV schema.

#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "lorafield/errors.hpp"
#include "lorafield/field.hpp"
#include "lorafield/image.hpp"
#include "lorafield/io_util.hpp"
#include "lorafield/samplers.hpp"

namespace lorafield {

inline double mse(const RasterImage& a, const RasterImage& b) {
    if (!a.same_shape(b)) throw ShapeError("mse: image dimensions differ");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = a.pixels[i] - b.pixels[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.pixels.size());
}

// Peak 1.0 (normalized pixels); identical images report +infinity.
inline double psnr_from_mse(double mse_value) {
    if (mse_value <= 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse_value);
}

inline double psnr(const RasterImage& a, const RasterImage& b) {
    return psnr_from_mse(mse(a, b));
}

// Batched signed-distance evaluator: rows of coords -> distances.
using BatchSdf = std::function<std::vector<double>(const DenseMatrix&)>;

inline BatchSdf batch_sdf_from_source(SdfSource src) {
    return [src = std::move(src)](const DenseMatrix& pts) {
        std::vector<double> out(pts.rows());
        for (std::size_t i = 0; i < pts.rows(); ++i)
            out[i] = src.evaluate(pts(i, 0), pts(i, 1), pts(i, 2));
        return out;
    };
}

inline BatchSdf batch_sdf_from_field(FieldArchitecture arch, FieldWeights weights,
                                     const AdapterSet* adapters = nullptr) {
    AdapterSet attached;
    const bool has_adapters = adapters != nullptr;
    if (has_adapters) attached = *adapters;
    return [arch = std::move(arch), weights = std::move(weights), attached = std::move(attached),
            has_adapters](const DenseMatrix& pts) {
        DenseMatrix out = forward_batch(arch, weights, has_adapters ? &attached : nullptr, pts);
        return std::vector<double>(out.data().begin(), out.data().end());
    };
}

// Monte-Carlo IoU over [-1, 1]^3: inside means value < 0; both-empty counts
// as 1. Points are drawn in fixed 65536-sample blocks so a given (seed,
// samples) pair always sees the same point set. With the default 1e6
// samples the Monte-Carlo error is on the order of 1e-3.
inline double iou(const BatchSdf& f, const BatchSdf& g, long long samples, SeededRng& rng) {
    if (samples < 1) throw std::invalid_argument("iou: samples must be >= 1");
    long long both = 0, either = 0;
    long long remaining = samples;
    while (remaining > 0) {
        const std::size_t block = static_cast<std::size_t>(std::min<long long>(remaining, 65536));
        DenseMatrix pts(block, 3);
        for (double& v : pts.data()) v = rng.uniform(-1.0, 1.0);
        const std::vector<double> fd = f(pts);
        const std::vector<double> gd = g(pts);
        for (std::size_t i = 0; i < block; ++i) {
            const bool in_f = fd[i] < 0.0;
            const bool in_g = gd[i] < 0.0;
            if (in_f && in_g) ++both;
            if (in_f || in_g) ++either;
        }
        remaining -= static_cast<long long>(block);
    }
    if (either == 0) return 1.0;
    return static_cast<double>(both) / static_cast<double>(either);
}

// Deterministic full-grid evaluation at pixel centers, clamped to [0, 1].
inline RasterImage render_field_image(const FieldArchitecture& arch, const FieldWeights& weights,
                                      const AdapterSet* adapters, int width, int height) {
    RasterImage out(width, height, arch.output_dim);
    const std::size_t total = static_cast<std::size_t>(width) * height;
    const std::size_t chunk = 8192;
    for (std::size_t start = 0; start < total; start += chunk) {
        const std::size_t n = std::min(chunk, total - start);
        DenseMatrix coords(n, 2);
        for (std::size_t i = 0; i < n; ++i) {
            const int row = static_cast<int>((start + i) / width);
            const int col = static_cast<int>((start + i) % width);
            pixel_center(out, row, col, coords.row(i));
        }
        DenseMatrix vals = forward_batch(arch, weights, adapters, coords);
        for (std::size_t i = 0; i < n; ++i)
            for (int c = 0; c < arch.output_dim; ++c)
                out.pixels[(start + i) * arch.output_dim + c] = std::clamp(vals(i, c), 0.0, 1.0);
    }
    return out;
}

struct ImageEval {
    RasterImage render;
    double mse = 0.0;
    double psnr = 0.0;
};

inline ImageEval eval_field_image(const FieldArchitecture& arch, const FieldWeights& weights,
                                  const AdapterSet* adapters, const RasterImage& reference) {
    ImageEval out;
    out.render = render_field_image(arch, weights, adapters, reference.width, reference.height);
    out.mse = mse(out.render, reference);
    out.psnr = psnr_from_mse(out.mse);
    return out;
}

// ---------------------------------------------------------------------------
// Metric report rows
// ---------------------------------------------------------------------------

struct MetricRow {
    std::string experiment;
    std::string method;
    int rank = -1; // -1 when not applicable
    long long param_count = 0;
    std::string metric;
    double value = 0.0;
    std::uint64_t seed = 0;
    double seconds = 0.0;
};

inline std::string format_metric_value(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream out;
    out.precision(10);
    out << v;
    return out.str();
}

inline std::string metric_csv(const std::vector<MetricRow>& rows) {
    std::ostringstream out;
    out << "experiment,method,rank,param_count,metric,value,seed,seconds\n";
    for (const auto& r : rows) {
        out << r.experiment << ',' << r.method << ',';
        if (r.rank >= 0) out << r.rank;
        out << ',' << r.param_count << ',' << r.metric << ',' << format_metric_value(r.value)
            << ',' << r.seed << ',' << r.seconds << '\n';
    }
    return out.str();
}

inline void write_metric_csv(const std::string& path, const std::vector<MetricRow>& rows) {
    write_file_atomic(path, metric_csv(rows));
}

} // namespace lorafield
