#pragma once

// Post-hoc low-rank factorization baselines (plain and input-weighted
// truncated SVD of the weight difference), the matched-parameter small-MLP
// search, and Chambolle's dual projection algorithm for TV denoising.

#include <cmath>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "lorafield/field.hpp"
#include "lorafield/image.hpp"
#include "lorafield/linalg.hpp"

namespace lorafield {

// Per-layer Gram matrices C = X X^T / N of observed layer inputs (the
// encoded input for layer 0, post-activation values after that).
struct LayerInputStats {
    std::vector<DenseMatrix> gram;
    std::size_t sample_count = 0;
};

inline LayerInputStats collect_layer_inputs(const FieldArchitecture& arch,
                                            const FieldWeights& weights,
                                            const DenseMatrix& probe_coords) {
    if (probe_coords.rows() == 0) throw std::invalid_argument("collect_layer_inputs: empty probe");
    ForwardTrace trace;
    forward_batch(arch, weights, nullptr, probe_coords, &trace);
    LayerInputStats stats;
    stats.sample_count = probe_coords.rows();
    const double inv_n = 1.0 / static_cast<double>(probe_coords.rows());
    for (const DenseMatrix& x : trace.layer_in)
        stats.gram.push_back(scaled(matmul_tn(x, x), inv_n));
    return stats;
}

namespace detail {

// tr(m * c * m^T); the squared weighted Frobenius norm ||m X||_F^2 / N.
inline double weighted_sq_norm(const DenseMatrix& m, const DenseMatrix& c) {
    DenseMatrix mc = matmul(m, c);
    double acc = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) acc += mc.data()[i] * m.data()[i];
    return acc;
}

struct GramRoots {
    DenseMatrix root;     // C^{1/2}
    DenseMatrix inv_root; // clamped pseudo-inverse root
};

// Symmetric square root and its pseudo-inverse with eigenvalues clamped at
// 1e-10, so rank-deficient probe batches stay finite.
inline GramRoots gram_roots(const DenseMatrix& c) {
    constexpr double clamp = 1e-10;
    SymmetricEigen eig = symmetric_eigen(c);
    const std::size_t n = c.rows();
    DenseMatrix root(n, n), inv_root(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double r = 0.0, ir = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                const double lambda = std::max(eig.values[k], clamp);
                const double q = eig.vectors(i, k) * eig.vectors(j, k);
                r += q * std::sqrt(lambda);
                ir += q / std::sqrt(lambda);
            }
            root(i, j) = r;
            inv_root(i, j) = ir;
        }
    return {std::move(root), std::move(inv_root)};
}

inline DenseMatrix truncated_delta(const DenseMatrix& delta, int rank) {
    const std::size_t cap = std::min<std::size_t>(
        static_cast<std::size_t>(rank), std::min(delta.rows(), delta.cols()));
    return truncate_svd(svd(delta), cap);
}

} // namespace detail

// Replaces each layer's weight difference by its rank-min(r, d_in, d_out)
// SVD truncation; biases are copied from the finetuned network.
inline FieldWeights svd_baseline(const FieldWeights& base, const FieldWeights& finetuned,
                                 int rank) {
    if (rank < 1) throw std::invalid_argument("svd_baseline: rank must be >= 1");
    if (base.weight.size() != finetuned.weight.size())
        throw ShapeError("svd_baseline: layer count mismatch");
    FieldWeights out;
    for (std::size_t l = 0; l < base.weight.size(); ++l) {
        if (!base.weight[l].same_shape(finetuned.weight[l]))
            throw ShapeError("svd_baseline: layer " + std::to_string(l) + " shape mismatch");
        DenseMatrix delta = subtract(finetuned.weight[l], base.weight[l]);
        DenseMatrix w = base.weight[l];
        if (frobenius_norm(delta) > 0.0) add_scaled(w, detail::truncated_delta(delta, rank), 1.0);
        out.weight.push_back(std::move(w));
        out.bias.push_back(finetuned.bias[l]);
    }
    return out;
}

// Weighted variant: per layer minimizes ||(dW - dW_hat) X||_F over rank-r
// dW_hat via dW_hat = [dW C^{1/2}]_r C^{-1/2}. All-zero stats fall back to
// the plain truncation with a warning.
inline FieldWeights weighted_svd_baseline(const FieldWeights& base, const FieldWeights& finetuned,
                                          int rank, const LayerInputStats& stats) {
    if (rank < 1) throw std::invalid_argument("weighted_svd_baseline: rank must be >= 1");
    if (base.weight.size() != finetuned.weight.size() ||
        stats.gram.size() != base.weight.size())
        throw ShapeError("weighted_svd_baseline: layer count mismatch");
    FieldWeights out;
    for (std::size_t l = 0; l < base.weight.size(); ++l) {
        if (stats.gram[l].rows() != base.weight[l].cols())
            throw ShapeError("weighted_svd_baseline: stats dimension mismatch at layer " +
                             std::to_string(l));
        DenseMatrix delta = subtract(finetuned.weight[l], base.weight[l]);
        DenseMatrix w = base.weight[l];
        if (frobenius_norm(delta) > 0.0) {
            if (frobenius_norm(stats.gram[l]) == 0.0) {
                std::cerr << "weighted_svd_baseline: all-zero input stats at layer " << l
                          << ", falling back to plain SVD\n";
                add_scaled(w, detail::truncated_delta(delta, rank), 1.0);
            } else {
                detail::GramRoots roots = detail::gram_roots(stats.gram[l]);
                DenseMatrix whitened = matmul(delta, roots.root);
                DenseMatrix approx =
                    matmul(detail::truncated_delta(whitened, rank), roots.inv_root);
                add_scaled(w, approx, 1.0);
            }
        }
        out.weight.push_back(std::move(w));
        out.bias.push_back(finetuned.bias[l]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Per-layer normalized error curves (weighted factorization)
// ---------------------------------------------------------------------------

struct ErrorCurvePoint {
    int layer = 0;
    int rank = 0;
    double normalized_error = 0.0; // ||(dW - dW_hat) X||_F / ||dW X||_F
};

inline std::vector<ErrorCurvePoint> lowrank_error_curve(const FieldWeights& base,
                                                        const FieldWeights& finetuned,
                                                        const LayerInputStats& stats,
                                                        const std::vector<int>& ranks) {
    if (ranks.empty()) throw std::invalid_argument("lowrank_error_curve: ranks empty");
    if (base.weight.size() != finetuned.weight.size() ||
        stats.gram.size() != base.weight.size())
        throw ShapeError("lowrank_error_curve: layer count mismatch");

    std::vector<ErrorCurvePoint> out;
    for (std::size_t l = 0; l < base.weight.size(); ++l) {
        DenseMatrix delta = subtract(finetuned.weight[l], base.weight[l]);
        const DenseMatrix& c = stats.gram[l];
        const double denom_sq = detail::weighted_sq_norm(delta, c);
        detail::GramRoots roots = detail::gram_roots(c);
        DenseMatrix whitened = matmul(delta, roots.root);
        SvdResult factor = svd(whitened);
        for (int r : ranks) {
            ErrorCurvePoint pt;
            pt.layer = static_cast<int>(l);
            pt.rank = r;
            if (denom_sq <= 0.0) {
                pt.normalized_error = 0.0; // dW X = 0 defines the error as 0
            } else {
                const std::size_t cap = std::min<std::size_t>(
                    static_cast<std::size_t>(std::max(r, 1)), factor.sigma.size());
                DenseMatrix approx = matmul(truncate_svd(factor, cap), roots.inv_root);
                DenseMatrix residual = subtract(delta, approx);
                pt.normalized_error =
                    std::sqrt(std::max(detail::weighted_sq_norm(residual, c), 0.0) / denom_sq);
            }
            out.push_back(pt);
        }
    }
    return out;
}

inline std::string error_curve_csv(const std::vector<ErrorCurvePoint>& points) {
    std::ostringstream out;
    out << "layer,rank,normalized_error\n";
    for (const auto& p : points)
        out << p.layer << ',' << p.rank << ',' << p.normalized_error << '\n';
    return out.str();
}

// ---------------------------------------------------------------------------
// Fixed-parameter small-MLP baseline
// ---------------------------------------------------------------------------

// Same depth/encoding as the reference; the hidden width is the one whose
// parameter count is closest to the target, ties toward the smaller width.
inline FieldArchitecture small_mlp_arch(const FieldArchitecture& reference,
                                        long long target_param_count) {
    if (target_param_count < 1)
        throw std::invalid_argument("small_mlp_arch: target must be >= 1");
    FieldArchitecture best = reference;
    long long best_diff = -1;
    const int max_width = std::max(reference.hidden_width * 2, 8);
    for (int w = 1; w <= max_width; ++w) {
        FieldArchitecture cand = reference;
        cand.hidden_width = w;
        const long long diff = std::llabs(count_params(cand) - target_param_count);
        if (best_diff < 0 || diff < best_diff) {
            best_diff = diff;
            best = cand;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Chambolle projection for ROF TV denoising
// ---------------------------------------------------------------------------

// Sum over channels and pixels of the forward-difference gradient norm.
inline double discrete_tv(const RasterImage& img) {
    double acc = 0.0;
    for (int c = 0; c < img.channels; ++c)
        for (int i = 0; i < img.height; ++i)
            for (int j = 0; j < img.width; ++j) {
                const double dx = j + 1 < img.width ? img.at(i, j + 1, c) - img.at(i, j, c) : 0.0;
                const double dy = i + 1 < img.height ? img.at(i + 1, j, c) - img.at(i, j, c) : 0.0;
                acc += std::sqrt(dx * dx + dy * dy);
            }
    return acc;
}

// Dual projection iteration for the ROF model, channelwise:
//   p <- (p + tau * grad(div p - img / lambda)) / (1 + tau * |grad(...)|)
// with forward differences for grad, backward for div, Neumann boundaries.
// Output is img - lambda * div p.
inline RasterImage chambolle_denoise(const RasterImage& img, double lambda_tv,
                                     int iterations = 200, double tau = 0.125) {
    if (iterations < 1) throw std::invalid_argument("chambolle_denoise: iterations must be >= 1");
    if (!(tau > 0.0) || tau > 0.25)
        throw std::invalid_argument("chambolle_denoise: tau outside (0, 0.25]");
    if (!(lambda_tv > 0.0)) throw std::invalid_argument("chambolle_denoise: lambda must be > 0");

    const int w = img.width, h = img.height;
    RasterImage out = img;
    std::vector<double> p1(static_cast<std::size_t>(w) * h);
    std::vector<double> p2(static_cast<std::size_t>(w) * h);
    std::vector<double> u(static_cast<std::size_t>(w) * h);
    auto idx = [w](int i, int j) { return static_cast<std::size_t>(i) * w + j; };

    for (int c = 0; c < img.channels; ++c) {
        std::fill(p1.begin(), p1.end(), 0.0);
        std::fill(p2.begin(), p2.end(), 0.0);
        for (int it = 0; it < iterations; ++it) {
            // u = div p - img / lambda (backward differences; p is zero
            // outside, so the edge terms drop out naturally).
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) {
                    const double div_p = p1[idx(i, j)] - (j > 0 ? p1[idx(i, j - 1)] : 0.0) +
                                         p2[idx(i, j)] - (i > 0 ? p2[idx(i - 1, j)] : 0.0);
                    u[idx(i, j)] = div_p - img.at(i, j, c) / lambda_tv;
                }
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) {
                    const double gx = j + 1 < w ? u[idx(i, j + 1)] - u[idx(i, j)] : 0.0;
                    const double gy = i + 1 < h ? u[idx(i + 1, j)] - u[idx(i, j)] : 0.0;
                    const double mag = std::sqrt(gx * gx + gy * gy);
                    const double denom = 1.0 + tau * mag;
                    p1[idx(i, j)] = (p1[idx(i, j)] + tau * gx) / denom;
                    p2[idx(i, j)] = (p2[idx(i, j)] + tau * gy) / denom;
                }
        }
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                const double div_p = p1[idx(i, j)] - (j > 0 ? p1[idx(i, j - 1)] : 0.0) +
                                     p2[idx(i, j)] - (i > 0 ? p2[idx(i - 1, j)] : 0.0);
                out.at(i, j, c) = std::clamp(img.at(i, j, c) - lambda_tv * div_p, 0.0, 1.0);
            }
    }
    return out;
}

} // namespace lorafield
