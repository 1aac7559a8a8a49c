#pragma once

// Coordinate-MLP neural field: frequency encoding, batched forward
// evaluation, exact reverse-mode gradients, low-rank adapter attachment and
// parameter initialization. Forward/backward are pure given immutable
// weights; batches may be partitioned across threads.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lorafield/errors.hpp"
#include "lorafield/linalg.hpp"

namespace lorafield {

enum class Activation : std::uint32_t { relu = 0 };

struct FieldArchitecture {
    int input_dim = 0;       // m
    int encoding_levels = 0; // L; 0 means coordinates pass through unencoded
    int hidden_width = 0;
    int hidden_layers = 0;   // width x width linear maps between input and output layers
    int output_dim = 0;      // n
    Activation activation = Activation::relu;

    int encoded_dim() const {
        return encoding_levels == 0 ? input_dim : 2 * input_dim * encoding_levels;
    }
    int layer_count() const { return hidden_layers + 2; }
    int layer_in(int i) const { return i == 0 ? encoded_dim() : hidden_width; }
    int layer_out(int i) const { return i == layer_count() - 1 ? output_dim : hidden_width; }

    void validate() const {
        if (input_dim < 1 || output_dim < 1 || hidden_width < 1 || hidden_layers < 0 ||
            encoding_levels < 0)
            throw std::invalid_argument("FieldArchitecture: invalid dimensions");
    }

    static FieldArchitecture sdf_preset() { return {3, 6, 256, 4, 1, Activation::relu}; }
    static FieldArchitecture image_preset() { return {2, 10, 256, 5, 3, Activation::relu}; }
    static FieldArchitecture video_preset() { return {2, 10, 256, 6, 3, Activation::relu}; }

    friend bool operator==(const FieldArchitecture&, const FieldArchitecture&) = default;
};

struct FieldWeights {
    std::vector<DenseMatrix> weight;       // weight[i] is d_out x d_in
    std::vector<std::vector<double>> bias; // bias[i] has d_out entries
};

// Per-layer low-rank factors. down[i] is r_eff x d_in, up[i] is d_out x r_eff;
// the applied update is (1 / r_eff) * up[i] * down[i]. Biases are never adapted.
struct AdapterSet {
    std::vector<DenseMatrix> down;
    std::vector<DenseMatrix> up;
    int nominal_rank = 0;

    int layer_count() const { return static_cast<int>(down.size()); }
    int effective_rank(int i) const { return static_cast<int>(down[i].rows()); }
    double scale(int i) const { return 1.0 / static_cast<double>(effective_rank(i)); }
};

inline int effective_rank_for(int nominal, int d_in, int d_out) {
    return std::min(nominal, std::min(d_in, d_out));
}

enum class Trainable { full, adapters_only };

// Carrier for backprop results; shape-congruent with whichever parameter set
// was trainable.
struct GradientSet {
    std::vector<DenseMatrix> weight;
    std::vector<std::vector<double>> bias;
    std::vector<DenseMatrix> down;
    std::vector<DenseMatrix> up;
};

inline void validate_weights(const FieldArchitecture& arch, const FieldWeights& w) {
    arch.validate();
    const int layers = arch.layer_count();
    if (static_cast<int>(w.weight.size()) != layers || static_cast<int>(w.bias.size()) != layers)
        throw ShapeError("weights: expected " + std::to_string(layers) + " layers");
    for (int i = 0; i < layers; ++i) {
        if (w.weight[i].rows() != static_cast<std::size_t>(arch.layer_out(i)) ||
            w.weight[i].cols() != static_cast<std::size_t>(arch.layer_in(i)) ||
            w.bias[i].size() != static_cast<std::size_t>(arch.layer_out(i)))
            throw ShapeError("weights: layer " + std::to_string(i) + " shape mismatch");
    }
}

inline void validate_adapters(const FieldArchitecture& arch, const AdapterSet& a) {
    const int layers = arch.layer_count();
    if (a.layer_count() != layers || static_cast<int>(a.up.size()) != layers)
        throw ShapeError("adapters: expected " + std::to_string(layers) + " layers");
    for (int i = 0; i < layers; ++i) {
        const auto r = a.down[i].rows();
        if (r == 0 || a.down[i].cols() != static_cast<std::size_t>(arch.layer_in(i)) ||
            a.up[i].rows() != static_cast<std::size_t>(arch.layer_out(i)) || a.up[i].cols() != r)
            throw ShapeError("adapters: layer " + std::to_string(i) + " shape mismatch");
    }
}

// ---------------------------------------------------------------------------
// Frequency encoding
// ---------------------------------------------------------------------------

// gamma(x): for level k = 0..L-1, coordinate j = 0..m-1, emit
// sin(2^k x_j) then cos(2^k x_j). Level-major, coordinate-minor, sin first;
// index of the sin entry is 2 * (k * m + j).
inline std::vector<double> frequency_encode(std::span<const double> x, int levels) {
    if (levels == 0) return std::vector<double>(x.begin(), x.end());
    const std::size_t m = x.size();
    std::vector<double> out(2 * m * levels);
    std::size_t pos = 0;
    double freq = 1.0;
    for (int k = 0; k < levels; ++k) {
        for (std::size_t j = 0; j < m; ++j) {
            const double v = freq * x[j];
            out[pos++] = std::sin(v);
            out[pos++] = std::cos(v);
        }
        freq *= 2.0;
    }
    return out;
}

inline DenseMatrix encode_batch(const DenseMatrix& coords, int levels) {
    if (levels == 0) return coords;
    const std::size_t n = coords.rows(), m = coords.cols();
    DenseMatrix out(n, 2 * m * levels);
    parallel_for(n, 256, [&](std::size_t r0, std::size_t r1) {
        for (std::size_t i = r0; i < r1; ++i) {
            const double* x = coords.row(i);
            double* o = out.row(i);
            std::size_t pos = 0;
            double freq = 1.0;
            for (int k = 0; k < levels; ++k) {
                for (std::size_t j = 0; j < m; ++j) {
                    const double v = freq * x[j];
                    o[pos++] = std::sin(v);
                    o[pos++] = std::cos(v);
                }
                freq *= 2.0;
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

// Activation cache for one batch; required by backward_batch.
struct ForwardTrace {
    std::vector<DenseMatrix> layer_in; // input to each linear layer (layer_in[0] is encoded)
    std::vector<DenseMatrix> down_out; // per-layer x * down^T when adapters attached
    DenseMatrix output;
    std::size_t batch_size = 0;
    std::size_t out_of_domain = 0; // samples with any coordinate outside [-1, 1]
};

namespace detail {

inline void add_bias_rows(DenseMatrix& z, const std::vector<double>& bias) {
    for (std::size_t i = 0; i < z.rows(); ++i) {
        double* zi = z.row(i);
        for (std::size_t j = 0; j < z.cols(); ++j) zi[j] += bias[j];
    }
}

inline DenseMatrix relu(const DenseMatrix& z) {
    DenseMatrix out = z;
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    return out;
}

} // namespace detail

// Evaluates the field on a batch of coordinates (one sample per row).
// Coordinates outside [-1, 1]^m are evaluated but counted in the trace.
// When adapters are attached each layer computes
//   z = w x + b + (1 / r_eff) * up (down x),
// the unmerged two-step product.
inline DenseMatrix forward_batch(const FieldArchitecture& arch, const FieldWeights& weights,
                                 const AdapterSet* adapters, const DenseMatrix& coords,
                                 ForwardTrace* trace = nullptr) {
    validate_weights(arch, weights);
    if (adapters) validate_adapters(arch, *adapters);
    if (coords.cols() != static_cast<std::size_t>(arch.input_dim))
        throw ShapeError("forward: coordinate dimension mismatch");

    if (trace) {
        *trace = ForwardTrace{};
        trace->batch_size = coords.rows();
        for (std::size_t i = 0; i < coords.rows(); ++i)
            for (std::size_t j = 0; j < coords.cols(); ++j)
                if (std::abs(coords(i, j)) > 1.0) {
                    ++trace->out_of_domain;
                    break;
                }
    }

    DenseMatrix x = encode_batch(coords, arch.encoding_levels);
    const int layers = arch.layer_count();
    DenseMatrix z;
    for (int i = 0; i < layers; ++i) {
        if (trace) trace->layer_in.push_back(x);
        z = matmul_nt(x, weights.weight[i]);
        detail::add_bias_rows(z, weights.bias[i]);
        if (adapters) {
            DenseMatrix d = matmul_nt(x, adapters->down[i]);
            add_scaled(z, matmul_nt(d, adapters->up[i]), adapters->scale(i));
            if (trace) trace->down_out.push_back(std::move(d));
        }
        if (i + 1 < layers) x = detail::relu(z);
    }
    if (trace) trace->output = z;
    return z;
}

inline std::vector<double> forward_point(const FieldArchitecture& arch,
                                         const FieldWeights& weights, const AdapterSet* adapters,
                                         std::span<const double> x) {
    DenseMatrix coords(1, x.size());
    for (std::size_t j = 0; j < x.size(); ++j) coords(0, j) = x[j];
    DenseMatrix out = forward_batch(arch, weights, adapters, coords);
    return std::vector<double>(out.data().begin(), out.data().end());
}

// Exact reverse-mode gradients for the batch whose activations are cached in
// `trace`. `output_grad` is dLoss/dOutput, one row per sample. In
// adapters_only mode gradients flow through the frozen weights but only the
// adapter factor gradients are returned.
inline GradientSet backward_batch(const FieldArchitecture& arch, const FieldWeights& weights,
                                  const AdapterSet* adapters, const ForwardTrace& trace,
                                  const DenseMatrix& output_grad, Trainable mode) {
    validate_weights(arch, weights);
    if (adapters) validate_adapters(arch, *adapters);
    if (mode == Trainable::adapters_only && !adapters)
        throw std::invalid_argument("backward: adapters_only without adapters");
    const int layers = arch.layer_count();
    if (static_cast<int>(trace.layer_in.size()) != layers ||
        (adapters && static_cast<int>(trace.down_out.size()) != layers))
        throw StateError("backward: forward activation cache missing or incomplete");
    if (output_grad.rows() != trace.batch_size ||
        output_grad.cols() != static_cast<std::size_t>(arch.output_dim))
        throw ShapeError("backward: output gradient shape mismatch");
    for (int i = 0; i < layers; ++i)
        if (trace.layer_in[i].rows() != trace.batch_size)
            throw StateError("backward: activation cache batch size mismatch");

    GradientSet grads;
    if (mode == Trainable::full) {
        grads.weight.resize(layers);
        grads.bias.resize(layers);
    } else {
        grads.down.resize(layers);
        grads.up.resize(layers);
    }

    DenseMatrix dz = output_grad;
    for (int i = layers - 1; i >= 0; --i) {
        const DenseMatrix& x = trace.layer_in[i];
        DenseMatrix dz_up; // dz * up, reused by both adapter grads and dx
        if (adapters) dz_up = matmul(dz, adapters->up[i]);

        if (mode == Trainable::full) {
            grads.weight[i] = matmul_tn(dz, x);
            std::vector<double> db(dz.cols(), 0.0);
            for (std::size_t r = 0; r < dz.rows(); ++r) {
                const double* row = dz.row(r);
                for (std::size_t c = 0; c < dz.cols(); ++c) db[c] += row[c];
            }
            grads.bias[i] = std::move(db);
        } else {
            const double s = adapters->scale(i);
            grads.up[i] = scaled(matmul_tn(dz, trace.down_out[i]), s);
            grads.down[i] = scaled(matmul_tn(dz_up, x), s);
        }

        if (i > 0) {
            DenseMatrix dx = matmul(dz, weights.weight[i]);
            if (adapters) add_scaled(dx, matmul(dz_up, adapters->down[i]), adapters->scale(i));
            // ReLU mask: the cached layer input is the post-activation value.
            for (std::size_t r = 0; r < dx.rows(); ++r) {
                double* dxr = dx.row(r);
                const double* xr = x.row(r);
                for (std::size_t c = 0; c < dx.cols(); ++c)
                    if (!(xr[c] > 0.0)) dxr[c] = 0.0;
            }
            dz = std::move(dx);
        }
    }
    return grads;
}

// ---------------------------------------------------------------------------
// Initialization, merging, parameter accounting
// ---------------------------------------------------------------------------

// Kaiming-style init: weights ~ N(0, 2 / d_in), biases zero. Fill order is
// layer-ascending, row-major, so results are reproducible from the seed.
inline FieldWeights init_base(const FieldArchitecture& arch, SeededRng& rng) {
    arch.validate();
    FieldWeights w;
    const int layers = arch.layer_count();
    for (int i = 0; i < layers; ++i) {
        const int d_in = arch.layer_in(i), d_out = arch.layer_out(i);
        DenseMatrix wi(d_out, d_in);
        const double variance = 2.0 / static_cast<double>(d_in);
        for (double& v : wi.data()) v = rng.normal(0.0, variance);
        w.weight.push_back(std::move(wi));
        w.bias.emplace_back(d_out, 0.0);
    }
    return w;
}

// down ~ N(0, 1 / d_in), up = 0, so fresh adapters are a no-op. Effective
// rank is min(r, d_in, d_out) per layer.
inline AdapterSet init_adapters(const FieldArchitecture& arch, int rank, SeededRng& rng) {
    arch.validate();
    if (rank < 1) throw std::invalid_argument("init_adapters: rank must be >= 1");
    AdapterSet a;
    a.nominal_rank = rank;
    const int layers = arch.layer_count();
    for (int i = 0; i < layers; ++i) {
        const int d_in = arch.layer_in(i), d_out = arch.layer_out(i);
        const int r_eff = effective_rank_for(rank, d_in, d_out);
        DenseMatrix down(r_eff, d_in);
        const double variance = 1.0 / static_cast<double>(d_in);
        for (double& v : down.data()) v = rng.normal(0.0, variance);
        a.down.push_back(std::move(down));
        a.up.emplace_back(d_out, r_eff);
    }
    return a;
}

// Folds each layer's scaled low-rank update into the weights:
// w <- w + (1 / r_eff) * up * down. Biases are untouched.
inline FieldWeights merge_adapters(const FieldWeights& weights, const AdapterSet& adapters) {
    if (weights.weight.size() != adapters.down.size())
        throw ShapeError("merge_adapters: layer count mismatch");
    FieldWeights merged = weights;
    for (std::size_t i = 0; i < merged.weight.size(); ++i) {
        if (adapters.up[i].rows() != merged.weight[i].rows() ||
            adapters.down[i].cols() != merged.weight[i].cols())
            throw ShapeError("merge_adapters: layer " + std::to_string(i) + " shape mismatch");
        add_scaled(merged.weight[i], matmul(adapters.up[i], adapters.down[i]),
                   adapters.scale(static_cast<int>(i)));
    }
    return merged;
}

// Full-network trainable count, biases included.
inline long long count_params(const FieldArchitecture& arch) {
    arch.validate();
    long long total = 0;
    for (int i = 0; i < arch.layer_count(); ++i)
        total += static_cast<long long>(arch.layer_out(i)) * arch.layer_in(i) + arch.layer_out(i);
    return total;
}

// Adapter count: sum of r_eff * (d_in + d_out); biases are never adapted.
inline long long count_params(const AdapterSet& adapters) {
    long long total = 0;
    for (std::size_t i = 0; i < adapters.down.size(); ++i)
        total += static_cast<long long>(adapters.down[i].rows()) *
                 (static_cast<long long>(adapters.down[i].cols()) + adapters.up[i].rows());
    return total;
}

inline long long count_adapter_params(const FieldArchitecture& arch, int rank) {
    arch.validate();
    long long total = 0;
    for (int i = 0; i < arch.layer_count(); ++i) {
        const int d_in = arch.layer_in(i), d_out = arch.layer_out(i);
        total += static_cast<long long>(effective_rank_for(rank, d_in, d_out)) * (d_in + d_out);
    }
    return total;
}

} // namespace lorafield
