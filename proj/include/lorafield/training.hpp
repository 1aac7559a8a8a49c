#pragma once

// Adam optimization loops: base fitting, full fine-tuning, LoRA adaptation
// (including the TV-energy variant) and the sequential/parallel per-frame
// pipeline. Runs are bitwise deterministic given (seed, config, data).

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lorafield/errors.hpp"
#include "lorafield/field.hpp"
#include "lorafield/metrics.hpp"
#include "lorafield/objectives.hpp"
#include "lorafield/samplers.hpp"
#include "lorafield/serialize.hpp"

namespace lorafield {

struct TrainConfig {
    double learning_rate = 1e-4;
    int max_steps = 30000;
    int batch_size = 4096;
    // Stop when the best deterministic eval loss has not improved by
    // improvement_threshold (relative) over improvement_window steps.
    int improvement_window = 2000;
    double improvement_threshold = 1e-4;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int eval_every = 500;
    double sdf_surface_fraction = 0.5;
    int sdf_eval_samples = 8192;
    std::string log_csv; // when set, appends step,loss,fidelity,energy,elapsed rows

    static TrainConfig base_defaults() { return {}; }
    static TrainConfig lora_defaults() {
        TrainConfig c;
        c.learning_rate = 5e-3;
        return c;
    }

    void validate() const {
        if (learning_rate <= 0.0 || max_steps < 1 || batch_size < 1 || improvement_window < 1 ||
            eval_every < 1)
            throw std::invalid_argument("TrainConfig: invalid settings");
    }
};

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
    std::vector<std::vector<double>> m, v;
    long long t = 0;
};

using ParamViews = std::vector<std::span<double>>;
using GradViews = std::vector<std::span<const double>>;

inline ParamViews param_views(FieldWeights& w) {
    ParamViews out;
    for (auto& m : w.weight) out.push_back(m.data());
    for (auto& b : w.bias) out.push_back(std::span<double>(b));
    return out;
}

inline ParamViews param_views(AdapterSet& a) {
    ParamViews out;
    for (auto& m : a.down) out.push_back(m.data());
    for (auto& m : a.up) out.push_back(m.data());
    return out;
}

inline GradViews grad_views(const GradientSet& g, Trainable mode) {
    GradViews out;
    if (mode == Trainable::full) {
        for (const auto& m : g.weight) out.push_back(m.data());
        for (const auto& b : g.bias) out.push_back(std::span<const double>(b));
    } else {
        for (const auto& m : g.down) out.push_back(m.data());
        for (const auto& m : g.up) out.push_back(m.data());
    }
    return out;
}

// Standard bias-corrected Adam update. Moment buffers are allocated on first
// use and must stay shape-congruent afterwards.
inline void adam_step(const ParamViews& params, const GradViews& grads, AdamState& state,
                      double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    if (params.size() != grads.size()) throw ShapeError("adam_step: buffer count mismatch");
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.size(), 0.0);
            state.v.emplace_back(p.size(), 0.0);
        }
    }
    if (state.m.size() != params.size()) throw ShapeError("adam_step: state incongruent");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t b = 0; b < params.size(); ++b) {
        std::span<double> p = params[b];
        std::span<const double> g = grads[b];
        if (p.size() != g.size() || state.m[b].size() != p.size())
            throw ShapeError("adam_step: buffer shape mismatch");
        double* m = state.m[b].data();
        double* v = state.v[b].data();
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Core loop
// ---------------------------------------------------------------------------

struct TrainStats {
    int steps = 0;
    double best_eval_loss = std::numeric_limits<double>::infinity();
    double final_train_loss = 0.0;
    bool hit_step_budget = false;
    double seconds = 0.0;
};

namespace detail {

// Optimizes `weights` (full mode) or `adapters` (adapters_only) against the
// objective. Keeps the parameters from the best deterministic eval, not the
// last step. Throws TrainingError when the loss turns non-finite.
inline TrainStats run_training(const FieldArchitecture& arch, FieldWeights& weights,
                               AdapterSet* adapters, Trainable mode,
                               const ObjectiveSpec& objective,
                               const std::function<SampleBatch(SeededRng&)>& next_batch,
                               const SampleBatch& eval_batch, const TrainConfig& cfg) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    SeededRng rng(cfg.seed);

    std::ofstream log;
    if (!cfg.log_csv.empty()) {
        const bool fresh = !std::ifstream(cfg.log_csv).good();
        log.open(cfg.log_csv, std::ios::app);
        if (fresh && log) log << "step,loss,fidelity,energy,elapsed\n";
    }

    ParamViews params = mode == Trainable::full ? param_views(weights) : param_views(*adapters);
    AdamState adam;

    FieldWeights best_weights = weights;
    AdapterSet best_adapters = adapters ? *adapters : AdapterSet{};

    TrainStats stats;
    double last_finite_loss = std::numeric_limits<double>::quiet_NaN();
    int last_improve_step = 0;

    auto run_eval = [&](int step) {
        LossBreakdown eval = composite_loss(objective, arch, weights, adapters, eval_batch.coords,
                                            eval_batch.targets);
        if (eval.total < stats.best_eval_loss * (1.0 - cfg.improvement_threshold))
            last_improve_step = step;
        if (eval.total < stats.best_eval_loss) {
            stats.best_eval_loss = eval.total;
            if (mode == Trainable::full)
                best_weights = weights;
            else
                best_adapters = *adapters;
        }
    };
    run_eval(0);

    for (int step = 1; step <= cfg.max_steps; ++step) {
        SampleBatch batch = next_batch(rng);
        CompositeResult res = composite_objective(objective, arch, weights, adapters, mode,
                                                  batch.coords, batch.targets);
        if (!std::isfinite(res.total))
            throw TrainingError("training diverged at step " + std::to_string(step) +
                                "; last finite loss " + std::to_string(last_finite_loss));
        last_finite_loss = res.total;
        adam_step(params, grad_views(res.grads, mode), adam, cfg.learning_rate, cfg.beta1,
                  cfg.beta2, cfg.epsilon);
        stats.steps = step;

        if (log.is_open()) {
            const double elapsed =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            log << step << ',' << res.total << ',' << res.fidelity << ',' << res.energy << ','
                << elapsed << '\n';
        }
        if (step % cfg.eval_every == 0 || step == cfg.max_steps) run_eval(step);
        if (step - last_improve_step >= cfg.improvement_window) break;
    }
    run_eval(stats.steps);

    stats.hit_step_budget = stats.steps >= cfg.max_steps;
    stats.final_train_loss = last_finite_loss;
    if (mode == Trainable::full)
        weights = std::move(best_weights);
    else
        *adapters = std::move(best_adapters);
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return stats;
}

// Random pixel batches, or the full grid when the batch covers every pixel.
inline std::function<SampleBatch(SeededRng&)> image_batcher(const RasterImage& img,
                                                            int batch_size) {
    const std::size_t pixels = static_cast<std::size_t>(img.width) * img.height;
    if (static_cast<std::size_t>(batch_size) >= pixels) {
        SampleBatch grid = image_grid_batch(img);
        return [grid](SeededRng&) { return grid; };
    }
    return [&img, batch_size](SeededRng& rng) { return sample_image_batch(img, batch_size, rng); };
}

} // namespace detail

// ---------------------------------------------------------------------------
// Pipelines
// ---------------------------------------------------------------------------

inline BaseCheckpoint train_base(const FieldArchitecture& arch, const RasterImage& target,
                                 const TrainConfig& cfg, TrainStats* stats_out = nullptr) {
    if (arch.input_dim != 2 || arch.output_dim != target.channels)
        throw ShapeError("train_base: architecture does not match the image modality");
    SeededRng init_rng(cfg.seed);
    FieldWeights weights = init_base(arch, init_rng);
    TrainStats stats = detail::run_training(arch, weights, nullptr, Trainable::full,
                                            ObjectiveSpec::image(),
                                            detail::image_batcher(target, cfg.batch_size),
                                            image_grid_batch(target), cfg);
    if (stats_out) *stats_out = stats;
    return make_checkpoint(arch, std::move(weights));
}

inline BaseCheckpoint train_base(const FieldArchitecture& arch, const SdfSource& target,
                                 const TrainConfig& cfg, TrainStats* stats_out = nullptr) {
    if (arch.input_dim != 3 || arch.output_dim != 1)
        throw ShapeError("train_base: architecture does not match the SDF modality");
    SeededRng init_rng(cfg.seed);
    FieldWeights weights = init_base(arch, init_rng);
    SeededRng eval_rng(cfg.seed ^ 0xE7A1BA7C5ull);
    SampleBatch eval =
        sample_sdf_batch(target, cfg.sdf_eval_samples, eval_rng, cfg.sdf_surface_fraction);
    auto batcher = [&target, &cfg](SeededRng& rng) {
        return sample_sdf_batch(target, cfg.batch_size, rng, cfg.sdf_surface_fraction);
    };
    TrainStats stats = detail::run_training(arch, weights, nullptr, Trainable::full,
                                            ObjectiveSpec::sdf(), batcher, eval, cfg);
    if (stats_out) *stats_out = stats;
    return make_checkpoint(arch, std::move(weights));
}

namespace detail {

// Adapter training against arbitrary frozen weights; the sequential pipeline
// uses this with its running merged weights.
inline AdapterSet train_lora_weights(const FieldArchitecture& arch, const FieldWeights& frozen_in,
                                     const RasterImage& target, int rank, const TrainConfig& cfg,
                                     const ObjectiveSpec& objective, TrainStats* stats_out) {
    if (rank < 1) throw std::invalid_argument("train_lora: rank must be >= 1");
    if (arch.input_dim != 2 || arch.output_dim != target.channels)
        throw ShapeError("train_lora: architecture does not match the image modality");
    SeededRng init_rng(cfg.seed ^ 0x10AAull);
    AdapterSet adapters = init_adapters(arch, rank, init_rng);
    FieldWeights frozen = frozen_in;
    TrainStats stats = run_training(arch, frozen, &adapters, Trainable::adapters_only, objective,
                                    image_batcher(target, cfg.batch_size),
                                    image_grid_batch(target), cfg);
    if (stats_out) *stats_out = stats;
    return quantize_adapters(std::move(adapters));
}

inline AdapterSet train_lora_weights(const FieldArchitecture& arch, const FieldWeights& frozen_in,
                                     const SdfSource& target, int rank, const TrainConfig& cfg,
                                     TrainStats* stats_out) {
    if (rank < 1) throw std::invalid_argument("train_lora: rank must be >= 1");
    if (arch.input_dim != 3 || arch.output_dim != 1)
        throw ShapeError("train_lora: architecture does not match the SDF modality");
    SeededRng init_rng(cfg.seed ^ 0x10AAull);
    AdapterSet adapters = init_adapters(arch, rank, init_rng);
    FieldWeights frozen = frozen_in;
    SeededRng eval_rng(cfg.seed ^ 0xE7A1BA7C5ull);
    SampleBatch eval =
        sample_sdf_batch(target, cfg.sdf_eval_samples, eval_rng, cfg.sdf_surface_fraction);
    auto batcher = [&target, &cfg](SeededRng& rng) {
        return sample_sdf_batch(target, cfg.batch_size, rng, cfg.sdf_surface_fraction);
    };
    TrainStats stats = run_training(arch, frozen, &adapters, Trainable::adapters_only,
                                    ObjectiveSpec::sdf(), batcher, eval, cfg);
    if (stats_out) *stats_out = stats;
    return quantize_adapters(std::move(adapters));
}

} // namespace detail

// LoRA adaptation: the base weights are frozen throughout, only the adapter
// factors move. The returned factors are quantized to on-disk precision.
inline AdapterSet train_lora(const BaseCheckpoint& base, const RasterImage& target, int rank,
                             const TrainConfig& cfg,
                             const ObjectiveSpec& objective = ObjectiveSpec::image(),
                             TrainStats* stats_out = nullptr) {
    return detail::train_lora_weights(base.arch, base.weights, target, rank, cfg, objective,
                                      stats_out);
}

inline AdapterSet train_lora(const BaseCheckpoint& base, const SdfSource& target, int rank,
                             const TrainConfig& cfg, TrainStats* stats_out = nullptr) {
    return detail::train_lora_weights(base.arch, base.weights, target, rank, cfg, stats_out);
}

// TV-energy LoRA: the fidelity target is the base field's own output on a
// grid_w x grid_h pixel-center grid (the noisy signal the base encodes), and
// lambda weights the smoothed TV energy.
inline AdapterSet train_lora_tv(const BaseCheckpoint& base, double lambda, double fd_step,
                                int rank, const TrainConfig& cfg, int grid_w, int grid_h,
                                TrainStats* stats_out = nullptr) {
    if (rank < 1) throw std::invalid_argument("train_lora_tv: rank must be >= 1");
    if (base.arch.input_dim != 2)
        throw ShapeError("train_lora_tv: base architecture is not an image field");
    const ObjectiveSpec spec = ObjectiveSpec::tv(lambda, fd_step);
    spec.validate();

    RasterImage grid_shape(grid_w, grid_h, base.arch.output_dim);
    SampleBatch full;
    full.coords = image_grid_batch(grid_shape).coords;
    full.targets = forward_batch(base.arch, base.weights, nullptr, full.coords);

    SeededRng init_rng(cfg.seed ^ 0x10AAull);
    AdapterSet adapters = init_adapters(base.arch, rank, init_rng);
    FieldWeights frozen = base.weights;

    const std::size_t total = full.coords.rows();
    auto batcher = [&full, &cfg, total](SeededRng& rng) {
        if (static_cast<std::size_t>(cfg.batch_size) >= total) return full;
        SampleBatch b;
        b.coords = DenseMatrix(cfg.batch_size, full.coords.cols());
        b.targets = DenseMatrix(cfg.batch_size, full.targets.cols());
        for (int s = 0; s < cfg.batch_size; ++s) {
            const std::size_t pick = rng.next_below(total);
            for (std::size_t j = 0; j < full.coords.cols(); ++j)
                b.coords(s, j) = full.coords(pick, j);
            for (std::size_t j = 0; j < full.targets.cols(); ++j)
                b.targets(s, j) = full.targets(pick, j);
        }
        return b;
    };
    TrainStats stats = detail::run_training(base.arch, frozen, &adapters,
                                            Trainable::adapters_only, spec, batcher, full, cfg);
    if (stats_out) *stats_out = stats;
    return quantize_adapters(std::move(adapters));
}

inline FieldWeights full_finetune(const BaseCheckpoint& base, const RasterImage& target,
                                  const TrainConfig& cfg, TrainStats* stats_out = nullptr) {
    if (base.arch.input_dim != 2 || base.arch.output_dim != target.channels)
        throw ShapeError("full_finetune: base architecture does not match the image modality");
    FieldWeights weights = base.weights;
    TrainStats stats = detail::run_training(base.arch, weights, nullptr, Trainable::full,
                                            ObjectiveSpec::image(),
                                            detail::image_batcher(target, cfg.batch_size),
                                            image_grid_batch(target), cfg);
    if (stats_out) *stats_out = stats;
    return quantize_weights(std::move(weights));
}

inline FieldWeights full_finetune(const BaseCheckpoint& base, const SdfSource& target,
                                  const TrainConfig& cfg, TrainStats* stats_out = nullptr) {
    if (base.arch.input_dim != 3 || base.arch.output_dim != 1)
        throw ShapeError("full_finetune: base architecture does not match the SDF modality");
    FieldWeights weights = base.weights;
    SeededRng eval_rng(cfg.seed ^ 0xE7A1BA7C5ull);
    SampleBatch eval =
        sample_sdf_batch(target, cfg.sdf_eval_samples, eval_rng, cfg.sdf_surface_fraction);
    auto batcher = [&target, &cfg](SeededRng& rng) {
        return sample_sdf_batch(target, cfg.batch_size, rng, cfg.sdf_surface_fraction);
    };
    TrainStats stats = detail::run_training(base.arch, weights, nullptr, Trainable::full,
                                            ObjectiveSpec::sdf(), batcher, eval, cfg);
    if (stats_out) *stats_out = stats;
    return quantize_weights(std::move(weights));
}

// ---------------------------------------------------------------------------
// Sequence encoding
// ---------------------------------------------------------------------------

enum class SequenceMode { sequential, parallel };

struct FrameMetric {
    int frame = 0;        // 1-based
    double value = 0.0;   // PSNR (images) or IoU (SDF sources)
    double loss = 0.0;    // final training loss for the frame
    int steps = 0;
};

// Frame 1 is the base checkpoint; adapters[k] encodes frame k + 2. In
// sequential mode decode(k) merges adapters 2..k cumulatively; in parallel
// mode each adapter applies to the base alone.
struct SequentialEncoding {
    BaseCheckpoint base;
    std::vector<AdapterSet> adapters;
    SequenceMode mode = SequenceMode::sequential;
    std::vector<FrameMetric> metrics;
    int failed_frame = 0;      // 0 when every frame trained; 1-based otherwise
    std::string failure;

    bool ok() const { return failed_frame == 0; }
    int frame_count() const { return static_cast<int>(adapters.size()) + 1; }

    FieldWeights decode(int frame) const {
        if (frame < 1 || frame > frame_count())
            throw std::invalid_argument("decode: frame outside encoded range");
        FieldWeights w = base.weights;
        if (frame == 1) return w;
        if (mode == SequenceMode::parallel) return merge_adapters(w, adapters[frame - 2]);
        for (int k = 0; k + 2 <= frame; ++k) w = merge_adapters(w, adapters[k]);
        return w;
    }

    VideoBundle to_bundle() const {
        VideoBundle b;
        b.base = base;
        b.adapters = adapters;
        b.mode = mode == SequenceMode::sequential ? "sequential" : "parallel";
        b.frame_count = frame_count();
        return b;
    }
};

// Overfits the base to frame 1, then encodes every later frame as a rank-r
// adapter: sequential mode trains against the running merged weights
// (freezing a frame means merging its adapter), parallel mode trains every
// frame against the frame-1 base independently. A diverging frame stops the
// pipeline, recording the frame index and keeping the finished prefix. The
// config's learning rate applies to the adapters; the base frame trains
// with `base_cfg` when given, else with the config at the base default
// rate.
inline SequentialEncoding encode_sequence(const FrameSequence& seq, const FieldArchitecture& arch,
                                          int rank, const TrainConfig& cfg, SequenceMode mode,
                                          const TrainConfig* base_cfg_override = nullptr) {
    if (seq.size() < 2) throw std::invalid_argument("encode_sequence: need >= 2 frames");
    if (rank < 1) throw std::invalid_argument("encode_sequence: rank must be >= 1");
    const bool images = seq.is_image();
    const int n_frames = static_cast<int>(seq.size());

    SequentialEncoding enc;
    enc.mode = mode;

    TrainConfig base_cfg;
    if (base_cfg_override) {
        base_cfg = *base_cfg_override;
    } else {
        base_cfg = cfg;
        base_cfg.learning_rate = TrainConfig::base_defaults().learning_rate;
    }
    TrainStats base_stats;
    enc.base = images ? train_base(arch, seq.images()[0], base_cfg, &base_stats)
                      : train_base(arch, seq.sdfs()[0], base_cfg, &base_stats);

    auto frame_metric = [&](const FieldWeights& w, int frame_index,
                            const TrainStats& stats) -> FrameMetric {
        FrameMetric m;
        m.frame = frame_index;
        m.loss = stats.best_eval_loss;
        m.steps = stats.steps;
        if (images) {
            const RasterImage& ref = seq.images()[frame_index - 1];
            m.value = eval_field_image(arch, w, nullptr, ref).psnr;
        } else {
            SeededRng iou_rng(cfg.seed ^ 0x100DBEEFull);
            m.value = iou(batch_sdf_from_field(arch, w),
                          batch_sdf_from_source(seq.sdfs()[frame_index - 1]), 100000, iou_rng);
        }
        return m;
    };
    enc.metrics.push_back(frame_metric(enc.base.weights, 1, base_stats));

    // Working weights stay in double precision so decode(k) recomputes the
    // identical merge arithmetic.
    FieldWeights working = enc.base.weights;
    for (int frame = 2; frame <= n_frames; ++frame) {
        TrainConfig frame_cfg = cfg;
        frame_cfg.seed = cfg.seed + 1000003ull * static_cast<std::uint64_t>(frame);
        const FieldWeights& frozen = mode == SequenceMode::sequential ? working
                                                                      : enc.base.weights;
        TrainStats stats;
        AdapterSet adapter;
        try {
            if (images)
                adapter = detail::train_lora_weights(arch, frozen, seq.images()[frame - 1], rank,
                                                     frame_cfg, ObjectiveSpec::image(), &stats);
            else
                adapter = detail::train_lora_weights(arch, frozen, seq.sdfs()[frame - 1], rank,
                                                     frame_cfg, &stats);
        } catch (const TrainingError& e) {
            enc.failed_frame = frame;
            enc.failure = e.what();
            break;
        }
        enc.adapters.push_back(std::move(adapter));
        if (mode == SequenceMode::sequential) {
            working = merge_adapters(working, enc.adapters.back());
            enc.metrics.push_back(frame_metric(working, frame, stats));
        } else {
            enc.metrics.push_back(
                frame_metric(merge_adapters(enc.base.weights, enc.adapters.back()), frame, stats));
        }
    }
    return enc;
}

// Architecture chosen from the modality presets (video for images, sdf for
// SDF sources).
inline SequentialEncoding encode_sequence(const FrameSequence& seq, int rank,
                                          const TrainConfig& cfg, SequenceMode mode) {
    return encode_sequence(seq,
                           seq.is_image() ? FieldArchitecture::video_preset()
                                          : FieldArchitecture::sdf_preset(),
                           rank, cfg, mode);
}

} // namespace lorafield
