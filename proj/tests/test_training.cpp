#include "doctest.h"

#include <cmath>

#include "lorafield/training.hpp"

using namespace lorafield;

namespace {

const FieldArchitecture kTinyImageArch{2, 3, 16, 1, 3, Activation::relu};

RasterImage smooth_image(int size, int channels = 3) {
    RasterImage img(size, size, channels);
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j)
            for (int c = 0; c < channels; ++c)
                img.at(i, j, c) =
                    0.5 + 0.4 * std::sin(2.0 * (j + 1.0) / size + c) * std::cos(2.5 * i / size);
    for (double& p : img.pixels) p = std::clamp(p, 0.0, 1.0);
    return img;
}

TrainConfig quick_config(double lr, int steps, int batch, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.learning_rate = lr;
    cfg.max_steps = steps;
    cfg.batch_size = batch;
    cfg.eval_every = 100;
    cfg.improvement_window = steps; // no early stop in short tests
    cfg.seed = seed;
    return cfg;
}

} // namespace

TEST_CASE("adam closed-form first step and zero-gradient behavior") {
    std::vector<double> p = {1.0};
    std::vector<double> g = {1.0};
    AdamState state;
    ParamViews params = {std::span<double>(p)};
    GradViews grads = {std::span<const double>(g)};
    const double lr = 1e-3;
    adam_step(params, grads, state, lr);
    CHECK(p[0] == doctest::Approx(1.0 - lr * 1.0 / (1.0 + 1e-8)).epsilon(1e-12));
    CHECK(state.t == 1);

    // Zero gradient from a fresh state: parameters unchanged.
    std::vector<double> q = {0.5};
    std::vector<double> zero = {0.0};
    AdamState fresh;
    ParamViews qp = {std::span<double>(q)};
    GradViews zg = {std::span<const double>(zero)};
    adam_step(qp, zg, fresh, lr);
    CHECK(q[0] == 0.5);
    CHECK(fresh.m[0][0] == 0.0);

    // Zero gradient after momentum built up: moments decay by beta.
    const double m_before = state.m[0][0];
    const double v_before = state.v[0][0];
    adam_step(params, zg, state, lr);
    CHECK(state.m[0][0] == doctest::Approx(0.9 * m_before));
    CHECK(state.v[0][0] == doctest::Approx(0.999 * v_before));
}

TEST_CASE("training runs are bitwise deterministic") {
    RasterImage img = smooth_image(8);
    TrainConfig cfg = quick_config(3e-3, 120, 64, 42);
    BaseCheckpoint a = train_base(kTinyImageArch, img, cfg);
    BaseCheckpoint b = train_base(kTinyImageArch, img, cfg);
    CHECK(a.content_hash == b.content_hash);
    for (std::size_t l = 0; l < a.weights.weight.size(); ++l)
        CHECK(a.weights.weight[l] == b.weights.weight[l]);
}

TEST_CASE("constant image trains to near-zero loss quickly") {
    RasterImage img(8, 8, 3, 0.5);
    const FieldArchitecture arch{2, 1, 8, 0, 3, Activation::relu};
    TrainConfig cfg = quick_config(3e-2, 500, 64, 1);
    cfg.eval_every = 25;
    TrainStats stats;
    BaseCheckpoint ckpt = train_base(arch, img, cfg, &stats);
    CHECK(stats.best_eval_loss < 1e-6);
    CHECK(stats.steps <= 500);
}

TEST_CASE("smooth image reaches a high PSNR at convergence") {
    RasterImage img = smooth_image(8);
    TrainConfig cfg = quick_config(5e-3, 1500, 64, 2);
    BaseCheckpoint ckpt = train_base(kTinyImageArch, img, cfg);
    const double quality = eval_field_image(ckpt.arch, ckpt.weights, nullptr, img).psnr;
    CHECK(quality > 30.0);

    // Checkpoint round-trips with identical eval outputs.
    const std::string path =
        (std::filesystem::temp_directory_path() / "lorafield_train_rt.nfc").string();
    save_checkpoint(ckpt, path);
    BaseCheckpoint back = load_checkpoint(path);
    RasterImage r1 = render_field_image(ckpt.arch, ckpt.weights, nullptr, 8, 8);
    RasterImage r2 = render_field_image(back.arch, back.weights, nullptr, 8, 8);
    CHECK(r1.pixels == r2.pixels);
    std::filesystem::remove(path);
}

TEST_CASE("lora training freezes the base and cannot regress on a no-op edit") {
    RasterImage img = smooth_image(8);
    TrainConfig base_cfg = quick_config(5e-3, 1000, 64, 3);
    BaseCheckpoint base = train_base(kTinyImageArch, img, base_cfg);
    const FieldWeights before = base.weights;

    const DenseMatrix grid_coords = image_grid_batch(img).coords;
    const DenseMatrix grid_targets = image_grid_batch(img).targets;
    const double base_loss = composite_loss(ObjectiveSpec::image(), base.arch, base.weights,
                                            nullptr, grid_coords, grid_targets)
                                 .total;

    TrainConfig lora_cfg = quick_config(5e-3, 300, 64, 4);
    TrainStats stats;
    AdapterSet adapters = train_lora(base, img, 4, lora_cfg, ObjectiveSpec::image(), &stats);

    for (std::size_t l = 0; l < before.weight.size(); ++l) {
        CHECK(base.weights.weight[l] == before.weight[l]);
        CHECK(base.weights.bias[l] == before.bias[l]);
    }
    const double lora_loss = composite_loss(ObjectiveSpec::image(), base.arch, base.weights,
                                            &adapters, grid_coords, grid_targets)
                                 .total;
    CHECK(lora_loss <= base_loss * 1.05);
    CHECK(count_params(adapters) == count_adapter_params(base.arch, 4));
}

TEST_CASE("full finetune from the optimum does not regress") {
    RasterImage img = smooth_image(8);
    BaseCheckpoint base = train_base(kTinyImageArch, img, quick_config(5e-3, 800, 64, 5));
    const SampleBatch grid = image_grid_batch(img);
    const double base_loss = composite_loss(ObjectiveSpec::image(), base.arch, base.weights,
                                            nullptr, grid.coords, grid.targets)
                                 .total;
    TrainStats stats;
    FieldWeights ft = full_finetune(base, img, quick_config(1e-4, 200, 64, 6), &stats);
    const double ft_loss = composite_loss(ObjectiveSpec::image(), base.arch, ft, nullptr,
                                          grid.coords, grid.targets)
                               .total;
    CHECK(ft_loss <= base_loss * 1.05);
    CHECK(stats.steps <= 30000);
}

TEST_CASE("divergent training raises a TrainingError") {
    RasterImage img = smooth_image(8);
    BaseCheckpoint base = train_base(kTinyImageArch, img, quick_config(5e-3, 100, 64, 7));
    CHECK_THROWS_AS(full_finetune(base, img, quick_config(1e60, 50, 64, 8)), TrainingError);
}

TEST_CASE("sequence encoding: identical frames stay sharp and decode exactly") {
    RasterImage frame = smooth_image(8);
    FrameSequence seq = FrameSequence::from_images({frame, frame, frame});
    TrainConfig cfg = quick_config(5e-3, 400, 64, 9);
    SequentialEncoding enc = encode_sequence(seq, kTinyImageArch, 2, cfg,
                                             SequenceMode::sequential);
    REQUIRE(enc.ok());
    REQUIRE(enc.metrics.size() == 3);
    CHECK(enc.adapters.size() == 2);

    // A no-change frame must not lose quality.
    CHECK(enc.metrics[1].value >= enc.metrics[0].value - 0.5);

    // decode(k) equals the cumulative merge exactly.
    FieldWeights d3 = enc.decode(3);
    FieldWeights manual = merge_adapters(merge_adapters(enc.base.weights, enc.adapters[0]),
                                         enc.adapters[1]);
    for (std::size_t l = 0; l < d3.weight.size(); ++l) CHECK(d3.weight[l] == manual.weight[l]);

    // Bundle round trip decodes identically.
    const std::string dir =
        (std::filesystem::temp_directory_path() / "lorafield_train_bundle").string();
    save_bundle(enc.to_bundle(), dir);
    VideoBundle bundle = load_bundle(dir);
    FieldWeights from_file = decode_bundle_frame(bundle, 3);
    for (std::size_t l = 0; l < d3.weight.size(); ++l)
        CHECK(from_file.weight[l] == d3.weight[l]);
    std::filesystem::remove_all(dir);
}

TEST_CASE("sequence encoding reports the diverging frame and keeps the prefix") {
    RasterImage frame = smooth_image(8);
    FrameSequence seq = FrameSequence::from_images({frame, frame, frame});
    TrainConfig cfg = quick_config(1e60, 60, 64, 10); // adapters diverge, base lr is sane
    SequentialEncoding enc = encode_sequence(seq, kTinyImageArch, 2, cfg,
                                             SequenceMode::sequential);
    CHECK(enc.failed_frame == 2);
    CHECK(!enc.failure.empty());
    CHECK(enc.adapters.empty());
    CHECK(enc.metrics.size() == 1);
}

TEST_CASE("parallel sequence encoding adapts every frame from the base") {
    auto frames = synthetic_video(VideoKind::translating_pattern, 3, 8, 1);
    FrameSequence seq = FrameSequence::from_images(frames);
    TrainConfig cfg = quick_config(5e-3, 250, 64, 11);
    SequentialEncoding enc = encode_sequence(seq, kTinyImageArch, 2, cfg, SequenceMode::parallel);
    REQUIRE(enc.ok());
    FieldWeights d3 = enc.decode(3);
    FieldWeights manual = merge_adapters(enc.base.weights, enc.adapters[1]);
    for (std::size_t l = 0; l < d3.weight.size(); ++l) CHECK(d3.weight[l] == manual.weight[l]);
}

TEST_CASE("64x64 smooth gradient image reaches 40 dB at convergence") {
    RasterImage img(64, 64, 3);
    for (int i = 0; i < 64; ++i)
        for (int j = 0; j < 64; ++j) {
            img.at(i, j, 0) = (j + 0.5) / 64.0;
            img.at(i, j, 1) = (i + 0.5) / 64.0;
            img.at(i, j, 2) = 0.25 + 0.5 * (i + j + 1.0) / 128.0;
        }
    const FieldArchitecture arch{2, 4, 24, 1, 3, Activation::relu};
    TrainConfig cfg = quick_config(1e-2, 3000, 512, 21);
    cfg.eval_every = 250;
    BaseCheckpoint ckpt = train_base(arch, img, cfg);
    CHECK(eval_field_image(arch, ckpt.weights, nullptr, img).psnr > 40.0);
}

TEST_CASE("full-rank adapters recover full fine-tuning quality") {
    RasterImage img = smooth_image(10);
    RasterImage target = img;
    for (int i = 3; i < 7; ++i)
        for (int j = 3; j < 7; ++j) target.at(i, j, 0) = 0.9; // small square edit

    const FieldArchitecture arch{2, 2, 10, 1, 3, Activation::relu};
    BaseCheckpoint base = train_base(arch, img, quick_config(5e-3, 1500, 100, 31));

    TrainStats ft_stats, lora_stats;
    TrainConfig ft_cfg = quick_config(2e-3, 1500, 100, 32);
    full_finetune(base, target, ft_cfg, &ft_stats);
    // Nominal rank covering every layer's min dimension generalizes FT.
    TrainConfig lora_cfg = quick_config(5e-3, 2500, 100, 33);
    train_lora(base, target, 10, lora_cfg, ObjectiveSpec::image(), &lora_stats);

    CHECK(lora_stats.best_eval_loss <= ft_stats.best_eval_loss * 1.10);
}
