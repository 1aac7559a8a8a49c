// Command-line surface for the neural-field low-rank adapter pipelines:
// base fitting, LoRA/full fine-tuning, SVD baselines, TV denoising,
// sequence encoding and evaluation reports.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <iostream>
#include <string>
#include <variant>
#include <vector>

#include "CLI11.hpp"

#include "lorafield/baselines.hpp"
#include "lorafield/metrics.hpp"
#include "lorafield/serialize.hpp"
#include "lorafield/training.hpp"

namespace lf = lorafield;

namespace {

using TargetData = std::variant<lf::RasterImage, lf::SdfSource>;

bool is_image(const TargetData& t) { return t.index() == 0; }

// Accepts Netpbm images, SDFS sample files, shape-expression files, or an
// inline shape expression when no such file exists.
TargetData load_target(const std::string& path) {
    if (std::filesystem::exists(path)) {
        const auto bytes = lf::read_file_bytes(path);
        if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6'))
            return lf::load_netpbm(path);
        if (bytes.size() >= 4 && std::string(bytes.begin(), bytes.begin() + 4) == "SDFS")
            return lf::SdfSource::from_samples(lf::load_sdf_samples(path));
        return lf::SdfSource::analytic(
            lf::parse_sdf_expression(std::string(bytes.begin(), bytes.end())));
    }
    return lf::SdfSource::analytic(lf::parse_sdf_expression(path));
}

lf::FieldArchitecture preset_by_name(const std::string& name) {
    if (name == "sdf") return lf::FieldArchitecture::sdf_preset();
    if (name == "image") return lf::FieldArchitecture::image_preset();
    if (name == "video") return lf::FieldArchitecture::video_preset();
    throw std::invalid_argument("unknown --arch-preset '" + name + "'");
}

std::vector<int> parse_ranks(const std::string& list) {
    std::vector<int> out;
    std::size_t pos = 0;
    while (pos < list.size()) {
        std::size_t next = list.find(',', pos);
        if (next == std::string::npos) next = list.size();
        out.push_back(std::stoi(list.substr(pos, next - pos)));
        pos = next + 1;
    }
    if (out.empty()) throw std::invalid_argument("--ranks: empty list");
    for (int r : out)
        if (r < 1) throw std::invalid_argument("--ranks: ranks must be >= 1");
    return out;
}

struct TrainFlags {
    std::uint64_t seed = 0;
    int steps = 30000;
    int batch = 4096;
    double lr = 0.0; // 0 means per-pipeline default
    int window = 2000;
    int eval_every = 500;
    std::string log_csv;

    void attach(CLI::App* cmd) {
        cmd->add_option("--seed", seed, "RNG seed (runs are deterministic given the seed)");
        cmd->add_option("--steps", steps, "Maximum optimization steps")
            ->check(CLI::Range(1, 30000));
        cmd->add_option("--batch", batch, "Samples per step");
        cmd->add_option("--lr", lr, "Learning rate override");
        cmd->add_option("--window", window, "Improvement window in steps");
        cmd->add_option("--eval-every", eval_every, "Eval cadence in steps");
        cmd->add_option("--log", log_csv, "Append step,loss,fidelity,energy,elapsed rows here");
    }

    lf::TrainConfig config(double default_lr) const {
        lf::TrainConfig cfg;
        cfg.learning_rate = lr > 0.0 ? lr : default_lr;
        cfg.max_steps = steps;
        cfg.batch_size = batch;
        cfg.improvement_window = window;
        cfg.eval_every = eval_every;
        cfg.seed = seed;
        cfg.log_csv = log_csv;
        return cfg;
    }
};

lf::BatchSdf field_sdf(const lf::BaseCheckpoint& base, const lf::FieldWeights& weights,
                       const lf::AdapterSet* adapters) {
    return lf::batch_sdf_from_field(base.arch, weights, adapters);
}

std::vector<std::string> list_frames(const std::string& dir) {
    std::vector<std::string> paths;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") paths.push_back(entry.path().string());
    }
    std::sort(paths.begin(), paths.end());
    if (paths.size() < 2)
        throw lf::DataError(dir + ": need at least two .ppm/.pgm frames");
    return paths;
}

int run(int argc, char** argv) {
    CLI::App app{"lorafield: compact low-rank adapter updates for coordinate-MLP neural fields"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "Worker threads (default: hardware)");

    // ---- train-base ----
    auto* cmd_base = app.add_subcommand("train-base", "Overfit a base field to one signal");
    std::string tb_modality, tb_input, tb_out, tb_preset;
    TrainFlags tb_flags;
    cmd_base->add_option("--modality", tb_modality, "image or sdf")
        ->required()
        ->check(CLI::IsMember({"image", "sdf"}));
    cmd_base->add_option("--input", tb_input, "Netpbm image, SDFS file or shape expression")
        ->required();
    cmd_base->add_option("--out", tb_out, "Checkpoint path (.nfc)")->required();
    cmd_base->add_option("--arch-preset", tb_preset, "sdf, image or video (default by modality)");
    tb_flags.attach(cmd_base);

    // ---- train-lora ----
    auto* cmd_lora = app.add_subcommand("train-lora", "Encode an edit as a low-rank adapter");
    std::string tl_base, tl_target, tl_out, tl_objective = "fidelity";
    int tl_rank = 16;
    double tl_lambda = lf::default_tv_lambda, tl_h = 0.0;
    int tl_grid = 64;
    TrainFlags tl_flags;
    cmd_lora->add_option("--base", tl_base, "Base checkpoint")->required();
    cmd_lora->add_option("--target", tl_target, "Edited target (image/SDFS/shape)");
    cmd_lora->add_option("--rank", tl_rank, "Nominal adapter rank")->required();
    cmd_lora->add_option("--out", tl_out, "Adapter path (.nfl)")->required();
    cmd_lora->add_option("--objective", tl_objective, "fidelity or tv")
        ->check(CLI::IsMember({"fidelity", "tv"}));
    cmd_lora->add_option("--lambda", tl_lambda, "TV energy weight (tv objective)");
    cmd_lora->add_option("--fd-step", tl_h, "TV finite-difference step (default 1/grid)");
    cmd_lora->add_option("--grid", tl_grid, "TV sampling grid resolution");
    tl_flags.attach(cmd_lora);

    // ---- finetune ----
    auto* cmd_ft = app.add_subcommand("finetune", "Full fine-tuning comparison point");
    std::string ft_base, ft_target, ft_out;
    TrainFlags ft_flags;
    cmd_ft->add_option("--base", ft_base, "Base checkpoint")->required();
    cmd_ft->add_option("--target", ft_target, "Edited target")->required();
    cmd_ft->add_option("--out", ft_out, "Checkpoint path for the finetuned field")->required();
    ft_flags.attach(cmd_ft);

    // ---- eval ----
    auto* cmd_eval = app.add_subcommand("eval", "Evaluate a field against a reference");
    std::string ev_base, ev_reference, ev_report, ev_render, ev_experiment = "eval";
    std::vector<std::string> ev_adapters;
    bool ev_force = false;
    long long ev_iou_samples = 1000000;
    std::uint64_t ev_seed = 0;
    cmd_eval->add_option("--base", ev_base, "Base checkpoint")->required();
    cmd_eval->add_option("--adapter", ev_adapters, "Adapter file(s), applied in order");
    cmd_eval->add_option("--reference", ev_reference, "Reference image/SDFS/shape")->required();
    cmd_eval->add_option("--report", ev_report, "CSV report path")->required();
    cmd_eval->add_option("--render", ev_render, "Write the rendered field as PPM/PGM");
    cmd_eval->add_option("--experiment", ev_experiment, "Experiment id for the report");
    cmd_eval->add_option("--iou-samples", ev_iou_samples, "IoU Monte-Carlo sample count");
    cmd_eval->add_option("--seed", ev_seed, "IoU sampling seed");
    cmd_eval->add_flag("--force", ev_force, "Attach adapters despite a base hash mismatch");

    // ---- svd-baseline ----
    auto* cmd_svd = app.add_subcommand("svd-baseline",
                                       "Post-hoc truncated SVD of the weight difference");
    std::string sb_base, sb_ft, sb_out, sb_mode = "plain";
    int sb_rank = 16, sb_probe = 4096;
    std::uint64_t sb_seed = 0;
    cmd_svd->add_option("--base", sb_base)->required();
    cmd_svd->add_option("--finetuned", sb_ft)->required();
    cmd_svd->add_option("--rank", sb_rank)->required();
    cmd_svd->add_option("--mode", sb_mode)->check(CLI::IsMember({"plain", "weighted"}));
    cmd_svd->add_option("--probe-samples", sb_probe, "Probe batch for input statistics");
    cmd_svd->add_option("--seed", sb_seed);
    cmd_svd->add_option("--out", sb_out, "Checkpoint path for the factored field")->required();

    // ---- error-curve ----
    auto* cmd_curve = app.add_subcommand("error-curve",
                                         "Per-layer normalized low-rank error vs rank");
    std::string ec_base, ec_ft, ec_out, ec_ranks = "1,2,4,8,16,32,64";
    int ec_probe = 4096;
    std::uint64_t ec_seed = 0;
    cmd_curve->add_option("--base", ec_base)->required();
    cmd_curve->add_option("--finetuned", ec_ft)->required();
    cmd_curve->add_option("--ranks", ec_ranks, "Comma-separated rank list");
    cmd_curve->add_option("--probe-samples", ec_probe);
    cmd_curve->add_option("--seed", ec_seed);
    cmd_curve->add_option("--out", ec_out, "CSV path (layer,rank,normalized_error)")->required();

    // ---- denoise-tv ----
    auto* cmd_tv = app.add_subcommand("denoise-tv",
                                      "TV-energy LoRA against the base field's own output");
    std::string tv_base, tv_out;
    double tv_lambda = lf::default_tv_lambda, tv_h = 0.0;
    int tv_rank = 16, tv_grid = 64;
    TrainFlags tv_flags;
    cmd_tv->add_option("--base", tv_base)->required();
    cmd_tv->add_option("--lambda", tv_lambda, "TV energy weight");
    cmd_tv->add_option("--rank", tv_rank)->required();
    cmd_tv->add_option("--fd-step", tv_h, "Finite-difference step (default 1/grid)");
    cmd_tv->add_option("--grid", tv_grid, "Sampling grid resolution");
    cmd_tv->add_option("--out", tv_out, "Adapter path")->required();
    tv_flags.attach(cmd_tv);

    // ---- chambolle ----
    auto* cmd_ch = app.add_subcommand("chambolle", "Chambolle projection TV denoising");
    std::string ch_in, ch_out;
    double ch_lambda = 0.1, ch_tau = 0.125;
    int ch_iters = 200;
    cmd_ch->add_option("--input", ch_in, "Netpbm image")->required();
    cmd_ch->add_option("--lambda", ch_lambda, "ROF fidelity weight");
    cmd_ch->add_option("--iterations", ch_iters);
    cmd_ch->add_option("--tau", ch_tau, "Projection step (<= 0.25)");
    cmd_ch->add_option("--out", ch_out)->required();

    // ---- video ----
    auto* cmd_video = app.add_subcommand("video", "Frame-sequence encoding/decoding");
    cmd_video->require_subcommand(1);
    auto* cmd_venc = cmd_video->add_subcommand("encode", "Encode numbered PPM frames");
    std::string ve_frames, ve_out, ve_mode = "sequential", ve_preset = "video";
    int ve_rank = 16;
    double ve_base_lr = 0.0;
    int ve_base_steps = 0;
    TrainFlags ve_flags;
    cmd_venc->add_option("--frames", ve_frames, "Directory of .ppm/.pgm frames")->required();
    cmd_venc->add_option("--rank", ve_rank)->required();
    cmd_venc->add_option("--mode", ve_mode)->check(CLI::IsMember({"sequential", "parallel"}));
    cmd_venc->add_option("--arch-preset", ve_preset);
    cmd_venc->add_option("--base-lr", ve_base_lr, "Frame-1 base learning rate");
    cmd_venc->add_option("--base-steps", ve_base_steps, "Frame-1 base step budget");
    cmd_venc->add_option("--out", ve_out, "Bundle directory")->required();
    ve_flags.attach(cmd_venc);

    auto* cmd_vdec = cmd_video->add_subcommand("decode", "Decode one frame from a bundle");
    std::string vd_bundle, vd_out;
    int vd_frame = 1, vd_width = 0, vd_height = 0;
    cmd_vdec->add_option("--bundle", vd_bundle)->required();
    cmd_vdec->add_option("--frame", vd_frame, "1-based frame index")->required();
    cmd_vdec->add_option("--width", vd_width, "Render width (default 256)");
    cmd_vdec->add_option("--height", vd_height, "Render height (default width)");
    cmd_vdec->add_option("--out", vd_out, "Output PPM")->required();

    // ---- edit ----
    auto* cmd_edit = app.add_subcommand("edit", "Synthetic variation generators");
    cmd_edit->require_subcommand(1);
    auto* cmd_gauss = cmd_edit->add_subcommand("gaussian", "Low-frequency Gaussian edit");
    std::string eg_in, eg_out;
    double eg_sigma = 0.2, eg_k = 1.0;
    int eg_blur = 4;
    std::uint64_t eg_seed = 0;
    cmd_gauss->add_option("--input", eg_in)->required();
    cmd_gauss->add_option("--sigma", eg_sigma, "Noise standard deviation");
    cmd_gauss->add_option("--blur", eg_blur, "Low-pass blur radius in pixels");
    cmd_gauss->add_option("--k", eg_k, "Edit magnitude scale");
    cmd_gauss->add_option("--seed", eg_seed);
    cmd_gauss->add_option("--out", eg_out)->required();

    // ---- rank-sweep ----
    auto* cmd_sweep = app.add_subcommand("rank-sweep", "LoRA quality across ranks");
    std::string rs_base, rs_target, rs_report, rs_ranks = "1,4,8,16,32,64";
    TrainFlags rs_flags;
    cmd_sweep->add_option("--base", rs_base)->required();
    cmd_sweep->add_option("--target", rs_target)->required();
    cmd_sweep->add_option("--ranks", rs_ranks);
    cmd_sweep->add_option("--report", rs_report, "CSV report path")->required();
    rs_flags.attach(cmd_sweep);

    // ---- small-mlp-baseline ----
    auto* cmd_small = app.add_subcommand("small-mlp-baseline",
                                         "From-scratch MLP matched to an adapter's size");
    std::string sm_adapter, sm_target, sm_out, sm_base;
    TrainFlags sm_flags;
    cmd_small->add_option("--reference-adapter", sm_adapter)->required();
    cmd_small->add_option("--target", sm_target)->required();
    cmd_small->add_option("--base", sm_base, "Checkpoint providing the reference architecture");
    cmd_small->add_option("--out", sm_out)->required();
    sm_flags.attach(cmd_small);

    CLI11_PARSE(app, argc, argv);
    if (threads > 0) lf::set_thread_count(threads);

    if (*cmd_base) {
        TargetData target = load_target(tb_input);
        if ((tb_modality == "image") != is_image(target))
            throw lf::DataError("--input does not match --modality " + tb_modality);
        lf::FieldArchitecture arch =
            tb_preset.empty() ? (tb_modality == "image" ? lf::FieldArchitecture::image_preset()
                                                        : lf::FieldArchitecture::sdf_preset())
                              : preset_by_name(tb_preset);
        lf::TrainConfig cfg = tb_flags.config(lf::TrainConfig::base_defaults().learning_rate);
        lf::TrainStats stats;
        lf::BaseCheckpoint ckpt =
            is_image(target) ? lf::train_base(arch, std::get<0>(target), cfg, &stats)
                             : lf::train_base(arch, std::get<1>(target), cfg, &stats);
        lf::save_checkpoint(ckpt, tb_out);
        std::cout << "trained base: " << stats.steps << " steps, eval loss "
                  << stats.best_eval_loss << ", params " << lf::count_params(arch) << "\n";
        return 0;
    }

    if (*cmd_lora) {
        lf::BaseCheckpoint base = lf::load_checkpoint(tl_base);
        lf::TrainConfig cfg = tl_flags.config(lf::TrainConfig::lora_defaults().learning_rate);
        lf::TrainStats stats;
        lf::AdapterSet adapters;
        if (tl_objective == "tv") {
            const double h = tl_h > 0.0 ? tl_h : 1.0 / tl_grid;
            adapters = lf::train_lora_tv(base, tl_lambda, h, tl_rank, cfg, tl_grid, tl_grid,
                                         &stats);
        } else {
            if (tl_target.empty())
                throw std::invalid_argument("train-lora: --target required for the fidelity objective");
            TargetData target = load_target(tl_target);
            adapters = is_image(target)
                           ? lf::train_lora(base, std::get<0>(target), tl_rank, cfg,
                                            lf::ObjectiveSpec::image(), &stats)
                           : lf::train_lora(base, std::get<1>(target), tl_rank, cfg, &stats);
        }
        lf::save_adapter(adapters, base.content_hash, tl_out);
        std::cout << "trained adapter: rank " << tl_rank << " (" << lf::count_params(adapters)
                  << " params, " << stats.steps << " steps, eval loss " << stats.best_eval_loss
                  << ")\n";
        return 0;
    }

    if (*cmd_ft) {
        lf::BaseCheckpoint base = lf::load_checkpoint(ft_base);
        TargetData target = load_target(ft_target);
        lf::TrainConfig cfg = ft_flags.config(lf::TrainConfig::base_defaults().learning_rate);
        lf::TrainStats stats;
        lf::FieldWeights ft = is_image(target)
                                  ? lf::full_finetune(base, std::get<0>(target), cfg, &stats)
                                  : lf::full_finetune(base, std::get<1>(target), cfg, &stats);
        lf::save_checkpoint(lf::make_checkpoint(base.arch, std::move(ft)), ft_out);
        std::cout << "finetuned: " << stats.steps << " steps, eval loss " << stats.best_eval_loss
                  << "\n";
        return 0;
    }

    if (*cmd_eval) {
        lf::BaseCheckpoint base = lf::load_checkpoint(ev_base);
        lf::FieldWeights weights = base.weights;
        long long adapter_params = 0;
        int last_rank = -1;
        for (const auto& path : ev_adapters) {
            lf::AdapterSet a = lf::load_adapter_for(path, base, ev_force);
            adapter_params += lf::count_params(a);
            last_rank = a.nominal_rank;
            weights = lf::merge_adapters(weights, a);
        }
        const std::string method = ev_adapters.empty() ? "base" : "lora";
        TargetData reference = load_target(ev_reference);
        std::vector<lf::MetricRow> rows;
        lf::MetricRow row;
        row.experiment = ev_experiment;
        row.method = method;
        row.rank = last_rank;
        row.param_count = ev_adapters.empty() ? lf::count_params(base.arch) : adapter_params;
        row.seed = ev_seed;
        const auto t0 = std::chrono::steady_clock::now();
        if (is_image(reference)) {
            const lf::RasterImage& ref = std::get<0>(reference);
            lf::ImageEval eval = lf::eval_field_image(base.arch, weights, nullptr, ref);
            row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            row.metric = "psnr";
            row.value = eval.psnr;
            rows.push_back(row);
            row.metric = "mse";
            row.value = eval.mse;
            rows.push_back(row);
            if (!ev_render.empty()) lf::save_netpbm(eval.render, ev_render);
            std::cout << "psnr " << lf::format_metric_value(eval.psnr) << " dB, mse " << eval.mse
                      << "\n";
        } else {
            if (!ev_render.empty())
                throw std::invalid_argument("eval: --render applies to image references only");
            lf::SeededRng rng(ev_seed);
            const double value = lf::iou(field_sdf(base, weights, nullptr),
                                         lf::batch_sdf_from_source(std::get<1>(reference)),
                                         ev_iou_samples, rng);
            row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            row.metric = "iou";
            row.value = value;
            rows.push_back(row);
            std::cout << "iou " << value << "\n";
        }
        lf::write_metric_csv(ev_report, rows);
        return 0;
    }

    if (*cmd_svd) {
        lf::BaseCheckpoint base = lf::load_checkpoint(sb_base);
        lf::BaseCheckpoint ft = lf::load_checkpoint(sb_ft);
        if (!(base.arch == ft.arch))
            throw lf::ShapeError("svd-baseline: base and finetuned architectures differ");
        lf::FieldWeights result;
        if (sb_mode == "weighted") {
            lf::SeededRng rng(sb_seed);
            lf::DenseMatrix probe(sb_probe, base.arch.input_dim);
            for (double& v : probe.data()) v = rng.uniform(-1.0, 1.0);
            lf::LayerInputStats stats = lf::collect_layer_inputs(base.arch, base.weights, probe);
            result = lf::weighted_svd_baseline(base.weights, ft.weights, sb_rank, stats);
        } else {
            result = lf::svd_baseline(base.weights, ft.weights, sb_rank);
        }
        lf::save_checkpoint(lf::make_checkpoint(base.arch, std::move(result)), sb_out);
        std::cout << "wrote " << sb_mode << " rank-" << sb_rank << " factored checkpoint\n";
        return 0;
    }

    if (*cmd_curve) {
        lf::BaseCheckpoint base = lf::load_checkpoint(ec_base);
        lf::BaseCheckpoint ft = lf::load_checkpoint(ec_ft);
        if (!(base.arch == ft.arch))
            throw lf::ShapeError("error-curve: base and finetuned architectures differ");
        lf::SeededRng rng(ec_seed);
        lf::DenseMatrix probe(ec_probe, base.arch.input_dim);
        for (double& v : probe.data()) v = rng.uniform(-1.0, 1.0);
        lf::LayerInputStats stats = lf::collect_layer_inputs(base.arch, base.weights, probe);
        auto curve = lf::lowrank_error_curve(base.weights, ft.weights, stats,
                                             parse_ranks(ec_ranks));
        lf::write_file_atomic(ec_out, lf::error_curve_csv(curve));
        std::cout << "wrote " << curve.size() << " error-curve rows\n";
        return 0;
    }

    if (*cmd_tv) {
        lf::BaseCheckpoint base = lf::load_checkpoint(tv_base);
        const double h = tv_h > 0.0 ? tv_h : 1.0 / tv_grid;
        lf::TrainConfig cfg = tv_flags.config(lf::TrainConfig::lora_defaults().learning_rate);
        lf::TrainStats stats;
        lf::AdapterSet adapters =
            lf::train_lora_tv(base, tv_lambda, h, tv_rank, cfg, tv_grid, tv_grid, &stats);
        lf::save_adapter(adapters, base.content_hash, tv_out);
        std::cout << "trained TV adapter: lambda " << tv_lambda << ", " << stats.steps
                  << " steps, eval loss " << stats.best_eval_loss << "\n";
        return 0;
    }

    if (*cmd_ch) {
        lf::RasterImage img = lf::load_netpbm(ch_in);
        lf::save_netpbm(lf::chambolle_denoise(img, ch_lambda, ch_iters, ch_tau), ch_out);
        std::cout << "wrote Chambolle-denoised image\n";
        return 0;
    }

    if (*cmd_venc) {
        std::vector<lf::RasterImage> frames;
        for (const auto& path : list_frames(ve_frames)) frames.push_back(lf::load_netpbm(path));
        lf::FrameSequence seq = lf::FrameSequence::from_images(std::move(frames));
        lf::TrainConfig cfg = ve_flags.config(lf::TrainConfig::lora_defaults().learning_rate);
        lf::TrainConfig base_cfg = cfg;
        base_cfg.learning_rate = ve_base_lr > 0.0
                                     ? ve_base_lr
                                     : lf::TrainConfig::base_defaults().learning_rate;
        if (ve_base_steps > 0) base_cfg.max_steps = ve_base_steps;
        lf::SequentialEncoding enc =
            lf::encode_sequence(seq, preset_by_name(ve_preset), ve_rank, cfg,
                                ve_mode == "sequential" ? lf::SequenceMode::sequential
                                                        : lf::SequenceMode::parallel,
                                &base_cfg);
        lf::save_bundle(enc.to_bundle(), ve_out);
        for (const auto& m : enc.metrics)
            std::cout << "frame " << m.frame << ": psnr " << m.value << " dB (" << m.steps
                      << " steps)\n";
        if (!enc.ok()) {
            std::cerr << "frame " << enc.failed_frame << " diverged: " << enc.failure
                      << " (partial bundle saved)\n";
            return 1;
        }
        return 0;
    }

    if (*cmd_vdec) {
        lf::VideoBundle bundle = lf::load_bundle(vd_bundle);
        lf::FieldWeights frame = lf::decode_bundle_frame(bundle, vd_frame);
        const int w = vd_width > 0 ? vd_width : 256;
        const int h = vd_height > 0 ? vd_height : w;
        lf::save_netpbm(lf::render_field_image(bundle.base.arch, frame, nullptr, w, h), vd_out);
        std::cout << "decoded frame " << vd_frame << " of " << bundle.frame_count << "\n";
        return 0;
    }

    if (*cmd_gauss) {
        lf::RasterImage img = lf::load_netpbm(eg_in);
        lf::SeededRng rng(eg_seed);
        lf::save_netpbm(lf::gaussian_lowfreq_edit(img, eg_sigma, eg_blur, eg_k, rng), eg_out);
        std::cout << "wrote Gaussian low-frequency edit (k=" << eg_k << ")\n";
        return 0;
    }

    if (*cmd_sweep) {
        lf::BaseCheckpoint base = lf::load_checkpoint(rs_base);
        TargetData target = load_target(rs_target);
        std::vector<lf::MetricRow> rows;
        for (int rank : parse_ranks(rs_ranks)) {
            lf::TrainConfig cfg = rs_flags.config(lf::TrainConfig::lora_defaults().learning_rate);
            lf::TrainStats stats;
            lf::MetricRow row;
            row.experiment = "rank-sweep";
            row.method = "lora";
            row.rank = rank;
            row.seed = cfg.seed;
            if (is_image(target)) {
                const lf::RasterImage& ref = std::get<0>(target);
                lf::AdapterSet a = lf::train_lora(base, ref, rank, cfg,
                                                  lf::ObjectiveSpec::image(), &stats);
                row.param_count = lf::count_params(a);
                row.seconds = stats.seconds;
                lf::ImageEval eval = lf::eval_field_image(base.arch, base.weights, &a, ref);
                row.metric = "psnr";
                row.value = eval.psnr;
                rows.push_back(row);
                row.metric = "mse";
                row.value = eval.mse;
                rows.push_back(row);
                std::cout << "rank " << rank << ": psnr " << lf::format_metric_value(eval.psnr)
                          << " dB\n";
            } else {
                const lf::SdfSource& ref = std::get<1>(target);
                lf::AdapterSet a = lf::train_lora(base, ref, rank, cfg, &stats);
                row.param_count = lf::count_params(a);
                row.seconds = stats.seconds;
                lf::SeededRng rng(cfg.seed);
                lf::FieldWeights merged = lf::merge_adapters(base.weights, a);
                row.metric = "iou";
                row.value = lf::iou(field_sdf(base, merged, nullptr),
                                    lf::batch_sdf_from_source(ref), 1000000, rng);
                rows.push_back(row);
                std::cout << "rank " << rank << ": iou " << row.value << "\n";
            }
        }
        lf::write_metric_csv(rs_report, rows);
        return 0;
    }

    if (*cmd_small) {
        lf::LoadedAdapter reference = lf::load_adapter(sm_adapter);
        TargetData target = load_target(sm_target);
        lf::FieldArchitecture ref_arch;
        if (!sm_base.empty())
            ref_arch = lf::load_checkpoint(sm_base).arch;
        else
            ref_arch = is_image(target) ? lf::FieldArchitecture::image_preset()
                                        : lf::FieldArchitecture::sdf_preset();
        lf::FieldArchitecture arch =
            lf::small_mlp_arch(ref_arch, lf::count_params(reference.adapters));
        lf::TrainConfig cfg = sm_flags.config(lf::TrainConfig::base_defaults().learning_rate);
        lf::TrainStats stats;
        lf::BaseCheckpoint ckpt =
            is_image(target) ? lf::train_base(arch, std::get<0>(target), cfg, &stats)
                             : lf::train_base(arch, std::get<1>(target), cfg, &stats);
        lf::save_checkpoint(ckpt, sm_out);
        std::cout << "small MLP width " << arch.hidden_width << " (" << lf::count_params(arch)
                  << " params vs adapter " << lf::count_params(reference.adapters) << "), "
                  << stats.steps << " steps\n";
        return 0;
    }

    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
