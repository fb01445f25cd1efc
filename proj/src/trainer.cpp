#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "panet/data/augment.hpp"
#include "panet/io/archive.hpp"
#include "panet/train/trainer.hpp"

namespace panet {

namespace {

namespace fs = std::filesystem;

std::pair<FTensor, U8Tensor> stack_cases(const std::vector<SegCase>& cases) {
    const Shape img_shape = cases[0].image.shape();
    const Shape lab_shape = cases[0].labels.shape();
    for (const auto& c : cases) {
        require(same_shape(c.image.shape(), img_shape),
                "batch: case '" + c.id + "' has image shape " + shape_str(c.image.shape()) + ", expected " +
                    shape_str(img_shape));
        require(same_shape(c.labels.shape(), lab_shape), "batch: case '" + c.id + "' has mismatched labels");
    }
    const int64_t n = static_cast<int64_t>(cases.size());
    Shape bi{n};
    for (int64_t d : img_shape) bi.push_back(d);
    Shape bl{n};
    for (int64_t d : lab_shape) bl.push_back(d);
    FTensor images(bi);
    U8Tensor labels(bl);
    const int64_t isz = numel_of(img_shape), lsz = numel_of(lab_shape);
    for (int64_t i = 0; i < n; ++i) {
        std::copy(cases[static_cast<size_t>(i)].image.data(), cases[static_cast<size_t>(i)].image.data() + isz,
                  images.data() + i * isz);
        std::copy(cases[static_cast<size_t>(i)].labels.data(), cases[static_cast<size_t>(i)].labels.data() + lsz,
                  labels.data() + i * lsz);
    }
    return {images, labels};
}

Checkpoint make_checkpoint(const TrainConfig& cfg, SegModel<float>& model, AdamW& opt, int64_t epoch, int64_t step,
                           double best_metric) {
    Checkpoint ck;
    ck.config = train_config_to_json(cfg);
    ck.epoch = epoch;
    ck.step = step;
    ck.seed = cfg.seed;
    ck.best_metric = best_metric;
    ck.model_state = model.state_dict();
    ck.optim_state = opt.export_state();
    if (auto* panet = dynamic_cast<PANet<float>*>(&model); panet && panet->skip_fusion()) {
        const auto alphas = panet->skip_fusion()->alpha_values();
        for (size_t i = 0; i < alphas.size(); ++i) ck.alpha["alpha." + std::to_string(i)] = alphas[i];
    }
    return ck;
}

}  // namespace

CasePredictor make_model_predictor(const std::shared_ptr<SegModel<float>>& model, const TrainConfig& cfg) {
    if (cfg.task == "covid-2d") {
        const int64_t size = cfg.network_input_size();
        return [model, size](const SegCase& c) {
            model->set_training(false);
            return predict_2d(*model, c.image, size);
        };
    }
    const SlidingWindowSpec spec = cfg.inference;
    const double threshold = cfg.region_threshold;
    const int64_t min_voxels = cfg.et_suppress_min_voxels;
    const bool regions = cfg.network.output_mode == OutputMode::SigmoidRegions;
    const int64_t out_channels = cfg.network.num_classes;
    return [model, spec, threshold, min_voxels, regions, out_channels](const SegCase& c) {
        model->set_training(false);
        FTensor image = c.image.clone();
        znorm_inplace(image);
        PatchPredictor patch_fn = [&model](const FTensor& patch) { return model_probabilities(*model, patch); };
        const FTensor probs = sliding_window_predict(patch_fn, image, spec, out_channels);
        if (regions) return suppress_enhancing_tumor(regions_to_labels(probs, threshold), min_voxels);
        return argmax_labels(probs);
    };
}

MetricReport evaluate_cases(const CasePredictor& predict, const CaseSource& cases, EvalSpec spec,
                            const HdOptions& hd) {
    MetricReport report;
    for (size_t i = 0; i < cases.size(); ++i) {
        const SegCase c = cases.load(i);
        const U8Tensor pred = predict(c);
        report.per_case[c.id] = evaluate_case(pred, c.labels, spec, c.spacing, hd);
    }
    return report;
}

double mean_foreground_dice(const MetricReport& report) {
    double sum = 0;
    int64_t n = 0;
    for (const auto& [id, rec] : report.per_case)
        for (const auto& [cls, m] : rec.per_class) {
            sum += m.dice;
            ++n;
        }
    return n ? sum / n : 0.0;
}

TrainResult run_training(const TrainConfig& cfg, const CaseSource& train_cases, const CaseSource& val_cases,
                         const std::string& resume_path) {
    cfg.validate();
    if (train_cases.size() == 0) throw DataError("training: no cases");

    auto model = build_model<float>(cfg.network);
    initialize_model(*model, cfg.seed);
    std::vector<std::pair<std::string, FVar>> params;
    model->named_parameters(params);
    AdamW opt(params, cfg.optimizer);

    int64_t start_epoch = 0;
    int64_t global_step = 0;
    double best_metric = -1.0;
    if (!resume_path.empty()) {
        const Checkpoint ck = load_checkpoint(resume_path);
        model->load_state_dict(ck.model_state, true);
        opt.import_state(ck.optim_state);
        start_epoch = ck.epoch + 1;
        global_step = ck.step;
        best_metric = ck.best_metric;
    }

    const int64_t n = static_cast<int64_t>(train_cases.size());
    const int64_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const int64_t total_steps = steps_per_epoch * cfg.epochs;

    fs::create_directories(cfg.checkpoint_dir);
    if (!cfg.log_path.empty()) fs::create_directories(fs::path(cfg.log_path).parent_path().empty()
                                                          ? "."
                                                          : fs::path(cfg.log_path).parent_path().string());
    std::ofstream log(cfg.log_path, std::ios::app);

    LossScaler scaler;
    scaler.enabled = cfg.mixed_precision;

    TrainResult result;
    result.best_path = (fs::path(cfg.checkpoint_dir) / "best.ckpt").string();
    result.last_path = (fs::path(cfg.checkpoint_dir) / "last.ckpt").string();

    for (int64_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        model->set_training(true);
        std::vector<int64_t> order(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
        Rng shuffle_rng(mix_seed(mix_seed(cfg.seed, 0xe90c4u), static_cast<uint64_t>(epoch)));
        for (int64_t i = n - 1; i > 0; --i)
            std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(shuffle_rng.uniform_int(0, i))]);

        for (int64_t b0 = 0; b0 < n; b0 += cfg.batch_size) {
            std::vector<SegCase> batch;
            std::vector<std::string> batch_ids;
            for (int64_t i = b0; i < std::min(n, b0 + cfg.batch_size); ++i) {
                SegCase c = train_cases.load(static_cast<size_t>(order[static_cast<size_t>(i)]));
                Rng aug_rng = case_rng(cfg.seed, c.id, epoch);
                batch.push_back(augment_case(c, cfg.data.augment, aug_rng));
                batch_ids.push_back(c.id);
            }
            auto [images, labels] = stack_cases(batch);
            const double lr = cosine_lr(cfg.optimizer.lr, global_step, total_steps);

            HalfSimGuard half_guard(cfg.mixed_precision);
            auto outputs = model->forward(constant(images));
            const auto targets = make_targets<float>(labels, cfg.network.output_mode, cfg.network.num_classes);
            FVar attention_up;
            if (cfg.network.intermediate_supervision && outputs.attention) {
                std::vector<int64_t> label_sp(labels.shape().begin() + 1, labels.shape().end());
                attention_up = resize_attention(outputs.attention, label_sp);
            }
            auto [loss, breakdown] =
                total_loss(outputs.main_logits, outputs.aux_logits, attention_up, targets, cfg.loss,
                           cfg.network.output_mode, cfg.network.deep_supervision,
                           cfg.network.intermediate_supervision);
            if (outputs.coarse_logits) {  // cascaded baseline stage-1 supervision
                auto coarse = binary_supervision_loss(ops::sigmoid(outputs.coarse_logits), targets, cfg.loss);
                breakdown.terms["coarse"] = static_cast<double>(coarse->value[0]);
                loss = ops::add(loss, coarse);
                breakdown.total = static_cast<double>(loss->value[0]);
            }
            if (!std::isfinite(breakdown.total)) {
                std::string ids;
                for (const auto& id : batch_ids) ids += (ids.empty() ? "" : ", ") + id;
                throw NumericError("non-finite loss at step " + std::to_string(global_step) + " (epoch " +
                                   std::to_string(epoch) + ") on batch [" + ids + "]");
            }

            opt.zero_grad();
            backward(loss, static_cast<float>(scaler.loss_seed()));
            if (scaler.unscale_and_check(opt)) opt.step(lr);

            nlohmann::json rec{{"step", global_step}, {"epoch", epoch}, {"lr", lr}, {"total", breakdown.total}};
            for (const auto& [k, v] : breakdown.terms) rec["terms"][k] = v;
            log << rec.dump() << "\n";
            result.loss_curve.push_back(breakdown.total);
            result.lr_curve.push_back(lr);
            ++global_step;
        }

        // validation and checkpointing
        bool final_epoch = epoch == cfg.epochs - 1;
        const bool validate_now =
            val_cases.size() > 0 && (final_epoch || (epoch + 1) % cfg.val_interval == 0);
        double val_metric = 0.0;
        if (validate_now) {
            model->set_training(false);
            const auto predictor = make_model_predictor(model, cfg);
            const MetricReport report = evaluate_cases(predictor, val_cases, cfg.eval_spec());
            val_metric = mean_foreground_dice(report);
            result.val_curve.push_back(val_metric);
            log << nlohmann::json{{"epoch", epoch}, {"val_dice", val_metric}}.dump() << "\n";
        }
        log.flush();
        const bool early_stop = cfg.stop_at_val_dice > 0.0 && validate_now && val_metric >= cfg.stop_at_val_dice;
        final_epoch |= early_stop;
        if (final_epoch || (epoch + 1) % cfg.checkpoint_interval == 0)
            save_checkpoint(result.last_path, make_checkpoint(cfg, *model, opt, epoch, global_step, best_metric));
        if (validate_now && val_metric > best_metric) {
            best_metric = val_metric;
            save_checkpoint(result.best_path, make_checkpoint(cfg, *model, opt, epoch, global_step, best_metric));
        } else if (val_cases.size() == 0 && final_epoch) {
            save_checkpoint(result.best_path, make_checkpoint(cfg, *model, opt, epoch, global_step, best_metric));
        }
        if (early_stop) break;  // the final_epoch flag above already wrote last.ckpt
    }
    result.best_metric = best_metric;
    result.steps = global_step;
    return result;
}

std::shared_ptr<SegModel<float>> model_from_checkpoint(const TrainConfig& cfg, const std::string& checkpoint_path) {
    auto model = build_model<float>(cfg.network);
    model->initialize(cfg.seed);
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    model->load_state_dict(ck.model_state, true);
    model->set_training(false);
    return model;
}

AblationRow ablation_row(const std::string& key) {
    if (key == "no1" || key == "no1_enhanced_unet") return {"no1_enhanced_unet", false, false, false};
    if (key == "no2" || key == "no2_plus_ds") return {"no2_plus_ds", true, false, false};
    if (key == "no3" || key == "no3_plus_agd_no_is") return {"no3_plus_agd_no_is", true, true, false};
    if (key == "no4" || key == "no4_full_panet") return {"no4_full_panet", true, true, true};
    throw ConfigError("unknown ablation row '" + key + "' (expected no1..no4)");
}

std::vector<AblationRow> parse_ablation_rows(const std::string& csv) {
    std::vector<AblationRow> rows;
    std::string cur;
    for (char ch : csv + ",") {
        if (ch == ',') {
            if (!cur.empty()) rows.push_back(ablation_row(cur));
            cur.clear();
        } else if (!isspace(ch)) {
            cur.push_back(ch);
        }
    }
    if (rows.empty()) throw ConfigError("ablation: no rows given");
    return rows;
}

NetworkConfig apply_ablation(const NetworkConfig& base, const AblationRow& row) {
    NetworkConfig cfg = base;
    cfg.deep_supervision = row.deep_supervision;
    cfg.agd = row.agd;
    cfg.intermediate_supervision = row.intermediate_supervision;
    return cfg;
}

int predict_and_write(const CasePredictor& predict, const CaseSource& cases, const std::string& task,
                      const std::string& output_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(output_dir);
    std::ofstream timing(fs::path(output_dir) / "timing.log", std::ios::app);
    int written = 0;
    for (size_t i = 0; i < cases.size(); ++i) {
        SegCase c;
        try {
            c = cases.load(i);
        } catch (const std::exception& e) {
            std::cerr << "skipping case '" << cases.ids[i] << "': " << e.what() << "\n";
            continue;
        }
        const auto t0 = std::chrono::steady_clock::now();
        const U8Tensor pred = predict(c);
        const double ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        timing << c.id << " " << ms << " ms\n";
        if (task == "covid-2d") {
            write_pgm((fs::path(output_dir) / (c.id + "_pred.pgm")).string(), pred);
            const Shape sp{c.image.size(1), c.image.size(2)};
            write_ppm((fs::path(output_dir) / (c.id + "_overlay.ppm")).string(),
                      overlay_labels(c.image.reshape(sp), pred, false));
        } else {
            NiftiVolume ref;
            ref.header = c.nifti_header;
            ref.spacing = c.spacing;
            write_nifti_labels((fs::path(output_dir) / (c.id + "_pred.nii.gz")).string(), pred, ref);
            // mid-axial overlay per modality
            const int64_t mods = c.image.size(0), depth = c.image.size(1);
            const int64_t h = c.image.size(2), w = c.image.size(3);
            const int64_t z = depth / 2;
            U8Tensor lab_slice({h, w});
            std::copy(pred.data() + z * h * w, pred.data() + (z + 1) * h * w, lab_slice.data());
            for (int64_t m = 0; m < mods; ++m) {
                FTensor gray({h, w});
                std::copy(c.image.data() + (m * depth + z) * h * w, c.image.data() + (m * depth + z + 1) * h * w,
                          gray.data());
                write_ppm((fs::path(output_dir) / (c.id + "_mod" + std::to_string(m) + "_overlay.ppm")).string(),
                          overlay_labels(gray, lab_slice, true));
            }
        }
        ++written;
    }
    return written;
}

}  // namespace panet
