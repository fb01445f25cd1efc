#include <fstream>

#include "panet/train/config.hpp"

namespace panet {

namespace {

template <typename T>
void get_to(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

OutputMode output_mode_from_string(const std::string& s) {
    if (s == "softmax-labels") return OutputMode::SoftmaxLabels;
    if (s == "sigmoid-regions") return OutputMode::SigmoidRegions;
    throw ConfigError("unknown output_mode '" + s + "'");
}

std::string output_mode_to_string(OutputMode m) {
    return m == OutputMode::SoftmaxLabels ? "softmax-labels" : "sigmoid-regions";
}

BinaryLossKind binary_loss_from_string(const std::string& s) {
    if (s == "dice+focal") return BinaryLossKind::DiceFocal;
    if (s == "dice+ce") return BinaryLossKind::DiceCE;
    throw ConfigError("unknown binary loss '" + s + "' (expected dice+focal or dice+ce)");
}

MulticlassLossKind multiclass_loss_from_string(const std::string& s) {
    if (s == "focal_tversky") return MulticlassLossKind::FocalTversky;
    if (s == "dice+ce") return MulticlassLossKind::DiceCE;
    throw ConfigError("unknown multiclass loss '" + s + "' (expected focal_tversky or dice+ce)");
}

}  // namespace

void TrainConfig::validate() const {
    if (task != "covid-2d" && task != "brats-3d") throw ConfigError("config: unknown task '" + task + "'");
    if ((task == "covid-2d") != (network.encoder.dimensionality == 2))
        throw ConfigError("config: task and encoder dimensionality disagree");
    network.validate();
    loss.validate();
    optimizer.validate();
    if (batch_size < 1 || epochs < 1) throw ConfigError("config: batch_size and epochs must be positive");
    if (checkpoint_interval < 1) throw ConfigError("config: checkpoint_interval must be positive");
    if (val_interval < 1) throw ConfigError("config: val_interval must be positive");
    if (stop_at_val_dice < 0.0 || stop_at_val_dice > 1.0)
        throw ConfigError("config: stop_at_val_dice must lie in [0,1]");
    if (data.val_mode != "holdout" && data.val_mode != "kfold")
        throw ConfigError("config: val_mode must be holdout or kfold");
    if (data.val_mode == "kfold" && (data.fold_index < 0 || data.fold_index >= data.folds))
        throw ConfigError("config: fold_index outside [0, folds)");
    if (data.val_mode == "holdout" && (data.val_fraction < 0.0 || data.val_fraction >= 1.0))
        throw ConfigError("config: val_fraction must lie in [0,1)");
    if (select != "best" && select != "last") throw ConfigError("config: select must be best or last");
    inference.validate();
    if (region_threshold <= 0.0 || region_threshold >= 1.0)
        throw ConfigError("config: region_threshold must lie in (0,1)");
}

EvalSpec TrainConfig::eval_spec() const { return eval_spec_from_string(task); }

int64_t TrainConfig::network_input_size() const { return data.augment.crop_2d; }

TrainConfig default_config(const std::string& task) {
    TrainConfig cfg;
    cfg.task = task;
    cfg.data.augment.task = task;
    if (task == "covid-2d") {
        cfg.network.encoder.dimensionality = 2;
        cfg.network.encoder.in_channels = 1;
        cfg.network.num_classes = 3;
        cfg.network.output_mode = OutputMode::SoftmaxLabels;
        cfg.loss.binary_loss = BinaryLossKind::DiceFocal;
        cfg.loss.multiclass_loss = MulticlassLossKind::FocalTversky;
        cfg.batch_size = 4;
        cfg.epochs = 40;
        cfg.data.test_count = 15;
        cfg.inference.patch = {512, 512};
    } else if (task == "brats-3d") {
        cfg.network.encoder.dimensionality = 3;
        cfg.network.encoder.in_channels = 4;
        cfg.network.encoder.base_channels = 16;
        cfg.network.encoder.blocks_per_stage = 3;
        cfg.network.num_classes = 3;
        cfg.network.output_mode = OutputMode::SigmoidRegions;
        cfg.loss.binary_loss = BinaryLossKind::DiceCE;
        cfg.loss.multiclass_loss = MulticlassLossKind::DiceCE;
        cfg.batch_size = 1;
        cfg.epochs = 200;
        cfg.data.test_count = 0;
        cfg.inference.patch = {128, 128, 128};
    } else {
        throw ConfigError("unknown task '" + task + "'");
    }
    return cfg;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    if (!j.contains("task")) throw ConfigError("config: missing 'task'");
    TrainConfig cfg = default_config(j.at("task").get<std::string>());
    if (j.contains("network")) {
        const auto& jn = j.at("network");
        get_to(jn, "num_classes", cfg.network.num_classes);
        if (jn.contains("output_mode")) cfg.network.output_mode = output_mode_from_string(jn.at("output_mode"));
        get_to(jn, "deep_supervision", cfg.network.deep_supervision);
        get_to(jn, "agd", cfg.network.agd);
        get_to(jn, "intermediate_supervision", cfg.network.intermediate_supervision);
        get_to(jn, "attention_detached", cfg.network.attention_detached);
        get_to(jn, "decoder_channels", cfg.network.decoder_channels);
        get_to(jn, "agd_fuse_kernel", cfg.network.agd_fuse_kernel);
        get_to(jn, "agd_fuse_norm_act", cfg.network.agd_fuse_norm_act);
        if (jn.contains("encoder")) {
            const auto& je = jn.at("encoder");
            get_to(je, "in_channels", cfg.network.encoder.in_channels);
            get_to(je, "base_channels", cfg.network.encoder.base_channels);
            get_to(je, "blocks_per_stage", cfg.network.encoder.blocks_per_stage);
            get_to(je, "pretrained_weights", cfg.network.encoder.pretrained_weights_path);
        }
    }
    if (j.contains("loss")) {
        const auto& jl = j.at("loss");
        if (jl.contains("binary")) cfg.loss.binary_loss = binary_loss_from_string(jl.at("binary"));
        if (jl.contains("multiclass")) cfg.loss.multiclass_loss = multiclass_loss_from_string(jl.at("multiclass"));
        get_to(jl, "focal_gamma", cfg.loss.focal_gamma);
        get_to(jl, "focal_alpha", cfg.loss.focal_alpha);
        get_to(jl, "tversky_alpha", cfg.loss.tversky_alpha);
        get_to(jl, "tversky_beta", cfg.loss.tversky_beta);
        get_to(jl, "ftl_exponent", cfg.loss.ftl_exponent);
        get_to(jl, "dice_smooth", cfg.loss.dice_smooth);
    }
    if (j.contains("optimizer")) {
        const auto& jo = j.at("optimizer");
        get_to(jo, "lr", cfg.optimizer.lr);
        get_to(jo, "beta1", cfg.optimizer.beta1);
        get_to(jo, "beta2", cfg.optimizer.beta2);
        get_to(jo, "eps", cfg.optimizer.eps);
        get_to(jo, "weight_decay", cfg.optimizer.weight_decay);
    }
    if (j.contains("data")) {
        const auto& jd = j.at("data");
        get_to(jd, "manifest", cfg.data.manifest);
        get_to(jd, "test_count", cfg.data.test_count);
        get_to(jd, "split_seed", cfg.data.split_seed);
        get_to(jd, "val_mode", cfg.data.val_mode);
        get_to(jd, "val_fraction", cfg.data.val_fraction);
        get_to(jd, "folds", cfg.data.folds);
        get_to(jd, "fold_index", cfg.data.fold_index);
        if (jd.contains("augment")) {
            const auto& ja = jd.at("augment");
            AugmentPolicy& p = cfg.data.augment;
            get_to(ja, "resize_to", p.resize_to);
            get_to(ja, "enable_resize", p.enable_resize);
            get_to(ja, "brightness", p.brightness);
            get_to(ja, "contrast", p.contrast);
            get_to(ja, "enable_intensity", p.enable_intensity_2d);
            get_to(ja, "rotate_deg", p.rotate_deg);
            get_to(ja, "scale_jitter", p.scale_jitter);
            get_to(ja, "shift_frac", p.shift_frac);
            get_to(ja, "enable_affine", p.enable_affine);
            get_to(ja, "crop", p.crop_2d);
            get_to(ja, "enable_crop", p.enable_crop);
            get_to(ja, "elastic_sigma_px", p.elastic_sigma_px);
            get_to(ja, "elastic_grid", p.elastic_grid_2d);
            get_to(ja, "enable_elastic", p.enable_elastic);
            get_to(ja, "enable_znorm", p.enable_znorm);
            get_to(ja, "enable_flip", p.enable_flip);
            get_to(ja, "intensity_shift", p.intensity_shift);
            get_to(ja, "intensity_scale", p.intensity_scale);
            get_to(ja, "enable_intensity_3d", p.enable_intensity_3d);
            get_to(ja, "elastic_magnitude_vox", p.elastic_magnitude_vox);
            get_to(ja, "elastic_grid_3d", p.elastic_grid_3d);
            get_to(ja, "crop_3d", p.crop_3d);
        }
    }
    get_to(j, "batch_size", cfg.batch_size);
    get_to(j, "epochs", cfg.epochs);
    get_to(j, "seed", cfg.seed);
    get_to(j, "mixed_precision", cfg.mixed_precision);
    get_to(j, "checkpoint_dir", cfg.checkpoint_dir);
    get_to(j, "checkpoint_interval", cfg.checkpoint_interval);
    get_to(j, "val_interval", cfg.val_interval);
    get_to(j, "stop_at_val_dice", cfg.stop_at_val_dice);
    get_to(j, "log_path", cfg.log_path);
    get_to(j, "select", cfg.select);
    if (j.contains("inference")) {
        const auto& ji = j.at("inference");
        get_to(ji, "patch", cfg.inference.patch);
        get_to(ji, "overlap", cfg.inference.overlap);
    }
    get_to(j, "et_suppress_min_voxels", cfg.et_suppress_min_voxels);
    get_to(j, "region_threshold", cfg.region_threshold);
    cfg.validate();
    return cfg;
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
    nlohmann::json j;
    j["task"] = cfg.task;
    j["network"] = {
        {"num_classes", cfg.network.num_classes},
        {"output_mode", output_mode_to_string(cfg.network.output_mode)},
        {"deep_supervision", cfg.network.deep_supervision},
        {"agd", cfg.network.agd},
        {"intermediate_supervision", cfg.network.intermediate_supervision},
        {"attention_detached", cfg.network.attention_detached},
        {"decoder_channels", cfg.network.decoder_channels},
        {"agd_fuse_kernel", cfg.network.agd_fuse_kernel},
        {"agd_fuse_norm_act", cfg.network.agd_fuse_norm_act},
        {"encoder",
         {{"in_channels", cfg.network.encoder.in_channels},
          {"base_channels", cfg.network.encoder.base_channels},
          {"blocks_per_stage", cfg.network.encoder.blocks_per_stage},
          {"pretrained_weights", cfg.network.encoder.pretrained_weights_path}}}};
    j["loss"] = {{"binary", cfg.loss.binary_loss == BinaryLossKind::DiceFocal ? "dice+focal" : "dice+ce"},
                 {"multiclass",
                  cfg.loss.multiclass_loss == MulticlassLossKind::FocalTversky ? "focal_tversky" : "dice+ce"},
                 {"focal_gamma", cfg.loss.focal_gamma},
                 {"focal_alpha", cfg.loss.focal_alpha},
                 {"tversky_alpha", cfg.loss.tversky_alpha},
                 {"tversky_beta", cfg.loss.tversky_beta},
                 {"ftl_exponent", cfg.loss.ftl_exponent},
                 {"dice_smooth", cfg.loss.dice_smooth}};
    j["optimizer"] = {{"lr", cfg.optimizer.lr},
                      {"beta1", cfg.optimizer.beta1},
                      {"beta2", cfg.optimizer.beta2},
                      {"eps", cfg.optimizer.eps},
                      {"weight_decay", cfg.optimizer.weight_decay}};
    const AugmentPolicy& p = cfg.data.augment;
    j["data"] = {{"manifest", cfg.data.manifest},
                 {"test_count", cfg.data.test_count},
                 {"split_seed", cfg.data.split_seed},
                 {"val_mode", cfg.data.val_mode},
                 {"val_fraction", cfg.data.val_fraction},
                 {"folds", cfg.data.folds},
                 {"fold_index", cfg.data.fold_index},
                 {"augment",
                  {{"enable_resize", p.enable_resize},
                   {"resize_to", p.resize_to},
                   {"enable_intensity", p.enable_intensity_2d},
                   {"brightness", p.brightness},
                   {"contrast", p.contrast},
                   {"enable_affine", p.enable_affine},
                   {"rotate_deg", p.rotate_deg},
                   {"scale_jitter", p.scale_jitter},
                   {"shift_frac", p.shift_frac},
                   {"enable_crop", p.enable_crop},
                   {"crop", p.crop_2d},
                   {"enable_elastic", p.enable_elastic},
                   {"elastic_sigma_px", p.elastic_sigma_px},
                   {"elastic_grid", p.elastic_grid_2d},
                   {"enable_znorm", p.enable_znorm},
                   {"enable_flip", p.enable_flip},
                   {"enable_intensity_3d", p.enable_intensity_3d},
                   {"intensity_shift", p.intensity_shift},
                   {"intensity_scale", p.intensity_scale},
                   {"elastic_magnitude_vox", p.elastic_magnitude_vox},
                   {"elastic_grid_3d", p.elastic_grid_3d},
                   {"crop_3d", p.crop_3d}}}};
    j["batch_size"] = cfg.batch_size;
    j["epochs"] = cfg.epochs;
    j["seed"] = cfg.seed;
    j["mixed_precision"] = cfg.mixed_precision;
    j["checkpoint_dir"] = cfg.checkpoint_dir;
    j["checkpoint_interval"] = cfg.checkpoint_interval;
    j["val_interval"] = cfg.val_interval;
    j["stop_at_val_dice"] = cfg.stop_at_val_dice;
    j["log_path"] = cfg.log_path;
    j["select"] = cfg.select;
    j["inference"] = {{"patch", cfg.inference.patch}, {"overlap", cfg.inference.overlap}};
    j["et_suppress_min_voxels"] = cfg.et_suppress_min_voxels;
    j["region_threshold"] = cfg.region_threshold;
    return j;
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file '" + path + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    try {
        return train_config_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config '" + path + "': " + e.what());
    }
}

}  // namespace panet
