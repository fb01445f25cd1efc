#pragma once

#include "json.hpp"
#include "panet/data/augment.hpp"
#include "panet/infer/inference.hpp"
#include "panet/metrics.hpp"
#include "panet/losses.hpp"
#include "panet/model/models.hpp"
#include "panet/train/optim.hpp"

namespace panet {

struct DataConfig {
    std::string manifest;
    int64_t test_count = 15;
    uint64_t split_seed = 42;
    std::string val_mode = "holdout";  // holdout | kfold
    double val_fraction = 0.1;
    int folds = 5;
    int fold_index = 0;
    AugmentPolicy augment;
};

struct TrainConfig {
    std::string task = "covid-2d";  // covid-2d | brats-3d
    NetworkConfig network;
    LossConfig loss;
    AdamConfig optimizer;
    DataConfig data;
    int64_t batch_size = 4;
    int64_t epochs = 40;
    uint64_t seed = 42;
    bool mixed_precision = false;
    std::string checkpoint_dir = "checkpoints";
    int64_t checkpoint_interval = 1;  // epochs between periodic "last" saves
    int64_t val_interval = 1;         // epochs between validation passes
    double stop_at_val_dice = 0.0;    // early stop once validation Dice reaches this (0: off)
    std::string log_path = "train_log.jsonl";
    std::string select = "best";  // checkpoint used by evaluate/predict: best | last
    SlidingWindowSpec inference;
    int64_t et_suppress_min_voxels = 500;
    double region_threshold = 0.5;

    void validate() const;
    EvalSpec eval_spec() const;
    int64_t network_input_size() const;  // training crop edge (2D)
};

// Task-appropriate defaults (loss combination, normalization, batch size,
// augmentation) before file overrides are applied.
TrainConfig default_config(const std::string& task);

TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig load_train_config(const std::string& path);

}  // namespace panet
