#pragma once

#include "panet/metrics.hpp"
#include "panet/train/config.hpp"

namespace panet {

struct TrainResult {
    std::vector<double> loss_curve;   // total loss per optimizer step
    std::vector<double> lr_curve;     // learning rate per step
    std::vector<double> val_curve;    // validation mean foreground Dice per epoch
    std::string best_path, last_path;
    double best_metric = -1.0;
    int64_t steps = 0;
};

// Case -> predicted label map.
using CasePredictor = std::function<U8Tensor(const SegCase&)>;

// Inference wrapper matching the task: direct slice prediction for 2D,
// z-scored sliding-window region decoding plus ET suppression for 3D.
CasePredictor make_model_predictor(const std::shared_ptr<SegModel<float>>& model, const TrainConfig& cfg);

MetricReport evaluate_cases(const CasePredictor& predict, const CaseSource& cases, EvalSpec spec,
                            const HdOptions& hd = {});

// Mean foreground Dice over all cases and classes (checkpoint selection).
double mean_foreground_dice(const MetricReport& report);

TrainResult run_training(const TrainConfig& cfg, const CaseSource& train_cases, const CaseSource& val_cases,
                         const std::string& resume_path = "");

// Builds the configured model and restores its weights from a checkpoint.
std::shared_ptr<SegModel<float>> model_from_checkpoint(const TrainConfig& cfg, const std::string& checkpoint_path);

// Writes predicted masks and color overlays, one set per case. Unreadable
// cases are skipped with a logged reason; returns the number written.
int predict_and_write(const CasePredictor& predict, const CaseSource& cases, const std::string& task,
                      const std::string& output_dir);

// Ablation matrix (rows of the tables): DS / AGD / IS switches.
struct AblationRow {
    std::string name;
    bool deep_supervision = false;
    bool agd = false;
    bool intermediate_supervision = false;
};

AblationRow ablation_row(const std::string& key);  // accepts no1..no4 or the long names
std::vector<AblationRow> parse_ablation_rows(const std::string& csv);
NetworkConfig apply_ablation(const NetworkConfig& base, const AblationRow& row);

}  // namespace panet
