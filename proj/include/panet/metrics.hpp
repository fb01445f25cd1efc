#pragma once

#include <map>
#include <optional>
#include <string>

#include "panet/core/tensor.hpp"

namespace panet {

struct ConfusionCounts {
    int64_t tp = 0, fp = 0, tn = 0, fn = 0;
    int64_t total() const { return tp + fp + tn + fn; }
};

ConfusionCounts confusion_counts(const U8Tensor& pred, const U8Tensor& gt);

// Eqs. of the usual overlap metrics. Degenerate denominators follow the
// empty-mask conventions described in the README.
double dice_score(const ConfusionCounts& c);
double precision_score(const ConfusionCounts& c);
double recall_score(const ConfusionCounts& c);

struct HdOptions {
    double percentile = 95.0;
    double empty_penalty = 373.13;  // external portal convention, not a paper value
};

// Percentile of the pooled symmetric surface-distance set, in millimetres.
// percentile=100 recovers the classical Hausdorff distance exactly.
double hausdorff_distance(const U8Tensor& pred, const U8Tensor& gt, const std::vector<double>& spacing_mm,
                          const HdOptions& opts = {});

// Exact Euclidean distance transform (squared distances) of a feature mask on
// an anisotropic grid. Exposed for oracle tests.
std::vector<double> squared_edt(const std::vector<uint8_t>& features, const Shape& shape,
                                const std::vector<double>& spacing);

// Linear-interpolation percentile of an unsorted sample set.
double percentile_value(std::vector<double> values, double q);

struct ClassMetrics {
    double dice = 0, precision = 0, recall = 0, hd95 = 0;
    ConfusionCounts counts;
};

struct CaseRecord {
    std::map<std::string, ClassMetrics> per_class;
};

// "GGO"/"CON." for the 2-lesion slice task, "ET"/"TC"/"WT" regions for the
// brain task.
enum class EvalSpec { Covid2d, Brats3d };

EvalSpec eval_spec_from_string(const std::string& s);
std::vector<std::string> eval_class_names(EvalSpec spec);

CaseRecord evaluate_case(const U8Tensor& pred_labels, const U8Tensor& gt_labels, EvalSpec spec,
                         const std::vector<double>& spacing_mm, const HdOptions& hd = {});

struct Aggregate {
    double mean = 0, stddev = 0;
};

struct MetricReport {
    std::map<std::string, CaseRecord> per_case;

    // mean/std per class and metric, recomputed from the per-case records
    std::map<std::string, std::map<std::string, Aggregate>> aggregate() const;
    std::string format_table(const std::string& model_name) const;
    std::string to_json() const;
};

MetricReport merge_reports(const MetricReport& a, const MetricReport& b);

}  // namespace panet
