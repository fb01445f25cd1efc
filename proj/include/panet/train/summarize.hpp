#pragma once

#include "panet/model/models.hpp"

namespace panet {

struct SummarizeResult {
    int64_t params = 0;
    double macs = 0.0;           // conv multiply-accumulates at the given input size
    double flops = 0.0;          // 2 * macs
    std::vector<double> alphas;  // skip-fusion magnitudes (PANet only)
};

// Exact parameter count plus analytic conv MAC count from a traced forward at
// the given input size. Normalization and activation costs are excluded.
SummarizeResult summarize_model(SegModel<float>& model, const std::vector<int64_t>& input_spatial);

std::string format_summary(const SummarizeResult& r, const std::string& name);

}  // namespace panet
