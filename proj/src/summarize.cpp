#include <iomanip>
#include <sstream>

#include "panet/train/summarize.hpp"

namespace panet {

SummarizeResult summarize_model(SegModel<float>& model, const std::vector<int64_t>& input_spatial) {
    SummarizeResult r;
    r.params = model.parameter_count();
    Shape in{1, model.config().encoder.in_channels};
    for (int64_t v : input_spatial) in.push_back(v);
    model.set_training(false);
    {
        NoGradGuard no_grad;
        mac_counter().active = true;
        mac_counter().macs = 0.0;
        model.forward(constant(FTensor::zeros(in)));
        r.macs = mac_counter().macs;
        mac_counter().active = false;
    }
    r.flops = 2.0 * r.macs;
    if (auto* panet = dynamic_cast<PANet<float>*>(&model); panet && panet->skip_fusion())
        r.alphas = panet->skip_fusion()->alpha_values();
    return r;
}

std::string format_summary(const SummarizeResult& r, const std::string& name) {
    std::ostringstream os;
    os << std::fixed;
    os << "model:    " << name << "\n";
    os << "params:   " << std::setprecision(2) << r.params / 1e6 << "M (" << r.params << ")\n";
    os << "macs:     " << std::setprecision(2) << r.macs / 1e9 << " GMACs\n";
    os << "flops:    " << std::setprecision(2) << r.flops / 1e9 << " GFLOPs (2 x MACs)\n";
    if (!r.alphas.empty()) {
        os << "alpha:    [";
        for (size_t i = 0; i < r.alphas.size(); ++i) os << (i ? ", " : "") << std::setprecision(4) << r.alphas[i];
        os << "]\n";
    }
    return os.str();
}

}  // namespace panet
