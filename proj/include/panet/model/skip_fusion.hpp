#pragma once

#include "panet/model/agd.hpp"

namespace panet {

// Parameterized residual skip refinement: F_r = alpha_i * F + Y (*) F with one
// learnable scalar per pyramid level, initialized to 1.
template <typename T>
class SkipFusion : public Module<T> {
  public:
    explicit SkipFusion(int levels = 5) {
        if (levels != 5) throw ConfigError("skip_fusion: expected 5 pyramid levels, got " + std::to_string(levels));
        for (int i = 0; i < levels; ++i)
            alphas_.push_back(this->register_parameter("alpha." + std::to_string(i), {1}, InitSpec::constant(1.0)));
    }

    // y must already be resized to f's spatial extent.
    Var<T> refine(const Var<T>& f, const Var<T>& y, int level, bool detach_attention = false) {
        const Var<T> ym = detach_attention ? ops::stop_gradient(y) : y;
        return ops::add(ops::scale_param(f, alphas_.at(static_cast<size_t>(level))), ops::mul_map(f, ym));
    }

    std::vector<double> alpha_values() const {
        std::vector<double> out;
        for (const auto& a : alphas_) out.push_back(static_cast<double>(a->value[0]));
        return out;
    }

    const std::vector<Var<T>>& alphas() const { return alphas_; }

  private:
    std::vector<Var<T>> alphas_;
};

}  // namespace panet
