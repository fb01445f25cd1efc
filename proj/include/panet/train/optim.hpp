#pragma once

#include <cmath>
#include <cstring>
#include <map>

#include "panet/autograd/var.hpp"
#include "panet/core/half.hpp"

namespace panet {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-5;

    void validate() const {
        if (lr <= 0 || eps <= 0) throw ConfigError("optimizer: lr and eps must be positive");
        if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw ConfigError("optimizer: betas must lie in [0,1)");
        if (weight_decay < 0) throw ConfigError("optimizer: weight_decay must be non-negative");
    }
};

// lr(t) = lr0 * 1/2 (1 + cos(pi t / T)).
inline double cosine_lr(double lr0, int64_t step, int64_t total_steps) {
    if (total_steps <= 0) return lr0;
    return lr0 * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step) / static_cast<double>(total_steps)));
}

// Adam with decoupled weight decay: the decay multiplies the parameter
// directly, so an unused parameter shrinks geometrically by (1 - lr*wd) per
// step and stays untouched when wd = 0.
class AdamW {
  public:
    AdamW(std::vector<std::pair<std::string, FVar>> params, AdamConfig cfg)
        : params_(std::move(params)), cfg_(cfg) {
        cfg_.validate();
        for (auto& [name, p] : params_) {
            m_.push_back(FTensor::zeros(p->value.shape()));
            v_.push_back(FTensor::zeros(p->value.shape()));
        }
    }

    void zero_grad() {
        for (auto& [name, p] : params_) p->grad = FTensor();
    }

    void scale_grads(double k) {
        for (auto& [name, p] : params_) {
            if (!p->grad.defined()) continue;
            for (int64_t i = 0; i < p->grad.numel(); ++i) p->grad[i] = static_cast<float>(p->grad[i] * k);
        }
    }

    bool grads_finite() const {
        for (const auto& [name, p] : params_)
            if (p->grad.defined() && !p->grad.all_finite()) return false;
        return true;
    }

    void step(double lr) {
        ++t_;
        const float b1 = static_cast<float>(cfg_.beta1), b2 = static_cast<float>(cfg_.beta2);
        const float inv_bc1 = static_cast<float>(1.0 / (1.0 - std::pow(cfg_.beta1, static_cast<double>(t_))));
        const float inv_bc2 = static_cast<float>(1.0 / (1.0 - std::pow(cfg_.beta2, static_cast<double>(t_))));
        const float eps = static_cast<float>(cfg_.eps);
        const float step_size = static_cast<float>(lr);
        const float decay = static_cast<float>(lr * cfg_.weight_decay);
        for (size_t j = 0; j < params_.size(); ++j) {
            FVar& p = params_[j].second;
            float* pv = p->value.data();
            float* m = m_[j].data();
            float* v = v_[j].data();
            const float* g = p->grad.defined() ? p->grad.data() : nullptr;
            const int64_t n = p->value.numel();
            if (g) {
                for (int64_t i = 0; i < n; ++i) {
                    m[i] = b1 * m[i] + (1.0f - b1) * g[i];
                    v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
                    pv[i] -= step_size * (m[i] * inv_bc1) / (std::sqrt(v[i] * inv_bc2) + eps) + decay * pv[i];
                }
            } else {
                for (int64_t i = 0; i < n; ++i) {
                    if (m[i] == 0.0f && v[i] == 0.0f) {
                        pv[i] *= 1.0f - decay;  // untouched parameter: pure geometric decay
                        continue;
                    }
                    m[i] *= b1;
                    v[i] *= b2;
                    pv[i] -= step_size * (m[i] * inv_bc1) / (std::sqrt(v[i] * inv_bc2) + eps) + decay * pv[i];
                }
            }
        }
    }

    std::map<std::string, FTensor> export_state() const {
        std::map<std::string, FTensor> out;
        for (size_t j = 0; j < params_.size(); ++j) {
            out[params_[j].first + ".m"] = m_[j];
            out[params_[j].first + ".v"] = v_[j];
        }
        out["__t"] = FTensor({1}, static_cast<float>(t_));
        return out;
    }

    void import_state(const std::map<std::string, FTensor>& state) {
        for (size_t j = 0; j < params_.size(); ++j) {
            const auto m = state.find(params_[j].first + ".m");
            const auto v = state.find(params_[j].first + ".v");
            if (m == state.end() || v == state.end())
                throw CheckpointError("optimizer state is missing moments for '" + params_[j].first + "'");
            if (!same_shape(m->second.shape(), m_[j].shape()))
                throw CheckpointError("optimizer state shape mismatch for '" + params_[j].first + "'");
            m_[j] = m->second.clone();
            v_[j] = v->second.clone();
        }
        const auto t = state.find("__t");
        t_ = t != state.end() ? static_cast<int64_t>(t->second[0]) : 0;
    }

    int64_t steps_taken() const { return t_; }

  private:
    std::vector<std::pair<std::string, FVar>> params_;
    std::vector<FTensor> m_, v_;
    AdamConfig cfg_;
    int64_t t_ = 0;
};

// Dynamic loss scaling for the simulated mixed-precision mode: grow the scale
// every `growth_interval` clean steps, halve it and skip the step when a
// non-finite gradient shows up.
struct LossScaler {
    bool enabled = false;
    double scale = 65536.0;
    int64_t growth_interval = 2000;
    int64_t good_steps = 0;

    double loss_seed() const { return enabled ? scale : 1.0; }

    // Returns true when the step should be applied.
    bool unscale_and_check(AdamW& opt) {
        if (!enabled) return true;
        opt.scale_grads(1.0 / scale);
        const bool finite = opt.grads_finite();
        if (finite) {
            if (++good_steps % growth_interval == 0) scale = std::min(scale * 2.0, 16777216.0);
        } else {
            scale = std::max(scale * 0.5, 1.0);
            good_steps = 0;
        }
        return finite;
    }
};

}  // namespace panet
