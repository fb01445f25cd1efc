#pragma once

#include "panet/autograd/ops.hpp"
#include "panet/nn/module.hpp"

namespace panet {

enum class NormKind { None, Batch, Instance };
enum class ActKind { None, ReLU, PReLU };

template <typename T>
class Conv : public Module<T> {
  public:
    Conv(int nd, int64_t cin, int64_t cout, int64_t kernel, int64_t stride = 1, int64_t pad = -1, int64_t groups = 1,
         bool bias = true)
        : nd_(nd), stride_(nd, stride), pad_(nd, pad < 0 ? kernel / 2 : pad), groups_(groups) {
        Shape ws{cout, cin / groups};
        for (int i = 0; i < nd; ++i) ws.push_back(kernel);
        const int64_t fan_in = (cin / groups) * static_cast<int64_t>(std::pow(kernel, nd));
        weight = this->register_parameter("weight", ws, InitSpec::kaiming(fan_in));
        if (bias) this->bias = this->register_parameter("bias", {cout}, InitSpec::zeros());
    }

    Var<T> forward(const Var<T>& x) { return ops::conv_nd(x, weight, bias, stride_, pad_, groups_); }

    Var<T> weight, bias;

  private:
    int nd_;
    std::vector<int64_t> stride_, pad_;
    int64_t groups_;
};

template <typename T>
class Norm : public Module<T> {
  public:
    Norm(NormKind kind, int64_t channels) : kind_(kind) {
        if (kind == NormKind::None) return;
        gamma_ = this->register_parameter("weight", {channels}, InitSpec::ones());
        beta_ = this->register_parameter("bias", {channels}, InitSpec::zeros());
        if (kind == NormKind::Batch) {
            running_mean_ = this->register_buffer("running_mean", {channels}, InitSpec::zeros());
            running_var_ = this->register_buffer("running_var", {channels}, InitSpec::ones());
        }
    }

    Var<T> forward(const Var<T>& x) {
        switch (kind_) {
            case NormKind::None:
                return x;
            case NormKind::Batch:
                return ops::batch_norm(x, gamma_, beta_, *running_mean_, *running_var_, this->training());
            case NormKind::Instance:
                return ops::instance_norm(x, gamma_, beta_);
        }
        return x;
    }

  private:
    NormKind kind_;
    Var<T> gamma_, beta_;
    Tensor<T>* running_mean_ = nullptr;
    Tensor<T>* running_var_ = nullptr;
};

template <typename T>
class Act : public Module<T> {
  public:
    explicit Act(ActKind kind) : kind_(kind) {
        if (kind == ActKind::PReLU) slope_ = this->register_parameter("weight", {1}, InitSpec::constant(0.25));
    }

    Var<T> forward(const Var<T>& x) {
        switch (kind_) {
            case ActKind::None:
                return x;
            case ActKind::ReLU:
                return ops::relu(x);
            case ActKind::PReLU:
                return ops::prelu(x, slope_);
        }
        return x;
    }

  private:
    ActKind kind_;
    Var<T> slope_;
};

// conv -> norm -> act; bias is dropped when a norm follows.
template <typename T>
class ConvBlock : public Module<T> {
  public:
    ConvBlock(int nd, int64_t cin, int64_t cout, int64_t kernel, NormKind norm, ActKind act, int64_t stride = 1,
              int64_t groups = 1)
        : conv_(this->template register_module<Conv<T>>(
              "conv", std::make_shared<Conv<T>>(nd, cin, cout, kernel, stride, -1, groups, norm == NormKind::None))),
          norm_(this->template register_module<Norm<T>>("norm", std::make_shared<Norm<T>>(norm, cout))),
          act_(this->template register_module<Act<T>>("act", std::make_shared<Act<T>>(act))) {}

    Var<T> forward(const Var<T>& x) { return act_->forward(norm_->forward(conv_->forward(x))); }

  private:
    std::shared_ptr<Conv<T>> conv_;
    std::shared_ptr<Norm<T>> norm_;
    std::shared_ptr<Act<T>> act_;
};

}  // namespace panet
