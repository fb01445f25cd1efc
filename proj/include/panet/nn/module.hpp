#pragma once

#include <map>
#include <memory>
#include <utility>

#include "panet/autograd/var.hpp"
#include "panet/core/rng.hpp"

namespace panet {

struct InitSpec {
    enum Kind { Zeros, Ones, Constant, KaimingNormal } kind = Zeros;
    double value = 0.0;    // Constant
    int64_t fan_in = 1;    // KaimingNormal

    static InitSpec zeros() { return {Zeros, 0.0, 1}; }
    static InitSpec ones() { return {Ones, 0.0, 1}; }
    static InitSpec constant(double v) { return {Constant, v, 1}; }
    static InitSpec kaiming(int64_t fan_in) { return {KaimingNormal, 0.0, fan_in}; }
};

// Module tree with name-addressed parameters and buffers. Initialization is a
// separate pass over fully-qualified names, so a tensor's init stream depends
// only on (seed, name) and never on what else exists in the model.
template <typename T>
class Module {
  public:
    virtual ~Module() = default;

    Var<T> register_parameter(const std::string& name, Shape shape, InitSpec init) {
        auto v = parameter(Tensor<T>::zeros(std::move(shape)));
        params_.emplace_back(name, ParamEntry{v, init});
        return v;
    }

    Tensor<T>* register_buffer(const std::string& name, Shape shape, InitSpec init) {
        auto t = std::make_shared<Tensor<T>>(std::move(shape));
        buffers_.emplace_back(name, BufferEntry{t, init});
        return t.get();
    }

    template <typename M>
    std::shared_ptr<M> register_module(const std::string& name, std::shared_ptr<M> m) {
        children_.emplace_back(name, m);
        return m;
    }

    void set_training(bool on) {
        training_ = on;
        for (auto& [name, child] : children_) child->set_training(on);
    }
    bool training() const { return training_; }

    void named_parameters(std::vector<std::pair<std::string, Var<T>>>& out, const std::string& prefix = "") const {
        for (const auto& [name, entry] : params_) out.emplace_back(join(prefix, name), entry.var);
        for (const auto& [name, child] : children_) child->named_parameters(out, join(prefix, name));
    }

    void named_buffers(std::vector<std::pair<std::string, Tensor<T>*>>& out, const std::string& prefix = "") const {
        for (const auto& [name, entry] : buffers_) out.emplace_back(join(prefix, name), entry.tensor.get());
        for (const auto& [name, child] : children_) child->named_buffers(out, join(prefix, name));
    }

    int64_t parameter_count() const {
        std::vector<std::pair<std::string, Var<T>>> ps;
        named_parameters(ps);
        int64_t total = 0;
        for (auto& [name, v] : ps) total += v->value.numel();
        return total;
    }

    void initialize(uint64_t seed, const std::string& prefix = "") {
        for (auto& [name, entry] : params_) fill(entry.var->value, entry.init, seed, join(prefix, name));
        for (auto& [name, entry] : buffers_) fill(*entry.tensor, entry.init, seed, join(prefix, name));
        for (auto& [name, child] : children_) child->initialize(seed, join(prefix, name));
    }

    std::map<std::string, Tensor<T>> state_dict() const {
        std::map<std::string, Tensor<T>> out;
        std::vector<std::pair<std::string, Var<T>>> ps;
        named_parameters(ps);
        for (auto& [name, v] : ps) out[name] = v->value;
        std::vector<std::pair<std::string, Tensor<T>*>> bs;
        named_buffers(bs);
        for (auto& [name, t] : bs) out[name] = *t;
        return out;
    }

    // Copies values in place; shapes must match. `strict` also rejects
    // missing or unexpected entries.
    void load_state_dict(const std::map<std::string, Tensor<T>>& sd, bool strict = true) {
        std::vector<std::pair<std::string, Var<T>>> ps;
        named_parameters(ps);
        std::vector<std::pair<std::string, Tensor<T>*>> bs;
        named_buffers(bs);
        std::map<std::string, Tensor<T>*> targets;
        for (auto& [name, v] : ps) targets[name] = &v->value;
        for (auto& [name, t] : bs) targets[name] = t;
        for (auto& [name, tensor] : sd) {
            auto it = targets.find(name);
            if (it == targets.end()) {
                if (strict) throw CheckpointError("state dict entry '" + name + "' does not exist in the model");
                continue;
            }
            if (!same_shape(it->second->shape(), tensor.shape()))
                throw CheckpointError("state dict entry '" + name + "' has shape " + shape_str(tensor.shape()) +
                                      " but the model expects " + shape_str(it->second->shape()));
            std::copy(tensor.data(), tensor.data() + tensor.numel(), it->second->data());
            targets.erase(it);
        }
        if (strict && !targets.empty())
            throw CheckpointError("state dict is missing entry '" + targets.begin()->first + "' (and possibly others)");
    }

  private:
    struct ParamEntry {
        Var<T> var;
        InitSpec init;
    };
    struct BufferEntry {
        std::shared_ptr<Tensor<T>> tensor;
        InitSpec init;
    };

    static std::string join(const std::string& prefix, const std::string& name) {
        return prefix.empty() ? name : prefix + "." + name;
    }

    static void fill(Tensor<T>& t, const InitSpec& spec, uint64_t seed, const std::string& full_name) {
        switch (spec.kind) {
            case InitSpec::Zeros:
                t.fill(T(0));
                break;
            case InitSpec::Ones:
                t.fill(T(1));
                break;
            case InitSpec::Constant:
                t.fill(static_cast<T>(spec.value));
                break;
            case InitSpec::KaimingNormal: {
                Rng rng = named_rng(seed, full_name);
                const double std = std::sqrt(2.0 / static_cast<double>(spec.fan_in));
                for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.normal() * std);
                break;
            }
        }
    }

    std::vector<std::pair<std::string, ParamEntry>> params_;
    std::vector<std::pair<std::string, BufferEntry>> buffers_;
    std::vector<std::pair<std::string, std::shared_ptr<Module<T>>>> children_;
    bool training_ = true;
};

}  // namespace panet
