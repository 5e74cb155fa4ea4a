#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lclip/autodiff.hpp"
#include "lclip/tensor.hpp"

namespace lclip {

// Trainable (or frozen) tensor with its accumulated gradient. Gradient
// accumulation is serialized per training step; frozen params never receive
// any accumulation.
template <class T>
struct ParamT {
  std::string name;
  TensorT<T> value;
  TensorT<T> grad;
  bool trainable = true;
  bool frozen = false;

  ParamT() = default;
  ParamT(std::string n, TensorT<T> v, bool frozen_ = false)
      : name(std::move(n)), value(std::move(v)),
        grad(TensorT<T>::zeros(value.shape())), frozen(frozen_) {}

  void zero_grad() { grad = TensorT<T>::zeros(value.shape()); }
  bool receives_grad() const { return trainable && !frozen; }
  std::size_t numel() const { return value.numel(); }
};

// Per-forward binding of params to graph leaves. Frozen params bind as
// constants so no graph work happens for them; after backward() the leaf
// gradients are accumulated into the Param storage in binding order.
template <class T>
class Graph {
public:
  enum class Mode { train, inference };

  explicit Graph(Mode mode = Mode::train) : mode_(mode) {}

  ad::Var<T> param(ParamT<T>& p) {
    auto it = bound_.find(&p);
    if (it != bound_.end()) return it->second;
    const bool wants = mode_ == Mode::train && p.receives_grad();
    auto v = ad::leaf<T>(p.value, wants);
    bound_.emplace(&p, v);
    if (wants) order_.emplace_back(&p, v);
    return v;
  }

  ad::Var<T> constant(TensorT<T> t) { return ad::constant<T>(std::move(t)); }

  // Runs reverse-mode on the scalar loss and accumulates leaf grads into the
  // bound params.
  void backward(const ad::Var<T>& loss) {
    ad::backward(loss);
    for (auto& [p, v] : order_) {
      if (!v->grad_ready) continue;
      for (std::size_t i = 0; i < p->grad.numel(); ++i) p->grad[i] += v->grad[i];
    }
  }

private:
  Mode mode_;
  std::unordered_map<const ParamT<T>*, ad::Var<T>> bound_;
  std::vector<std::pair<ParamT<T>*, ad::Var<T>>> order_;
};

template <class T>
void zero_grads(const std::vector<ParamT<T>*>& params) {
  for (auto* p : params) p->zero_grad();
}

// Adam with bias correction. Slots are keyed by param identity; the update
// loop follows the caller's param order, so steps are deterministic.
template <class T>
class Adam {
public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  explicit Adam(Options opt = {}) : opt_(opt) {}

  Options& options() { return opt_; }

  void step(const std::vector<ParamT<T>*>& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (auto* p : params) {
      if (!p->receives_grad()) continue;
      auto& slot = slots_[p];
      if (slot.m.numel() != p->value.numel()) {
        slot.m = TensorT<T>::zeros(p->value.shape());
        slot.v = TensorT<T>::zeros(p->value.shape());
      }
      for (std::size_t i = 0; i < p->value.numel(); ++i) {
        const double g = static_cast<double>(p->grad[i]);
        slot.m[i] = static_cast<T>(opt_.beta1 * slot.m[i] + (1.0 - opt_.beta1) * g);
        slot.v[i] = static_cast<T>(opt_.beta2 * slot.v[i] + (1.0 - opt_.beta2) * g * g);
        const double mhat = static_cast<double>(slot.m[i]) / bc1;
        const double vhat = static_cast<double>(slot.v[i]) / bc2;
        p->value[i] -= static_cast<T>(opt_.lr * mhat / (std::sqrt(vhat) + opt_.eps));
      }
    }
  }

private:
  struct Slot {
    TensorT<T> m, v;
  };
  Options opt_;
  long t_ = 0;
  std::unordered_map<ParamT<T>*, Slot> slots_;
};

}  // namespace lclip
