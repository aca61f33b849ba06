#pragma once

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "dermamap/nn/tensor.hpp"
#include "dermamap/rng.hpp"
#include "dermamap/sha256.hpp"

namespace dermamap::nn {

template <class T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> m;  // Adam first moment
  Tensor<T> s;  // Adam second moment
  bool trainable = true;
};

template <class T>
class ParamStore {
 public:
  int add(std::string name, Tensor<T> init, bool trainable) {
    Param<T> p;
    p.name = std::move(name);
    p.grad = Tensor<T>(init.shape);
    p.m = Tensor<T>(init.shape);
    p.s = Tensor<T>(init.shape);
    p.value = std::move(init);
    p.trainable = trainable;
    params_.push_back(std::move(p));
    return int(params_.size()) - 1;
  }

  Param<T>& at(int i) { return params_[size_t(i)]; }
  const Param<T>& at(int i) const { return params_[size_t(i)]; }
  int count() const { return int(params_.size()); }

  int find(const std::string& name) const {
    for (int i = 0; i < count(); ++i)
      if (params_[size_t(i)].name == name) return i;
    fail("parameter not found: " + name);
  }

  void zero_grads() {
    for (auto& p : params_)
      std::fill(p.grad.v.begin(), p.grad.v.end(), T(0));
  }

  int64_t numel(bool trainable_only) const {
    int64_t n = 0;
    for (const auto& p : params_)
      if (!trainable_only || p.trainable) n += p.value.numel();
    return n;
  }

  // Content hash over values of the selected subset, in insertion order.
  std::string value_hash(bool frozen_only) const {
    Sha256 h;
    for (const auto& p : params_) {
      if (frozen_only && p.trainable) continue;
      h.update(p.name.data(), p.name.size());
      h.update(p.value.v.data(), p.value.v.size() * sizeof(T));
    }
    return h.hex_digest();
  }

  std::vector<Param<T>>& all() { return params_; }
  const std::vector<Param<T>>& all() const { return params_; }

 private:
  std::vector<Param<T>> params_;
};

// Records (param -> tape leaf) bindings for one step; gradients are pulled
// back out of the tape after backward().
template <class T>
class TapeBindings {
 public:
  typename Tape<T>::Id bind(Tape<T>& tape, ParamStore<T>& store, int param) {
    const auto& p = store.at(param);
    const auto id = tape.leaf(p.value, p.trainable);
    bindings_.push_back({param, id});
    return id;
  }

  void collect_grads(Tape<T>& tape, ParamStore<T>& store) const {
    for (const auto& [param, id] : bindings_) {
      auto& p = store.at(param);
      if (!p.trainable || !tape.needs_grad(id)) continue;
      const auto& g = tape.grad(id);
      if (g.v.empty()) continue;  // parameter unused by the loss
      for (int64_t i = 0; i < p.grad.numel(); ++i)
        p.grad.v[size_t(i)] += g.v[size_t(i)];
    }
  }

 private:
  std::vector<std::pair<int, typename Tape<T>::Id>> bindings_;
};

template <class T>
class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Updates trainable parameters only; frozen values are never touched.
  void step(ParamStore<T>& store, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, double(t_));
    const double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (auto& p : store.all()) {
      if (!p.trainable) continue;
      for (int64_t i = 0; i < p.value.numel(); ++i) {
        const double g = double(p.grad.v[size_t(i)]);
        double m = double(p.m.v[size_t(i)]);
        double s = double(p.s.v[size_t(i)]);
        m = beta1_ * m + (1.0 - beta1_) * g;
        s = beta2_ * s + (1.0 - beta2_) * g * g;
        p.m.v[size_t(i)] = T(m);
        p.s.v[size_t(i)] = T(s);
        const double mhat = m / bc1;
        const double shat = s / bc2;
        p.value.v[size_t(i)] -= T(lr * mhat / (std::sqrt(shat) + eps_));
      }
    }
  }

  int64_t steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

// Cosine annealing from lr0 down to eta_min across `total` epochs.
inline double cosine_lr(double lr0, int epoch, int total, double eta_min = 0.0) {
  if (total <= 1) return lr0;
  const double t = double(epoch) / double(total);
  return eta_min + 0.5 * (lr0 - eta_min) * (1.0 + std::cos(M_PI * t));
}

// Initializers ---------------------------------------------------------------

template <class T>
Tensor<T> randn_tensor(std::vector<int> shape, Rng& rng, double sigma) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.v) v = T(rng.normal(0.0, sigma));
  return t;
}

template <class T>
Tensor<T> zeros_tensor(std::vector<int> shape) {
  return Tensor<T>(std::move(shape));
}

template <class T>
Tensor<T> full_tensor(std::vector<int> shape, T fill) {
  return Tensor<T>(std::move(shape), fill);
}

}  // namespace dermamap::nn
