#include "ocvit/param_store.hpp"

#include <cmath>

#include "ocvit/errors.hpp"

namespace ocvit {

Tensor& ParamStore::add(const std::string& name, Tensor t, bool trainable) {
  if (entries_.count(name)) {
    throw ConfigError("param store: duplicate parameter '" + name + "'");
  }
  t.set_requires_grad(trainable);
  auto [it, inserted] = entries_.emplace(name, std::move(t));
  trainable_[name] = trainable;
  return it->second;
}

bool ParamStore::contains(const std::string& name) const {
  return entries_.count(name) != 0;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw ConfigError("param store: unknown parameter '" + name + "'");
  }
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw ConfigError("param store: unknown parameter '" + name + "'");
  }
  return it->second;
}

bool ParamStore::trainable(const std::string& name) const {
  auto it = trainable_.find(name);
  if (it == trainable_.end()) {
    throw ConfigError("param store: unknown parameter '" + name + "'");
  }
  return it->second;
}

void ParamStore::set_trainable(const std::string& name, bool trainable) {
  get(name).set_requires_grad(trainable);
  trainable_[name] = trainable;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, t] : entries_) out.push_back(name);
  return out;
}

std::vector<std::string> ParamStore::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& [name, flag] : trainable_) {
    if (flag) out.push_back(name);
  }
  return out;
}

void ParamStore::zero_grads() {
  for (auto& [name, t] : entries_) {
    if (t.has_grad()) t.zero_grad();
  }
}

AdamState& ParamStore::opt_state(const std::string& name) {
  if (!entries_.count(name)) {
    throw ConfigError("param store: unknown parameter '" + name + "'");
  }
  AdamState& s = opt_state_[name];
  std::size_t n = entries_.at(name).size();
  if (s.m.size() != n) {
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
  }
  return s;
}

void adam_step(ParamStore& store, const AdamConfig& cfg) {
  for (const std::string& name : store.trainable_names()) {
    Tensor& theta = store.get(name);
    if (!theta.has_grad()) {
      throw TrainError("adam: parameter '" + name + "' has no gradient");
    }
    AdamState& s = store.opt_state(name);
    s.t += 1;
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.t));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.t));
    auto value = theta.data();
    auto grad = theta.grad();
    for (std::size_t i = 0; i < value.size(); ++i) {
      double g = grad[i] + cfg.weight_decay * value[i];
      s.m[i] = cfg.beta1 * s.m[i] + (1.0 - cfg.beta1) * g;
      s.v[i] = cfg.beta2 * s.v[i] + (1.0 - cfg.beta2) * g * g;
      double mhat = s.m[i] / bc1;
      double vhat = s.v[i] / bc2;
      value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

void quantize_f32(Tensor& t) {
  for (double& v : t.data()) v = static_cast<double>(static_cast<float>(v));
}

void quantize_f32(ParamStore& store) {
  for (const std::string& name : store.names()) quantize_f32(store.get(name));
}

}  // namespace ocvit
