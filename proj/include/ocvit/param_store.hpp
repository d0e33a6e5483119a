#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ocvit/tensor.hpp"

namespace ocvit {

struct AdamState {
  std::vector<double> m, v;
  std::uint64_t t = 0;
};

/// Named parameter collection with per-tensor trainable flags and optimizer
/// state. Iteration is always in sorted name order.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t, bool trainable = true);

  bool contains(const std::string& name) const;
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;

  bool trainable(const std::string& name) const;
  void set_trainable(const std::string& name, bool trainable);

  std::vector<std::string> names() const;
  std::vector<std::string> trainable_names() const;
  std::size_t size() const { return entries_.size(); }

  void zero_grads();

  AdamState& opt_state(const std::string& name);

  const std::map<std::string, Tensor>& entries() const { return entries_; }

 private:
  std::map<std::string, Tensor> entries_;
  std::map<std::string, bool> trainable_;
  std::map<std::string, AdamState> opt_state_;
};

struct AdamConfig {
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Classic Adam with bias correction. Weight decay enters as an L2 term on
/// the gradient (g + wd * theta) before the moment updates. Frozen entries
/// are not touched; each trainable entry's step counter advances once per
/// call. Requires every trainable entry to carry a gradient.
void adam_step(ParamStore& store, const AdamConfig& cfg);

/// Rounds every element through IEEE binary32 so values survive an f32
/// checkpoint round trip bit-exactly.
void quantize_f32(Tensor& t);
void quantize_f32(ParamStore& store);

}  // namespace ocvit
