#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dcnav/autodiff.hpp"
#include "dcnav/tensor.hpp"

namespace dcnav {

// Named collection of trainable parameters. Iteration order is the sorted
// parameter name, so optimizer sweeps and checkpoints are order-stable.
class ParamStore {
 public:
  ag::Variable create(const std::string& name, Tensor init);
  ag::Variable get(const std::string& name) const;
  bool contains(const std::string& name) const;
  size_t size() const { return params_.size(); }
  size_t total_numel() const;
  std::vector<std::string> names() const;

  // Sorted-by-name view used by the optimizer and checkpoint writer.
  const std::map<std::string, ag::Variable>& entries() const { return params_; }

  void zero_grads();
  double grad_norm() const;

 private:
  std::map<std::string, ag::Variable> params_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Parameters without an accumulated gradient
// (grad undefined) are skipped for that step.
class Adam {
 public:
  Adam(ParamStore& params, AdamConfig config);

  void step();
  uint64_t step_count() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  ParamStore& params_;
  AdamConfig config_;
  uint64_t t_ = 0;
  std::map<std::string, Tensor> m_;
  std::map<std::string, Tensor> v_;
};

}  // namespace dcnav
