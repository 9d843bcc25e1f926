#include "dcnav/optim.hpp"

#include <cmath>

#include "dcnav/error.hpp"

namespace dcnav {

ag::Variable ParamStore::create(const std::string& name, Tensor init) {
  if (name.empty()) throw ConfigError("parameter name must be non-empty");
  if (params_.count(name)) {
    throw ConfigError("duplicate parameter name: " + name);
  }
  auto v = ag::Variable::leaf(std::move(init), /*requires_grad=*/true);
  params_.emplace(name, v);
  return v;
}

ag::Variable ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

bool ParamStore::contains(const std::string& name) const {
  return params_.count(name) != 0;
}

size_t ParamStore::total_numel() const {
  size_t n = 0;
  for (const auto& [name, v] : params_) n += v.value().numel();
  return n;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, v] : params_) out.push_back(name);
  return out;
}

void ParamStore::zero_grads() {
  for (auto& [name, v] : params_) {
    if (v.node()->grad.defined()) v.mutable_grad() = Tensor::zeros(v.value().shape());
  }
}

double ParamStore::grad_norm() const {
  double acc = 0.0;
  for (const auto& [name, v] : params_) {
    if (!v.node()->grad.defined()) continue;
    const Tensor& g = v.node()->grad;
    for (size_t i = 0; i < g.numel(); ++i) acc += g[i] * g[i];
  }
  return std::sqrt(acc);
}

Adam::Adam(ParamStore& params, AdamConfig config)
    : params_(params), config_(config) {
  if (config_.lr <= 0.0) throw ConfigError("adam: lr must be positive");
  if (config_.beta1 < 0.0 || config_.beta1 >= 1.0)
    throw ConfigError("adam: beta1 must be in [0, 1)");
  if (config_.beta2 < 0.0 || config_.beta2 >= 1.0)
    throw ConfigError("adam: beta2 must be in [0, 1)");
  if (config_.eps <= 0.0) throw ConfigError("adam: eps must be positive");
}

void Adam::step() {
  ++t_;
  double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (const auto& [name, var] : params_.entries()) {
    const Tensor& g = var.node()->grad;
    if (!g.defined()) continue;
    check_finite(g, ("adam gradient for " + name).c_str());
    auto mit = m_.find(name);
    if (mit == m_.end()) {
      mit = m_.emplace(name, Tensor::zeros(var.value().shape())).first;
      v_.emplace(name, Tensor::zeros(var.value().shape()));
    }
    Tensor& m = mit->second;
    Tensor& v = v_.at(name);
    Tensor& w = const_cast<ag::Variable&>(var).mutable_value();
    for (size_t i = 0; i < w.numel(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      double m_hat = m[i] / bc1;
      double v_hat = v[i] / bc2;
      w[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
    check_finite(w, ("adam update for " + name).c_str());
  }
}

}  // namespace dcnav
