#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "netable/core/error.hpp"
#include "netable/core/parameters.hpp"

namespace netable::ad {

enum class OptimizerKind { sgd, adam };

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

inline OptimizerKind parse_optimizer_kind(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + s + "'");
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 0.001;
  double epsilon = 1e-8;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.0;
  std::optional<double> max_grad_norm;
};

class Optimizer {
 public:
  Optimizer(ParameterStore& params, OptimizerConfig cfg) : params_(&params), cfg_(cfg) {
    if (!(cfg_.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (cfg_.kind == OptimizerKind::adam && !(cfg_.epsilon > 0.0)) throw ConfigError("adam epsilon must be positive");
    if (cfg_.kind == OptimizerKind::adam) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_.emplace_back(params[i].value.shape());
        v_.emplace_back(params[i].value.shape());
      }
    }
  }

  const OptimizerConfig& config() const noexcept { return cfg_; }
  std::uint64_t steps() const noexcept { return step_; }
  const std::vector<Tensor>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor>& second_moments() const noexcept { return v_; }

  void restore_state(std::uint64_t step, std::vector<Tensor> m, std::vector<Tensor> v) {
    if (cfg_.kind == OptimizerKind::adam) {
      if (m.size() != params_->size() || v.size() != params_->size()) {
        throw CheckpointError("optimizer state count mismatch");
      }
      for (std::size_t i = 0; i < m.size(); ++i) {
        if (!m[i].same_shape((*params_)[i].value) || !v[i].same_shape((*params_)[i].value)) {
          throw CheckpointError("optimizer moment shape mismatch for '" + (*params_)[i].name + "'");
        }
      }
      m_ = std::move(m);
      v_ = std::move(v);
    }
    step_ = step;
  }

  // Applies one update using grad * grad_scale (1/batch for averaged batches),
  // then clears every gradient.
  void step(double grad_scale = 1.0) {
    ParameterStore& ps = *params_;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (!ps[i].grad) throw ContractError("optimizer step: parameter '" + ps[i].name + "' has no gradient");
    }
    double clip = 1.0;
    if (cfg_.max_grad_norm) {
      double sq = 0.0;
      for (std::size_t i = 0; i < ps.size(); ++i) sq += squared_norm(ps[i].grad->data());
      const double norm = std::sqrt(sq) * std::abs(grad_scale);
      if (norm > *cfg_.max_grad_norm) clip = *cfg_.max_grad_norm / norm;
    }
    ++step_;
    const double lr = cfg_.learning_rate;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < ps.size(); ++i) {
      Tensor& w = ps[i].value;
      const Tensor& g = *ps[i].grad;
      for (std::size_t k = 0; k < w.size(); ++k) {
        const double gk = g[k] * grad_scale * clip + cfg_.weight_decay * w[k];
        if (cfg_.kind == OptimizerKind::sgd) {
          w[k] -= lr * gk;
        } else {
          double& m = m_[i][k];
          double& v = v_[i][k];
          m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * gk;
          v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * gk * gk;
          w[k] -= lr * (m / bc1) / (std::sqrt(v / bc2) + cfg_.epsilon);
        }
      }
    }
    ps.clear_grad();
  }

 private:
  ParameterStore* params_;
  OptimizerConfig cfg_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t step_ = 0;
};

}  // namespace netable::ad
