#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "netable/core/error.hpp"
#include "netable/core/tensor.hpp"

namespace netable::ad {

// A named learned tensor. `grad` is absent until a backward pass or an
// explicit zero_grad() populates it; the optimizer clears it after a step.
struct Parameter {
  std::string name;
  Tensor value;
  std::optional<Tensor> grad;

  Tensor& ensure_grad() {
    if (!grad) grad.emplace(value.shape());
    return *grad;
  }
};

// Insertion-ordered owning registry. References stay valid for the store's lifetime.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  Parameter& add(std::string name, Tensor initial) {
    if (index_.contains(name)) throw ContractError("duplicate parameter '" + name + "'");
    auto p = std::make_unique<Parameter>(Parameter{name, std::move(initial), std::nullopt});
    index_.emplace(std::move(name), params_.size());
    params_.push_back(std::move(p));
    return *params_.back();
  }

  // Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
  Parameter& add_uniform(std::string name, Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in == 0 ? 1 : fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : t.data()) v = dist(rng);
    return add(std::move(name), std::move(t));
  }

  Parameter& add_zeros(std::string name, Shape shape) { return add(std::move(name), Tensor(std::move(shape))); }

  bool contains(const std::string& name) const { return index_.contains(name); }

  Parameter& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
    return *params_[it->second];
  }
  const Parameter& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
    return *params_[it->second];
  }

  std::size_t size() const noexcept { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  void zero_grad() {
    for (auto& p : params_) {
      if (p->grad) p->grad->fill(0.0);
      else p->grad.emplace(p->value.shape());
    }
  }

  void clear_grad() {
    for (auto& p : params_) p->grad.reset();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

  std::vector<Tensor> snapshot() const {
    std::vector<Tensor> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p->value);
    return out;
  }

  void restore(const std::vector<Tensor>& values) {
    if (values.size() != params_.size()) throw ContractError("restore: parameter count mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!values[i].same_shape(params_[i]->value)) {
        throw ShapeError("restore: shape mismatch for '" + params_[i]->name + "'");
      }
      params_[i]->value = values[i];
    }
  }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace netable::ad
