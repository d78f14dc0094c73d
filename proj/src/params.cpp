#include "bmim/params.hpp"

#include <cmath>

#include "bmim/errors.hpp"

namespace bmim {

Parameter& ParameterSet::add(std::string name, std::size_t rows, std::size_t cols) {
  if (find(name) != nullptr) throw ContractError("duplicate parameter name: " + name);
  params_.push_back(Parameter{std::move(name), Matrix(rows, cols), Matrix(rows, cols)});
  return params_.back();
}

Parameter& ParameterSet::add_xavier(std::string name, std::size_t rows, std::size_t cols, Rng& rng) {
  return add_uniform(std::move(name), rows, cols, std::sqrt(6.0 / static_cast<double>(rows + cols)), rng);
}

Parameter& ParameterSet::add_uniform(std::string name, std::size_t rows, std::size_t cols, double scale,
                                     Rng& rng) {
  Parameter& p = add(std::move(name), rows, cols);
  for (double& v : p.value.flat()) v = rng.uniform(-scale, scale);
  return p;
}

Parameter* ParameterSet::find(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

const Parameter* ParameterSet::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

std::vector<Matrix> ParameterSet::snapshot() const {
  std::vector<Matrix> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.value);
  return out;
}

void ParameterSet::restore(const std::vector<Matrix>& values) {
  if (values.size() != params_.size()) throw ContractError("ParameterSet::restore: size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!values[i].same_shape(params_[i].value))
      throw ContractError("ParameterSet::restore: shape mismatch for " + params_[i].name);
    params_[i].value = values[i];
  }
}

}  // namespace bmim
