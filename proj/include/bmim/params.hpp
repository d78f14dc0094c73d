#pragma once

#include <deque>
#include <string>
#include <vector>

#include "bmim/rng.hpp"
#include "bmim/tensor.hpp"

namespace bmim {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

// Named, ordered parameter store. Element addresses are stable, so layers keep
// raw Parameter pointers into it.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;

  Parameter& add(std::string name, std::size_t rows, std::size_t cols);
  // Uniform(-r, r) with r = sqrt(6 / (fan_in + fan_out)).
  Parameter& add_xavier(std::string name, std::size_t rows, std::size_t cols, Rng& rng);
  Parameter& add_uniform(std::string name, std::size_t rows, std::size_t cols, double scale, Rng& rng);

  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;

  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  std::vector<Matrix> snapshot() const;
  void restore(const std::vector<Matrix>& values);

 private:
  std::deque<Parameter> params_;
};

}  // namespace bmim
