#pragma once

#include <string>

#include "bmim/autodiff.hpp"
#include "bmim/params.hpp"

namespace bmim {

// y = x W + b with W: [in x out], b: [1 x out].
struct Linear {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;

  static Linear create(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  ad::Var operator()(ad::Tape& tape, ad::Var x) const;
  std::size_t in_features() const { return weight->value.rows(); }
  std::size_t out_features() const { return weight->value.cols(); }
};

struct LstmState {
  ad::Var h;
  ad::Var c;
};

// Standard LSTM cell over row-batched inputs. Gate order in the fused weight: input, forget, cell, output.
struct LstmCell {
  Parameter* weight = nullptr;  // [(in + hidden) x 4 hidden]
  Parameter* bias = nullptr;    // [1 x 4 hidden]
  std::size_t hidden = 0;

  static LstmCell create(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t hidden, Rng& rng);
  LstmState operator()(ad::Tape& tape, ad::Var x, const LstmState& prev) const;
  LstmState zero_state(ad::Tape& tape, std::size_t rows) const;
};

}  // namespace bmim
