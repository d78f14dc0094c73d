#include "bmim/layers.hpp"

namespace bmim {

Linear Linear::create(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  Linear l;
  l.weight = &ps.add_xavier(name + ".weight", in, out, rng);
  l.bias = &ps.add(name + ".bias", 1, out);
  return l;
}

ad::Var Linear::operator()(ad::Tape& tape, ad::Var x) const {
  return ad::add_row(ad::matmul(x, tape.param(*weight)), tape.param(*bias));
}

LstmCell LstmCell::create(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t hidden,
                          Rng& rng) {
  LstmCell cell;
  cell.hidden = hidden;
  cell.weight = &ps.add_xavier(name + ".weight", in + hidden, 4 * hidden, rng);
  cell.bias = &ps.add(name + ".bias", 1, 4 * hidden);
  // forget-gate bias starts at 1
  for (std::size_t j = hidden; j < 2 * hidden; ++j) cell.bias->value[j] = 1.0;
  return cell;
}

LstmState LstmCell::operator()(ad::Tape& tape, ad::Var x, const LstmState& prev) const {
  using namespace ad;
  Var gates = add_row(matmul(concat_cols({x, prev.h}), tape.param(*weight)), tape.param(*bias));
  Var i = sigmoid(slice_cols(gates, 0, hidden));
  Var f = sigmoid(slice_cols(gates, hidden, hidden));
  Var g = ad::tanh(slice_cols(gates, 2 * hidden, hidden));
  Var o = sigmoid(slice_cols(gates, 3 * hidden, hidden));
  Var c = f * prev.c + i * g;
  Var h = o * ad::tanh(c);
  return {h, c};
}

LstmState LstmCell::zero_state(ad::Tape& tape, std::size_t rows) const {
  return {tape.constant(Matrix(rows, hidden)), tape.constant(Matrix(rows, hidden))};
}

}  // namespace bmim
