#include "bmim/fsn.hpp"

#include <algorithm>
#include <cmath>

#include "bmim/errors.hpp"

namespace bmim {

FsnParams FsnParams::create(ParameterSet& ps, std::size_t d, bool shared_gate, Rng& rng) {
  FsnParams p;
  p.d = d;
  p.shared_gate = shared_gate;
  p.gate_s = Linear::create(ps, "fsn.gate_s", 2 * d, d, rng);
  p.gate_a = shared_gate ? p.gate_s : Linear::create(ps, "fsn.gate_a", 2 * d, d, rng);
  p.candidate = Linear::create(ps, "fsn.candidate", 2 * d, d, rng);
  return p;
}

std::vector<double> cummax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double m = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) total += (out[i] = std::exp(logits[i] - m));
  double acc = 0.0;
  for (double& v : out) {
    acc += v / total;
    v = acc;
  }
  return out;
}

ad::Var cummax(ad::Var logits) { return ad::cumsum_rows(ad::softmax_rows(logits)); }

FsnStep fsn_step(ad::Tape& tape, ad::Var u, ad::Var h_prev, const FsnParams& params) {
  using namespace ad;
  Var z = concat_cols({u, h_prev});
  FsnStep st;
  st.s_gate = cummax(params.gate_s(tape, z));
  st.a_gate = affine(cummax(params.gate_a(tape, z)), -1.0, 1.0);
  Var c = ad::tanh(params.candidate(tape, z));
  Var overlap = st.s_gate * st.a_gate;
  st.p_r = overlap * c;
  st.p_s = (st.s_gate - overlap) * c;
  st.p_a = (st.a_gate - overlap) * c;
  Var shared = ad::tanh(st.p_r);
  st.x_s = ad::tanh(st.p_s) + shared;
  st.x_a = ad::tanh(st.p_a) + shared;
  st.h = ad::tanh(st.p_s + st.p_a + st.p_r);
  return st;
}

FsnOutput fsn_sequence(ad::Tape& tape, ad::Var utterances, const FsnParams& params) {
  const std::size_t n = utterances.rows();
  if (n == 0) throw ContractError("fsn_sequence: empty dialog");
  ad::Var h = tape.constant(Matrix(1, params.d));
  std::vector<ad::Var> xs, xa;
  for (std::size_t i = 0; i < n; ++i) {
    FsnStep st = fsn_step(tape, ad::slice_rows(utterances, i, 1), h, params);
    xs.push_back(st.x_s);
    xa.push_back(st.x_a);
    h = st.h;
  }
  return {ad::concat_rows(xs), ad::concat_rows(xa)};
}

}  // namespace bmim
