#include "bmim/bmin.hpp"

#include "bmim/errors.hpp"

namespace bmim {

Matrix direction_mask(std::size_t n, Direction dir) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      m(i, j) = (dir == Direction::kFrontToBack ? j <= i : j >= i) ? 1.0 : 0.0;
  return m;
}

DirectionParams DirectionParams::create(ParameterSet& ps, const std::string& name, std::size_t d, Rng& rng) {
  DirectionParams p;
  p.query = Linear::create(ps, name + ".query", d, 2 * d, rng);
  p.cell = LstmCell::create(ps, name + ".memory", 2 * d, d, rng);
  return p;
}

BminParams BminParams::create(ParameterSet& ps, std::size_t d, std::size_t hops, Rng& rng) {
  if (hops < 1) throw ConfigError("bmin: hop count must be >= 1");
  BminParams p;
  p.hops = hops;
  p.d = d;
  p.sentiment_fb = DirectionParams::create(ps, "bmin.sentiment_fb", d, rng);
  p.sentiment_bf = DirectionParams::create(ps, "bmin.sentiment_bf", d, rng);
  p.act_fb = DirectionParams::create(ps, "bmin.act_fb", d, rng);
  p.act_bf = DirectionParams::create(ps, "bmin.act_bf", d, rng);
  return p;
}

ad::Var init_query(ad::Tape& tape, ad::Var x, const DirectionParams& params) { return params.query(tape, x); }

AttentionResult attention_readout(ad::Var x, ad::Var q_tilde, const Matrix& mask) {
  ad::Var scores = ad::matmul_nt(q_tilde, x);
  ad::Var alpha = ad::masked_softmax_rows(scores, mask);
  return {alpha, ad::matmul(alpha, x)};
}

ad::Var multihop_direction(ad::Tape& tape, ad::Var x, Direction dir, std::size_t hops, const DirectionParams& params,
                           std::vector<AttentionTrace>* trace) {
  if (hops < 1) throw ConfigError("multihop_direction: hop count must be >= 1");
  const Matrix mask = direction_mask(x.rows(), dir);
  ad::Var q = init_query(tape, x, params);
  LstmState memory = params.cell.zero_state(tape, x.rows());
  for (std::size_t t = 0; t < hops; ++t) {
    memory = params.cell(tape, q, memory);
    AttentionResult att = attention_readout(x, memory.h, mask);
    if (trace != nullptr) trace->push_back({att.alpha.value(), att.readout.value()});
    q = ad::concat_cols({memory.h, att.readout});
  }
  return q;
}

BminOutput bmin_forward(ad::Tape& tape, ad::Var x_s, ad::Var x_a, const BminParams& params, BminTraces* traces) {
  auto run = [&](ad::Var x, Direction dir, const DirectionParams& p, std::vector<AttentionTrace>* tr) {
    return multihop_direction(tape, x, dir, params.hops, p, tr);
  };
  ad::Var s_fb = run(x_s, Direction::kFrontToBack, params.sentiment_fb, traces ? &traces->sentiment_fb : nullptr);
  ad::Var s_bf = run(x_s, Direction::kBackToFront, params.sentiment_bf, traces ? &traces->sentiment_bf : nullptr);
  ad::Var a_fb = run(x_a, Direction::kFrontToBack, params.act_fb, traces ? &traces->act_fb : nullptr);
  ad::Var a_bf = run(x_a, Direction::kBackToFront, params.act_bf, traces ? &traces->act_bf : nullptr);
  return {ad::concat_cols({s_fb, s_bf}), ad::concat_cols({a_fb, a_bf})};
}

}  // namespace bmim
