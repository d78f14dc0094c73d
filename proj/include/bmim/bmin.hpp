#pragma once

#include <vector>

#include "bmim/autodiff.hpp"
#include "bmim/layers.hpp"

namespace bmim {

// f->b attends to positions j <= i, b->f to positions j >= i.
enum class Direction { kFrontToBack, kBackToFront };

Matrix direction_mask(std::size_t n, Direction dir);

// Parameters of one (task, direction) inference chain.
struct DirectionParams {
  Linear query;   // [d -> 2d]
  LstmCell cell;  // input 2d, hidden d; runs over hops, per position

  static DirectionParams create(ParameterSet& ps, const std::string& name, std::size_t d, Rng& rng);
};

struct BminParams {
  DirectionParams sentiment_fb, sentiment_bf;
  DirectionParams act_fb, act_bf;
  std::size_t hops = 1;
  std::size_t d = 0;

  static BminParams create(ParameterSet& ps, std::size_t d, std::size_t hops, Rng& rng);
};

struct AttentionTrace {
  Matrix alpha;    // [N x N]
  Matrix readout;  // [N x d]
};

struct AttentionResult {
  ad::Var alpha;
  ad::Var readout;
};

ad::Var init_query(ad::Tape& tape, ad::Var x, const DirectionParams& params);

// e_ij = x_j . q_i on unmasked j, row softmax, r_i = sum_j alpha_ij x_j.
AttentionResult attention_readout(ad::Var x, ad::Var q_tilde, const Matrix& mask);

// Returns q^(T), [N x 2d]. When `trace` is given, one entry per hop is appended.
ad::Var multihop_direction(ad::Tape& tape, ad::Var x, Direction dir, std::size_t hops, const DirectionParams& params,
                           std::vector<AttentionTrace>* trace = nullptr);

struct BminTraces {
  std::vector<AttentionTrace> sentiment_fb, sentiment_bf, act_fb, act_bf;
};

struct BminOutput {
  ad::Var q_s;  // [N x 4d]
  ad::Var q_a;  // [N x 4d]
};

BminOutput bmin_forward(ad::Tape& tape, ad::Var x_s, ad::Var x_a, const BminParams& params,
                        BminTraces* traces = nullptr);

}  // namespace bmim
