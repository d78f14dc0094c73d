#pragma once

#include <span>
#include <vector>

#include "bmim/autodiff.hpp"
#include "bmim/layers.hpp"

namespace bmim {

// Feature selection network: cumulative-softmax gates split each utterance
// into sentiment-only, act-only and shared partitions.
struct FsnParams {
  Linear gate_s;     // [2d -> d]
  Linear gate_a;     // [2d -> d]; same parameters as gate_s when shared_gate
  Linear candidate;  // [2d -> d]
  bool shared_gate = false;
  std::size_t d = 0;

  static FsnParams create(ParameterSet& ps, std::size_t d, bool shared_gate, Rng& rng);
};

// Cumulative sum of the softmax: non-decreasing, in [0, 1], last entry 1.
std::vector<double> cummax(std::span<const double> logits);
ad::Var cummax(ad::Var logits);

struct FsnStep {
  ad::Var s_gate, a_gate;
  ad::Var p_s, p_a, p_r;
  ad::Var x_s, x_a;
  ad::Var h;
};

// u and h_prev are 1 x d rows.
FsnStep fsn_step(ad::Tape& tape, ad::Var u, ad::Var h_prev, const FsnParams& params);

struct FsnOutput {
  ad::Var x_s;  // [N x d]
  ad::Var x_a;  // [N x d]
};

// Left-to-right recurrence over the rows of U starting from h_0 = 0.
FsnOutput fsn_sequence(ad::Tape& tape, ad::Var utterances, const FsnParams& params);

}  // namespace bmim
