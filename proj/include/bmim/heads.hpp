#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bmim/autodiff.hpp"
#include "bmim/corpus.hpp"
#include "bmim/layers.hpp"

namespace bmim {

// (a) parallel heads + contrastive loss, (b) sentiment->act pipeline + dual loss,
// (c) act->sentiment pipeline + dual loss.
enum class Arch { a, b, c };

Arch parse_arch(const std::string& tag);
std::string to_string(Arch arch);

// Two-layer perceptron whose output weights are rows of the label-embedding table.
struct ClassifierHead {
  Linear hidden;                // [in -> d_e]
  Parameter* out_bias = nullptr;  // [1 x K]
  std::size_t label_offset = 0;   // first row in the label-embedding table
  std::size_t num_labels = 0;

  static ClassifierHead create(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t d_e,
                               std::size_t label_offset, std::size_t num_labels, Rng& rng);
};

struct HeadsParams {
  Arch arch = Arch::a;
  Parameter* label_embeddings = nullptr;  // [N_s + N_a x d_e], sentiments first
  ClassifierHead sentiment;
  ClassifierHead act;
  std::optional<ClassifierHead> aux;  // reverse-direction head for (b) and (c)

  // q_width is the width of one task representation (4d with the inference network).
  static HeadsParams create(ParameterSet& ps, Arch arch, const LabelSpace& labels, std::size_t q_width,
                            std::size_t d_e, Rng& rng);
};

struct Classified {
  ad::Var scores;
  ad::Var probs;
};

Classified classify(ad::Tape& tape, ad::Var q, const ClassifierHead& head, ad::Var label_embeddings);

struct PredictionVars {
  ad::Var o_s, o_a;  // pre-softmax scores
  ad::Var y_s, y_a;  // [N x N_s], [N x N_a]
  std::optional<ad::Var> aux_y_s;  // P(s | a), arch b
  std::optional<ad::Var> aux_y_a;  // P(a | s), arch c
};

struct PredictionBundle {
  Matrix o_s, o_a;
  Matrix y_s, y_a;
  std::optional<Matrix> aux_y_s, aux_y_a;

  friend bool operator==(const PredictionBundle&, const PredictionBundle&) = default;
};

PredictionVars forward_architecture(ad::Tape& tape, Arch arch, ad::Var q_s, ad::Var q_a, const HeadsParams& params);
PredictionBundle to_bundle(const PredictionVars& vars);

// Row softmax of plain values.
Matrix softmax_rows(const Matrix& scores);

// -sum_i log max(probs[i, gold_i], 1e-12), summed (not averaged) over rows.
ad::Var cross_entropy(ad::Var probs, const std::vector<std::size_t>& gold);
double cross_entropy(const Matrix& probs, const std::vector<std::size_t>& gold);

// Supervised contrastive loss over the joint label-embedding table. Labels
// without positives contribute 0.
ad::Var contrastive_loss(ad::Var embeddings, const CooccurrenceSets& sets, double tau, double eps);
double contrastive_loss(const Matrix& embeddings, const CooccurrenceSets& sets, double tau, double eps);

enum class DualDirection { kSentimentToAct, kActToSentiment };

// Squared duality gaps per utterance, [N x 1]:
//   (log P^(src) + log P(tgt | src) - log P^(tgt) - log P(src | tgt))^2
// For s->a, `conditional` is y_a and `reverse` is aux_y_s; for a->s the roles swap.
ad::Var dual_gaps(ad::Var conditional, ad::Var reverse, const std::vector<std::size_t>& gold_s,
                  const std::vector<std::size_t>& gold_a, const Marginals& marginals, DualDirection dir);
// Mean of dual_gaps over the utterances.
double dual_loss(const Matrix& conditional, const Matrix& reverse, const std::vector<std::size_t>& gold_s,
                 const std::vector<std::size_t>& gold_a, const Marginals& marginals, DualDirection dir);

struct LossWeights {
  double lambda_cl = 1.0;
  double lambda_dl = 1.0;
};

struct LossBreakdown {
  double sentiment = 0.0;               // L_s
  double act = 0.0;                     // L_a
  std::optional<double> contrastive;    // L_cl, arch a only
  std::optional<double> dual;           // L_dl, arch b/c only
  double total = 0.0;
};

// Combines the components for `arch`: L_s + L_a + lambda * (L_cl | L_dl).
LossBreakdown joint_loss(Arch arch, double l_s, double l_a, double l_extra, const LossWeights& weights);

}  // namespace bmim
