#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "bmim/bmin.hpp"
#include "bmim/config.hpp"
#include "bmim/corpus.hpp"
#include "bmim/encoder.hpp"
#include "bmim/fsn.hpp"
#include "bmim/heads.hpp"

namespace bmim {

// encoder -> fsn -> bmin -> heads. Ablation flags drop fsn (X_s = X_a = U) or
// bmin (Q = [X; X], heads take 2d inputs); dropped modules own no parameters.
class Model {
 public:
  Model(const TrainConfig& cfg, LabelSpace labels, Vocab vocab);
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  struct Forward {
    ad::Var u;
    ad::Var x_s, x_a;
    ad::Var q_s, q_a;
    PredictionVars preds;
  };

  Forward forward(ad::Tape& tape, const std::vector<TokenIds>& utterances, BminTraces* traces = nullptr) const;
  PredictionBundle predict(const Dialog& dialog) const;

  const TrainConfig& config() const { return cfg_; }
  const LabelSpace& labels() const { return labels_; }
  const Vocab& vocab() const { return vocab_; }
  ParameterSet& params() { return *params_; }
  const ParameterSet& params() const { return *params_; }
  const HeadsParams& heads() const { return heads_; }
  std::size_t q_width() const;

 private:
  TrainConfig cfg_;
  LabelSpace labels_;
  Vocab vocab_;
  std::unique_ptr<ParameterSet> params_;
  EncoderParams encoder_;
  std::optional<FsnParams> fsn_;
  std::optional<BminParams> bmin_;
  HeadsParams heads_;
};

// Index of the largest entry in each row; ties go to the lowest index.
std::vector<std::size_t> argmax_rows(const Matrix& probs);

}  // namespace bmim
