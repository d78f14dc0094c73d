#include "bmim/model.hpp"

#include "bmim/errors.hpp"

namespace bmim {

Model::Model(const TrainConfig& cfg, LabelSpace labels, Vocab vocab)
    : cfg_(cfg), labels_(std::move(labels)), vocab_(std::move(vocab)), params_(std::make_unique<ParameterSet>()) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  encoder_ = EncoderParams::create(*params_, vocab_.size(), cfg_.d_w, cfg_.d, rng);
  if (!cfg_.no_fsn) fsn_ = FsnParams::create(*params_, cfg_.d, cfg_.shared_gate, rng);
  if (!cfg_.no_bmin) bmin_ = BminParams::create(*params_, cfg_.d, cfg_.hops, rng);
  heads_ = HeadsParams::create(*params_, cfg_.arch, labels_, q_width(), cfg_.d_e, rng);
}

std::size_t Model::q_width() const { return cfg_.no_bmin ? 2 * cfg_.d : 4 * cfg_.d; }

Model::Forward Model::forward(ad::Tape& tape, const std::vector<TokenIds>& utterances, BminTraces* traces) const {
  Forward f;
  f.u = encode_rows(tape, utterances, encoder_);
  if (fsn_) {
    FsnOutput x = fsn_sequence(tape, f.u, *fsn_);
    f.x_s = x.x_s;
    f.x_a = x.x_a;
  } else {
    f.x_s = f.x_a = f.u;
  }
  if (bmin_) {
    BminOutput q = bmin_forward(tape, f.x_s, f.x_a, *bmin_, traces);
    f.q_s = q.q_s;
    f.q_a = q.q_a;
  } else {
    f.q_s = ad::concat_cols({f.x_s, f.x_s});
    f.q_a = ad::concat_cols({f.x_a, f.x_a});
  }
  f.preds = forward_architecture(tape, cfg_.arch, f.q_s, f.q_a, heads_);
  return f;
}

PredictionBundle Model::predict(const Dialog& dialog) const {
  ad::Tape tape;
  return to_bundle(forward(tape, dialog_token_ids(dialog, vocab_)).preds);
}

std::vector<std::size_t> argmax_rows(const Matrix& probs) {
  std::vector<std::size_t> out(probs.rows(), 0);
  for (std::size_t r = 0; r < probs.rows(); ++r)
    for (std::size_t j = 1; j < probs.cols(); ++j)
      if (probs(r, j) > probs(r, out[r])) out[r] = j;
  return out;
}

}  // namespace bmim
