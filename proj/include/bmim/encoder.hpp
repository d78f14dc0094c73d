#pragma once

#include <vector>

#include "bmim/autodiff.hpp"
#include "bmim/corpus.hpp"
#include "bmim/layers.hpp"

namespace bmim {

using TokenIds = std::vector<std::size_t>;

// Word embeddings + bidirectional LSTM (d/2 units per direction), max-pooled
// over token positions into one d-wide vector per utterance.
struct EncoderParams {
  Parameter* embedding = nullptr;  // [vocab_size x d_w], row 0 = unknown token
  LstmCell forward;
  LstmCell backward;
  std::size_t d_w = 0;
  std::size_t d = 0;

  static EncoderParams create(ParameterSet& ps, std::size_t vocab_size, std::size_t d_w, std::size_t d, Rng& rng);
};

// One row per utterance. Row i depends only on utterances[i].
ad::Var encode_rows(ad::Tape& tape, const std::vector<TokenIds>& utterances, const EncoderParams& params);

Matrix encode_utterance(const TokenIds& tokens, const EncoderParams& params);
Matrix encode_dialog(const std::vector<TokenIds>& utterances, const EncoderParams& params);
Matrix encode_dialog(const Dialog& dialog, const Vocab& vocab, const EncoderParams& params);

std::vector<TokenIds> dialog_token_ids(const Dialog& dialog, const Vocab& vocab);

}  // namespace bmim
