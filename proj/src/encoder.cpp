#include "bmim/encoder.hpp"

#include <algorithm>

#include "bmim/errors.hpp"

namespace bmim {

EncoderParams EncoderParams::create(ParameterSet& ps, std::size_t vocab_size, std::size_t d_w, std::size_t d,
                                    Rng& rng) {
  if (d == 0 || d % 2 != 0) throw ConfigError("encoder width d must be a positive even number");
  if (d_w == 0 || vocab_size == 0) throw ConfigError("encoder: d_w and vocab_size must be positive");
  EncoderParams p;
  p.d_w = d_w;
  p.d = d;
  p.embedding = &ps.add_uniform("encoder.embedding", vocab_size, d_w, 0.5, rng);
  p.forward = LstmCell::create(ps, "encoder.lstm_fwd", d_w, d / 2, rng);
  p.backward = LstmCell::create(ps, "encoder.lstm_bwd", d_w, d / 2, rng);
  return p;
}

namespace {

// Runs `cell` over every utterance in parallel; position t of row r reads
// token order(r, t). Returns the max-pooled hidden states.
template <typename Order>
ad::Var run_direction(ad::Tape& tape, const std::vector<TokenIds>& utts, const LstmCell& cell,
                      Parameter& embedding, Order order) {
  const std::size_t n = utts.size();
  std::size_t max_len = 0;
  for (const auto& u : utts) max_len = std::max(max_len, u.size());

  LstmState state = cell.zero_state(tape, n);
  std::vector<ad::Var> steps;
  std::vector<std::vector<char>> valid;
  for (std::size_t t = 0; t < max_len; ++t) {
    std::vector<std::size_t> ids(n, Vocab::kUnknown);
    std::vector<char> live(n, 0);
    bool all_live = true;
    for (std::size_t r = 0; r < n; ++r) {
      if (t < utts[r].size()) {
        ids[r] = order(utts[r], t);
        live[r] = 1;
      } else {
        all_live = false;
      }
    }
    LstmState next = cell(tape, ad::lookup(tape, embedding, ids), state);
    steps.push_back(next.h);
    valid.push_back(live);
    if (all_live) {
      state = next;
    } else {
      // finished rows keep their final state
      state = {ad::select_rows(live, next.h, state.h), ad::select_rows(live, next.c, state.c)};
    }
  }
  return ad::masked_max(steps, valid);
}

}  // namespace

ad::Var encode_rows(ad::Tape& tape, const std::vector<TokenIds>& utterances, const EncoderParams& params) {
  if (utterances.empty()) throw ContractError("encode: no utterances");
  const std::size_t vocab = params.embedding->value.rows();
  for (const auto& u : utterances) {
    if (u.empty()) throw ContractError("encode: empty token sequence");
    for (std::size_t id : u)
      if (id >= vocab) throw ContractError("encode: token id out of vocabulary range");
  }
  ad::Var fwd = run_direction(tape, utterances, params.forward, *params.embedding,
                              [](const TokenIds& u, std::size_t t) { return u[t]; });
  ad::Var bwd = run_direction(tape, utterances, params.backward, *params.embedding,
                              [](const TokenIds& u, std::size_t t) { return u[u.size() - 1 - t]; });
  return ad::concat_cols({fwd, bwd});
}

Matrix encode_utterance(const TokenIds& tokens, const EncoderParams& params) {
  ad::Tape tape;
  return encode_rows(tape, {tokens}, params).value();
}

Matrix encode_dialog(const std::vector<TokenIds>& utterances, const EncoderParams& params) {
  ad::Tape tape;
  return encode_rows(tape, utterances, params).value();
}

std::vector<TokenIds> dialog_token_ids(const Dialog& dialog, const Vocab& vocab) {
  std::vector<TokenIds> out;
  out.reserve(dialog.size());
  for (const auto& u : dialog.utterances) out.push_back(vocab.ids(u.tokens));
  return out;
}

Matrix encode_dialog(const Dialog& dialog, const Vocab& vocab, const EncoderParams& params) {
  return encode_dialog(dialog_token_ids(dialog, vocab), params);
}

}  // namespace bmim
