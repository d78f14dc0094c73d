#include "bmim/heads.hpp"

#include <algorithm>
#include <cmath>

#include "bmim/errors.hpp"

namespace bmim {

Arch parse_arch(const std::string& tag) {
  if (tag == "a") return Arch::a;
  if (tag == "b") return Arch::b;
  if (tag == "c") return Arch::c;
  throw ConfigError("unknown architecture '" + tag + "' (expected a, b or c)");
}

std::string to_string(Arch arch) {
  switch (arch) {
    case Arch::a: return "a";
    case Arch::b: return "b";
    case Arch::c: return "c";
  }
  return "?";
}

ClassifierHead ClassifierHead::create(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t d_e,
                                      std::size_t label_offset, std::size_t num_labels, Rng& rng) {
  ClassifierHead h;
  h.hidden = Linear::create(ps, name + ".hidden", in, d_e, rng);
  h.out_bias = &ps.add(name + ".out_bias", 1, num_labels);
  h.label_offset = label_offset;
  h.num_labels = num_labels;
  return h;
}

HeadsParams HeadsParams::create(ParameterSet& ps, Arch arch, const LabelSpace& labels, std::size_t q_width,
                                std::size_t d_e, Rng& rng) {
  if (labels.num_sentiments() == 0 || labels.num_acts() == 0) throw ConfigError("heads: empty label inventory");
  const std::size_t ns = labels.num_sentiments(), na = labels.num_acts();
  HeadsParams p;
  p.arch = arch;
  p.label_embeddings = &ps.add_xavier("heads.label_embeddings", ns + na, d_e, rng);
  const std::size_t s_in = arch == Arch::c ? 2 * q_width : q_width;
  const std::size_t a_in = arch == Arch::b ? 2 * q_width : q_width;
  p.sentiment = ClassifierHead::create(ps, "heads.sentiment", s_in, d_e, 0, ns, rng);
  p.act = ClassifierHead::create(ps, "heads.act", a_in, d_e, ns, na, rng);
  if (arch == Arch::b) p.aux = ClassifierHead::create(ps, "heads.aux_sentiment", 2 * q_width, d_e, 0, ns, rng);
  if (arch == Arch::c) p.aux = ClassifierHead::create(ps, "heads.aux_act", 2 * q_width, d_e, ns, na, rng);
  return p;
}

Classified classify(ad::Tape& tape, ad::Var q, const ClassifierHead& head, ad::Var label_embeddings) {
  ad::Var hidden = ad::tanh(head.hidden(tape, q));
  ad::Var weights = ad::slice_rows(label_embeddings, head.label_offset, head.num_labels);
  ad::Var scores = ad::add_row(ad::matmul_nt(hidden, weights), tape.param(*head.out_bias));
  return {scores, ad::softmax_rows(scores)};
}

PredictionVars forward_architecture(ad::Tape& tape, Arch arch, ad::Var q_s, ad::Var q_a, const HeadsParams& params) {
  if (arch != params.arch) throw ConfigError("forward_architecture: parameters were built for arch " +
                                             to_string(params.arch) + ", not " + to_string(arch));
  ad::Var e = tape.param(*params.label_embeddings);
  PredictionVars out;
  Classified s, a;
  switch (arch) {
    case Arch::a:
      s = classify(tape, q_s, params.sentiment, e);
      a = classify(tape, q_a, params.act, e);
      break;
    case Arch::b: {
      s = classify(tape, q_s, params.sentiment, e);
      a = classify(tape, ad::concat_cols({q_a, q_s}), params.act, e);
      out.aux_y_s = classify(tape, ad::concat_cols({q_s, q_a}), *params.aux, e).probs;
      break;
    }
    case Arch::c: {
      a = classify(tape, q_a, params.act, e);
      s = classify(tape, ad::concat_cols({q_s, q_a}), params.sentiment, e);
      out.aux_y_a = classify(tape, ad::concat_cols({q_a, q_s}), *params.aux, e).probs;
      break;
    }
  }
  out.o_s = s.scores;
  out.o_a = a.scores;
  out.y_s = s.probs;
  out.y_a = a.probs;
  return out;
}

PredictionBundle to_bundle(const PredictionVars& vars) {
  PredictionBundle b;
  b.o_s = vars.o_s.value();
  b.o_a = vars.o_a.value();
  b.y_s = vars.y_s.value();
  b.y_a = vars.y_a.value();
  if (vars.aux_y_s) b.aux_y_s = vars.aux_y_s->value();
  if (vars.aux_y_a) b.aux_y_a = vars.aux_y_a->value();
  return b;
}

Matrix softmax_rows(const Matrix& scores) {
  ad::Tape tape;
  return ad::softmax_rows(tape.constant(scores)).value();
}

ad::Var cross_entropy(ad::Var probs, const std::vector<std::size_t>& gold) {
  return ad::affine(ad::sum_all(ad::log_floor(ad::pick(probs, gold), 1e-12)), -1.0, 0.0);
}

double cross_entropy(const Matrix& probs, const std::vector<std::size_t>& gold) {
  ad::Tape tape;
  return cross_entropy(tape.constant(probs), gold).scalar();
}

namespace {

// Loss value and, when grad != nullptr, dL/dE accumulated into *grad.
double contrastive_impl(const Matrix& e, const CooccurrenceSets& sets, double tau, double eps, Matrix* grad) {
  if (!(tau > 0.0)) throw ContractError("contrastive_loss: temperature must be > 0");
  if (!(eps >= 0.0)) throw ContractError("contrastive_loss: eps must be >= 0");
  const std::size_t l = e.rows();
  if (sets.positives.size() != l || sets.negatives.size() != l)
    throw ContractError("contrastive_loss: co-occurrence sets do not match the embedding table");
  const double log_eps = eps > 0.0 ? std::log(eps) : -INFINITY;
  double loss = 0.0;
  std::vector<std::size_t> support;
  std::vector<double> sim, weight;
  for (std::size_t i = 0; i < l; ++i) {
    const auto& pos = sets.positives[i];
    if (pos.empty()) continue;
    const auto& neg = sets.negatives[i];
    support.assign(pos.begin(), pos.end());
    support.insert(support.end(), neg.begin(), neg.end());
    sim.resize(support.size());
    double m = log_eps;
    for (std::size_t k = 0; k < support.size(); ++k) {
      sim[k] = dot(e.row(i), e.row(support[k])) / tau;
      m = std::max(m, sim[k]);
    }
    double z = eps > 0.0 ? std::exp(log_eps - m) : 0.0;
    weight.resize(support.size());
    for (std::size_t k = 0; k < support.size(); ++k) z += (weight[k] = std::exp(sim[k] - m));
    const double log_denom = m + std::log(z);
    const double inv_p = 1.0 / static_cast<double>(pos.size());
    double pos_mean = 0.0;
    for (std::size_t k = 0; k < pos.size(); ++k) pos_mean += sim[k];
    loss += log_denom - pos_mean * inv_p;
    if (grad == nullptr) continue;
    for (std::size_t k = 0; k < support.size(); ++k) {
      const double g = (weight[k] / z - (k < pos.size() ? inv_p : 0.0)) / tau;
      const std::size_t j = support[k];
      auto gi = grad->row(i);
      auto gj = grad->row(j);
      for (std::size_t c = 0; c < e.cols(); ++c) {
        gi[c] += g * e(j, c);
        gj[c] += g * e(i, c);
      }
    }
  }
  return loss;
}

}  // namespace

ad::Var contrastive_loss(ad::Var embeddings, const CooccurrenceSets& sets, double tau, double eps) {
  const double value = contrastive_impl(embeddings.value(), sets, tau, eps, nullptr);
  const std::size_t ie = embeddings.id();
  return embeddings.tape()->record(Matrix(1, 1, value), {embeddings},
                                   [ie, sets, tau, eps](ad::Tape& t, std::size_t self) {
                                     const double g = t.grad(self)[0];
                                     Matrix local(t.value(ie).rows(), t.value(ie).cols());
                                     contrastive_impl(t.value(ie), sets, tau, eps, &local);
                                     add_inplace(t.grad(ie), local, g);
                                   },
                                   "contrastive_loss");
}

double contrastive_loss(const Matrix& embeddings, const CooccurrenceSets& sets, double tau, double eps) {
  return contrastive_impl(embeddings, sets, tau, eps, nullptr);
}

ad::Var dual_gaps(ad::Var conditional, ad::Var reverse, const std::vector<std::size_t>& gold_s,
                  const std::vector<std::size_t>& gold_a, const Marginals& marginals, DualDirection dir) {
  const std::size_t n = gold_s.size();
  if (gold_a.size() != n || conditional.rows() != n || reverse.rows() != n)
    throw ContractError("dual_loss: gold labels and predictions disagree in length");
  const bool s_to_a = dir == DualDirection::kSentimentToAct;
  const auto& src_gold = s_to_a ? gold_s : gold_a;
  const auto& tgt_gold = s_to_a ? gold_a : gold_s;
  const auto& src_marg = s_to_a ? marginals.sentiment : marginals.act;
  const auto& tgt_marg = s_to_a ? marginals.act : marginals.sentiment;
  Matrix offset(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (src_gold[i] >= src_marg.size() || tgt_gold[i] >= tgt_marg.size())
      throw DataError("dual_loss: gold label outside the marginal table");
    const double ps = src_marg[src_gold[i]], pt = tgt_marg[tgt_gold[i]];
    if (!(ps > 0.0) || !(pt > 0.0))
      throw DataError("dual_loss: gold label has zero empirical marginal (unseen in training)");
    offset(i, 0) = std::log(ps) - std::log(pt);
  }
  ad::Tape& tape = *conditional.tape();
  ad::Var gap = ad::log_floor(ad::pick(conditional, tgt_gold), 1e-12) -
                ad::log_floor(ad::pick(reverse, src_gold), 1e-12);
  return ad::square(tape.constant(std::move(offset)) + gap);
}

double dual_loss(const Matrix& conditional, const Matrix& reverse, const std::vector<std::size_t>& gold_s,
                 const std::vector<std::size_t>& gold_a, const Marginals& marginals, DualDirection dir) {
  if (gold_s.empty()) return 0.0;
  ad::Tape tape;
  ad::Var gaps = dual_gaps(tape.constant(conditional), tape.constant(reverse), gold_s, gold_a, marginals, dir);
  return ad::sum_all(gaps).scalar() / static_cast<double>(gold_s.size());
}

LossBreakdown joint_loss(Arch arch, double l_s, double l_a, double l_extra, const LossWeights& weights) {
  LossBreakdown b;
  b.sentiment = l_s;
  b.act = l_a;
  if (arch == Arch::a) {
    b.contrastive = l_extra;
    b.total = (l_s + l_a) + weights.lambda_cl * l_extra;
  } else {
    b.dual = l_extra;
    b.total = (l_s + l_a) + weights.lambda_dl * l_extra;
  }
  return b;
}

}  // namespace bmim
