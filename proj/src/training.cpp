#include "bmim/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bmim/errors.hpp"
#include "bmim/evaluation.hpp"

namespace bmim {

using nlohmann::json;

json History::to_json() const {
  json epochs_json = json::array();
  for (const auto& e : epochs) {
    json j = {{"epoch", e.epoch},   {"loss_s", e.loss_s}, {"loss_a", e.loss_a},
              {"loss_cl", e.loss_cl}, {"loss_dl", e.loss_dl}, {"total", e.total},
              {"has_dev", e.has_dev}};
    if (e.has_dev) {
      j["dev_dsc_f1"] = e.dev_dsc_f1;
      j["dev_dar_f1"] = e.dev_dar_f1;
      j["dev_combined_f1"] = e.dev_combined;
    }
    epochs_json.push_back(std::move(j));
  }
  return json{{"best_epoch", best_epoch}, {"epochs", std::move(epochs_json)}};
}

History History::from_json(const json& j) {
  History h;
  h.best_epoch = j.at("best_epoch").get<std::size_t>();
  for (const auto& e : j.at("epochs")) {
    EpochRecord r;
    r.epoch = e.at("epoch").get<std::size_t>();
    r.loss_s = e.at("loss_s").get<double>();
    r.loss_a = e.at("loss_a").get<double>();
    r.loss_cl = e.at("loss_cl").get<double>();
    r.loss_dl = e.at("loss_dl").get<double>();
    r.total = e.at("total").get<double>();
    r.has_dev = e.at("has_dev").get<bool>();
    if (r.has_dev) {
      r.dev_dsc_f1 = e.at("dev_dsc_f1").get<double>();
      r.dev_dar_f1 = e.at("dev_dar_f1").get<double>();
      r.dev_combined = e.at("dev_combined_f1").get<double>();
    }
    h.epochs.push_back(r);
  }
  return h;
}

Adam::Adam(ParameterSet& params, double lr, double beta1, double beta2, double eps)
    : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.value.rows(), p.value.cols());
    v_.emplace_back(p.value.rows(), p.value.cols());
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  std::size_t k = 0;
  for (auto& p : params_) {
    Matrix& m = m_[k];
    Matrix& v = v_[k];
    ++k;
    if (p.grad.empty()) continue;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      p.value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

double clip_gradients(ParameterSet& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.grad.flat()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& p : params)
      for (double& g : p.grad.flat()) g *= scale;
  }
  return norm;
}

BatchLoss batch_loss(ad::Tape& tape, const Model& model, const DialogSet& data, const Batch& batch,
                     const CooccurrenceSets& sets, const Marginals& marginals) {
  const TrainConfig& cfg = model.config();
  std::vector<ad::Var> ce_s, ce_a, gaps;
  std::size_t utterances = 0;
  for (std::size_t idx : batch.indices) {
    const Dialog& dialog = data.dialogs.at(idx);
    std::vector<std::size_t> gold_s, gold_a;
    for (const auto& u : dialog.utterances) {
      gold_s.push_back(u.sentiment);
      gold_a.push_back(u.act);
    }
    utterances += dialog.size();
    Model::Forward f = model.forward(tape, dialog_token_ids(dialog, model.vocab()));
    ce_s.push_back(cross_entropy(f.preds.y_s, gold_s));
    ce_a.push_back(cross_entropy(f.preds.y_a, gold_a));
    if (cfg.arch == Arch::b)
      gaps.push_back(dual_gaps(f.preds.y_a, *f.preds.aux_y_s, gold_s, gold_a, marginals,
                               DualDirection::kSentimentToAct));
    if (cfg.arch == Arch::c)
      gaps.push_back(dual_gaps(f.preds.y_s, *f.preds.aux_y_a, gold_s, gold_a, marginals,
                               DualDirection::kActToSentiment));
  }
  if (utterances == 0) throw ContractError("batch_loss: empty batch");

  ad::Var l_s = ad::sum_all(ad::concat_rows(ce_s));
  ad::Var l_a = ad::sum_all(ad::concat_rows(ce_a));
  ad::Var extra;
  double lambda = 0.0;
  if (cfg.arch == Arch::a) {
    extra = contrastive_loss(tape.param(*model.heads().label_embeddings), sets, cfg.tau, cfg.eps);
    lambda = cfg.effective_lambda_cl();
  } else {
    extra = ad::affine(ad::sum_all(ad::concat_rows(gaps)), 1.0 / static_cast<double>(utterances), 0.0);
    lambda = cfg.effective_lambda_dl();
  }
  BatchLoss out;
  out.total = ad::add(ad::add(l_s, l_a), ad::affine(extra, lambda, 0.0));
  out.breakdown = joint_loss(cfg.arch, l_s.scalar(), l_a.scalar(), extra.scalar(),
                             LossWeights{cfg.effective_lambda_cl(), cfg.effective_lambda_dl()});
  out.utterances = utterances;
  if (!std::isfinite(out.total.scalar())) {
    auto where = tape.first_non_finite();
    throw NumericError("non-finite loss; first non-finite tensor: " + where.value_or("<unknown>"));
  }
  return out;
}

namespace {

void check_same_labels(const DialogSet& ref, const DialogSet& other, const char* what) {
  if (!other.empty() && !(other.labels == ref.labels))
    throw DataError(std::string(what) + " set label space differs from the training label space");
}

}  // namespace

Checkpoint train(const TrainConfig& cfg, const DialogSet& train_set, const DialogSet& dev_set,
                 const TrainCallbacks& callbacks) {
  cfg.validate();
  if (train_set.empty()) throw DataError("training set is empty");
  check_same_labels(train_set, dev_set, "dev");

  Model model(cfg, train_set.labels, Vocab::build(train_set));
  const CooccurrenceSets sets = cooccurrence_sets(train_set, train_set.labels);
  const Marginals marginals = empirical_marginals(train_set);
  const EvalOptions dev_opts = protocol_options(cfg.protocol);
  Adam adam(model.params(), cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);

  History history;
  std::vector<Matrix> best = model.params().snapshot();
  double best_score = -1.0;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    const std::uint64_t shuffle_seed = cfg.seed * 0x9E3779B97F4A7C15ULL + epoch;
    for (const Batch& batch : batch_dialogs(train_set, cfg.batch_size, shuffle_seed)) {
      ad::Tape tape;
      BatchLoss bl = batch_loss(tape, model, train_set, batch, sets, marginals);
      model.params().zero_grad();
      tape.backward(bl.total);
      clip_gradients(model.params(), cfg.clip_norm);
      adam.step();
      rec.loss_s += bl.breakdown.sentiment;
      rec.loss_a += bl.breakdown.act;
      rec.loss_cl += bl.breakdown.contrastive.value_or(0.0);
      rec.loss_dl += bl.breakdown.dual.value_or(0.0);
      rec.total += bl.breakdown.total;
    }
    bool improved = false;
    if (!dev_set.empty()) {
      MetricsReport r = evaluate(model, dev_set, dev_opts);
      rec.has_dev = true;
      rec.dev_dsc_f1 = r.sentiment.f1;
      rec.dev_dar_f1 = r.act.f1;
      rec.dev_combined = r.combined_f1();
      improved = rec.dev_combined > best_score;
      if (improved) best_score = rec.dev_combined;
    } else {
      improved = true;
    }
    history.epochs.push_back(rec);
    if (improved) {
      best = model.params().snapshot();
      history.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (callbacks.on_epoch) callbacks.on_epoch(rec);
    if (cfg.patience > 0 && since_best >= cfg.patience) break;
  }
  model.params().restore(best);
  return make_checkpoint(model, std::move(history));
}

GradcheckResult gradcheck(ParameterSet& params, const LossFunction& loss, double step, std::uint64_t seed,
                          std::size_t max_coords) {
  if (!(step > 0.0)) throw ConfigError("gradcheck: step must be > 0");
  for (auto& p : params) p.grad = Matrix(p.value.rows(), p.value.cols());
  const double l0 = loss(true);
  // what a rounded loss value alone can contribute to a central difference
  const double noise = 8.0 * std::numeric_limits<double>::epsilon() * std::abs(l0) / step;
  std::vector<Matrix> analytic;
  for (const auto& p : params) analytic.push_back(p.grad);

  Rng rng(seed);
  GradcheckResult result;
  result.loss = l0;
  std::size_t k = 0;
  for (auto& p : params) {
    const Matrix& ga = analytic[k++];
    std::vector<std::size_t> coords(p.value.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (coords.size() > max_coords) {
      for (std::size_t i = 0; i < max_coords; ++i) std::swap(coords[i], coords[i + rng.below(coords.size() - i)]);
      coords.resize(max_coords);
    }
    for (std::size_t c : coords) {
      const double orig = p.value[c];
      p.value[c] = orig + step;
      const double up = loss(false);
      p.value[c] = orig - step;
      const double down = loss(false);
      p.value[c] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double denom = std::max({std::abs(ga[c]), std::abs(numeric), 1e-8});
      const double rel = std::abs(ga[c] - numeric) / denom;
      const double scale = 1e-4 * std::max(std::abs(ga[c]), std::abs(numeric)) + noise;
      if (scale > 0.0) result.max_roundoff_ratio = std::max(result.max_roundoff_ratio, std::abs(ga[c] - numeric) / scale);
      ++result.coordinates;
      if (result.worst_parameter.empty() || rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst_parameter = p.name;
      }
    }
  }
  return result;
}

GradcheckResult gradcheck(const TrainConfig& cfg, const DialogSet& data, const Batch& batch, double step,
                          std::uint64_t seed) {
  if (data.empty()) throw DataError("gradcheck: empty data set");
  Model model(cfg, data.labels, Vocab::build(data));
  const CooccurrenceSets sets = cooccurrence_sets(data, data.labels);
  const Marginals marginals = empirical_marginals(data);
  LossFunction loss = [&](bool with_grad) {
    ad::Tape tape;
    BatchLoss bl = batch_loss(tape, model, data, batch, sets, marginals);
    if (with_grad) {
      model.params().zero_grad();
      tape.backward(bl.total);
    }
    return bl.total.scalar();
  };
  return gradcheck(model.params(), loss, step, seed);
}

}  // namespace bmim
