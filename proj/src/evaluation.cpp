#include "bmim/evaluation.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "bmim/errors.hpp"
#include "bmim/training.hpp"

namespace bmim {

using nlohmann::json;

Averaging parse_averaging(const std::string& name) {
  if (name == "weighted") return Averaging::weighted;
  if (name == "macro") return Averaging::macro;
  throw ConfigError("unknown averaging mode '" + name + "' (expected weighted or macro)");
}

std::string to_string(Averaging mode) { return mode == Averaging::weighted ? "weighted" : "macro"; }

TaskMetrics score_labels(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& gold,
                         const std::vector<std::string>& label_names, Averaging mode,
                         std::optional<std::size_t> excluded) {
  if (predicted.size() != gold.size()) throw ContractError("score_labels: prediction/gold length mismatch");
  const std::size_t k = label_names.size();
  std::vector<std::size_t> tp(k, 0), n_pred(k, 0), n_gold(k, 0);
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] >= k || predicted[i] >= k) throw ContractError("score_labels: label id out of range");
    ++n_gold[gold[i]];
    ++n_pred[predicted[i]];
    if (gold[i] == predicted[i]) ++tp[gold[i]];
  }

  TaskMetrics m;
  m.mode = mode;
  m.neutral_excluded = excluded.has_value();
  m.n = gold.size();
  std::size_t members = 0, total_support = 0;
  for (std::size_t c = 0; c < k; ++c) {
    LabelScore s;
    s.label = label_names[c];
    s.support = n_gold[c];
    s.predicted = n_pred[c];
    s.precision = n_pred[c] ? static_cast<double>(tp[c]) / static_cast<double>(n_pred[c]) : 0.0;
    s.recall = n_gold[c] ? static_cast<double>(tp[c]) / static_cast<double>(n_gold[c]) : 0.0;
    s.f1 = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    s.averaged = (n_gold[c] > 0 || n_pred[c] > 0) && excluded != c;
    if (s.averaged) {
      ++members;
      total_support += n_gold[c];
    }
    m.per_label.push_back(std::move(s));
  }

  double sp = 0.0, sr = 0.0, sf = 0.0;
  for (const auto& s : m.per_label) {
    if (!s.averaged) continue;
    const double w = mode == Averaging::macro ? 1.0 : static_cast<double>(s.support);
    sp += w * s.precision;
    sr += w * s.recall;
    sf += w * s.f1;
  }
  const double norm = mode == Averaging::macro ? static_cast<double>(members) : static_cast<double>(total_support);
  if (norm > 0.0) {
    m.precision = sp / norm;
    m.recall = sr / norm;
    m.f1 = sf / norm;
  }
  return m;
}

EvalOptions protocol_options(const std::string& protocol) {
  EvalOptions o;
  if (protocol == "mastodon") {
    o.sentiment_mode = Averaging::macro;
    o.act_mode = Averaging::weighted;
    o.exclude_neutral = true;
  } else if (protocol == "dailydialog") {
    o.sentiment_mode = Averaging::macro;
    o.act_mode = Averaging::macro;
  } else {
    throw ConfigError("unknown protocol '" + protocol + "' (expected mastodon or dailydialog)");
  }
  return o;
}

namespace {

json task_json(const TaskMetrics& t) {
  json labels = json::array();
  for (const auto& s : t.per_label)
    labels.push_back({{"label", s.label},
                      {"precision", s.precision},
                      {"recall", s.recall},
                      {"f1", s.f1},
                      {"support", s.support},
                      {"predicted", s.predicted},
                      {"averaged", s.averaged}});
  return json{{"mode", to_string(t.mode)}, {"neutral_excluded", t.neutral_excluded},
              {"precision", t.precision},  {"recall", t.recall},
              {"f1", t.f1},                {"n", t.n},
              {"per_label", std::move(labels)}};
}

void task_table(std::ostream& os, const char* title, const TaskMetrics& t) {
  os << title << " (" << to_string(t.mode) << (t.neutral_excluded ? ", neutral excluded" : "") << ", n=" << t.n
     << ")\n";
  os << "  " << std::left << std::setw(16) << "label" << std::right << std::setw(10) << "P" << std::setw(10) << "R"
     << std::setw(10) << "F1" << std::setw(10) << "support" << "\n";
  os << std::fixed << std::setprecision(4);
  for (const auto& s : t.per_label)
    os << "  " << std::left << std::setw(16) << (s.averaged ? s.label : s.label + "*") << std::right << std::setw(10)
       << s.precision << std::setw(10) << s.recall << std::setw(10) << s.f1 << std::setw(10) << s.support << "\n";
  os << "  " << std::left << std::setw(16) << "average" << std::right << std::setw(10) << t.precision
     << std::setw(10) << t.recall << std::setw(10) << t.f1 << "\n";
  os.unsetf(std::ios::floatfield);
}

}  // namespace

json MetricsReport::to_json() const {
  return json{{"dsc", task_json(sentiment)}, {"dar", task_json(act)}, {"combined_f1", combined_f1()}};
}

std::string MetricsReport::to_table() const {
  std::ostringstream os;
  task_table(os, "DSC", sentiment);
  task_table(os, "DAR", act);
  os << "(* = not in the averaged class set)\n";
  return os.str();
}

LabeledPredictions predict_labels(const Model& model, const DialogSet& data) {
  LabeledPredictions p;
  for (const auto& d : data.dialogs) {
    PredictionBundle b = model.predict(d);
    auto ps = argmax_rows(b.y_s), pa = argmax_rows(b.y_a);
    for (std::size_t i = 0; i < d.size(); ++i) {
      p.gold_s.push_back(d.utterances[i].sentiment);
      p.gold_a.push_back(d.utterances[i].act);
      p.pred_s.push_back(ps[i]);
      p.pred_a.push_back(pa[i]);
    }
  }
  return p;
}

MetricsReport score_predictions(const LabeledPredictions& p, const LabelSpace& labels, const EvalOptions& opts) {
  std::optional<std::size_t> neutral = opts.exclude_neutral ? labels.neutral_id : std::nullopt;
  std::vector<std::size_t> pred_s = p.pred_s, gold_s = p.gold_s;
  if (opts.drop_neutral_utterances && labels.neutral_id) {
    pred_s.clear();
    gold_s.clear();
    for (std::size_t i = 0; i < p.gold_s.size(); ++i) {
      if (p.gold_s[i] == *labels.neutral_id) continue;
      pred_s.push_back(p.pred_s[i]);
      gold_s.push_back(p.gold_s[i]);
    }
  }
  MetricsReport r;
  r.sentiment = score_labels(pred_s, gold_s, labels.sentiment_labels, opts.sentiment_mode, neutral);
  r.act = score_labels(p.pred_a, p.gold_a, labels.act_labels, opts.act_mode);
  return r;
}

MetricsReport evaluate(const Model& model, const DialogSet& data, const EvalOptions& opts) {
  if (data.empty()) throw DataError("evaluate: empty data set");
  if (!(data.labels == model.labels())) throw DataError("evaluate: data label space does not match the model");
  return score_predictions(predict_labels(model, data), model.labels(), opts);
}

MetricsReport evaluate(const Checkpoint& ckpt, const DialogSet& data, const EvalOptions& opts) {
  return evaluate(model_from_checkpoint(ckpt), data, opts);
}

MetricsReport evaluate(const Checkpoint& ckpt, const DialogSet& data, Averaging mode, bool exclude_neutral) {
  EvalOptions o;
  o.sentiment_mode = o.act_mode = mode;
  o.exclude_neutral = exclude_neutral;
  return evaluate(ckpt, data, o);
}

Variant parse_variant(const std::string& name) {
  Variant v;
  v.name = name;
  std::istringstream is(name);
  for (std::string part; std::getline(is, part, '+');) {
    if (part == "full") continue;
    if (part == "no_fsn") v.no_fsn = true;
    else if (part == "no_bmin") v.no_bmin = true;
    else if (part == "no_cl_dl") v.no_cl_dl = true;
    else throw ConfigError("unknown ablation variant '" + part + "'");
  }
  return v;
}

std::vector<Variant> parse_variants(const std::string& comma_separated) {
  std::vector<Variant> out;
  std::istringstream is(comma_separated);
  for (std::string part; std::getline(is, part, ',');)
    if (!part.empty()) out.push_back(parse_variant(part));
  if (out.empty()) throw ConfigError("ablate: at least one variant is required");
  return out;
}

std::vector<AblationRow> ablate(const TrainConfig& cfg, const std::vector<Variant>& variants,
                                const DialogSet& train_set, const DialogSet& dev, const DialogSet& test) {
  if (variants.empty()) throw ConfigError("ablate: at least one variant is required");
  const EvalOptions opts = protocol_options(cfg.protocol);
  std::vector<AblationRow> rows;
  for (const Variant& v : variants) {
    TrainConfig vc = cfg;
    vc.no_fsn = cfg.no_fsn || v.no_fsn;
    vc.no_bmin = cfg.no_bmin || v.no_bmin;
    vc.no_cl_dl = cfg.no_cl_dl || v.no_cl_dl;
    Checkpoint ckpt = train(vc, train_set, dev);
    AblationRow row;
    row.variant = v.name;
    row.report = evaluate(ckpt, test, opts);
    row.dsc_f1 = row.report.sentiment.f1;
    row.dar_f1 = row.report.act.f1;
    rows.push_back(std::move(row));
  }
  return rows;
}

json ablation_to_json(const std::vector<AblationRow>& rows) {
  json out = json::array();
  for (const auto& r : rows)
    out.push_back({{"variant", r.variant}, {"dsc_f1", r.dsc_f1}, {"dar_f1", r.dar_f1}, {"report", r.report.to_json()}});
  return out;
}

std::string ablation_to_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(24) << "variant" << std::right << std::setw(10) << "DSC F1" << std::setw(10)
     << "DAR F1" << "\n"
     << std::fixed << std::setprecision(4);
  for (const auto& r : rows)
    os << std::left << std::setw(24) << r.variant << std::right << std::setw(10) << r.dsc_f1 << std::setw(10)
       << r.dar_f1 << "\n";
  return os.str();
}

}  // namespace bmim

namespace bmim {

namespace {

json traces_json(const std::vector<AttentionTrace>& hops) {
  json out = json::array();
  for (const auto& h : hops) {
    json rows = json::array();
    for (std::size_t i = 0; i < h.alpha.rows(); ++i) {
      auto r = h.alpha.row(i);
      rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    out.push_back(std::move(rows));
  }
  return out;
}

}  // namespace

json attention_dump(const Model& model, const DialogSet& data) {
  json out = json::array();
  for (const auto& d : data.dialogs) {
    ad::Tape tape;
    BminTraces traces;
    model.forward(tape, dialog_token_ids(d, model.vocab()), &traces);
    out.push_back({{"dialog_id", d.id},
                   {"sentiment_fb", traces_json(traces.sentiment_fb)},
                   {"sentiment_bf", traces_json(traces.sentiment_bf)},
                   {"act_fb", traces_json(traces.act_fb)},
                   {"act_bf", traces_json(traces.act_bf)}});
  }
  return out;
}

std::string label_embeddings_tsv(const Checkpoint& ckpt) {
  auto it = std::find_if(ckpt.arrays.begin(), ckpt.arrays.end(),
                         [](const NamedArray& a) { return a.name == "heads.label_embeddings"; });
  if (it == ckpt.arrays.end()) throw LoadError("checkpoint has no label embeddings");
  const Matrix& e = it->value;
  if (e.rows() != ckpt.labels.joint_size()) throw LoadError("label embedding table does not match the label space");
  std::ostringstream os;
  os << std::setprecision(17);
  os << "label\ttask";
  for (std::size_t c = 0; c < e.cols(); ++c) os << "\te" << c;
  os << "\n";
  for (std::size_t r = 0; r < e.rows(); ++r) {
    const bool is_sentiment = r < ckpt.labels.num_sentiments();
    os << (is_sentiment ? ckpt.labels.sentiment_labels[r] : ckpt.labels.act_labels[r - ckpt.labels.num_sentiments()])
       << '\t' << (is_sentiment ? "sentiment" : "act");
    for (std::size_t c = 0; c < e.cols(); ++c) os << '\t' << e(r, c);
    os << "\n";
  }
  return os.str();
}

}  // namespace bmim
