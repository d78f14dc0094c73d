#include "bmim/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "bmim/errors.hpp"
#include "bmim/rng.hpp"

namespace bmim {

using nlohmann::json;

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::optional<std::size_t> index_of(const std::vector<std::string>& v, const std::string& name) {
  auto it = std::find(v.begin(), v.end(), name);
  if (it == v.end()) return std::nullopt;
  return static_cast<std::size_t>(it - v.begin());
}

void check_unique(const std::vector<std::string>& v, const char* what) {
  std::set<std::string> seen(v.begin(), v.end());
  if (seen.size() != v.size()) throw DataError(std::string("duplicate ") + what + " label");
}

struct RawUtterance {
  std::string speaker, text, sentiment, act;
  std::vector<std::string> tokens;
};

struct RawDialog {
  std::string id;
  std::vector<RawUtterance> utterances;
};

std::string field_string(const json& j, const char* key, std::size_t line, bool required) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    if (required) throw DataError("line " + std::to_string(line) + ": missing field '" + key + "'");
    return {};
  }
  if (!it->is_string())
    throw DataError("line " + std::to_string(line) + ": field '" + key + "' must be a string");
  return it->get<std::string>();
}

RawDialog parse_line(const std::string& text, std::size_t line) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError("line " + std::to_string(line) + ": malformed JSON: " + e.what());
  }
  if (!j.is_object()) throw DataError("line " + std::to_string(line) + ": dialog record must be an object");
  RawDialog d;
  d.id = field_string(j, "dialog_id", line, true);
  auto it = j.find("utterances");
  if (it == j.end() || !it->is_array())
    throw DataError("line " + std::to_string(line) + ": 'utterances' must be an array");
  if (it->empty()) throw DataError("line " + std::to_string(line) + ": dialog '" + d.id + "' has no utterances");
  for (const json& u : *it) {
    if (!u.is_object()) throw DataError("line " + std::to_string(line) + ": utterance must be an object");
    RawUtterance r;
    r.speaker = field_string(u, "speaker", line, false);
    r.text = field_string(u, "text", line, false);
    r.sentiment = field_string(u, "sentiment", line, true);
    r.act = field_string(u, "act", line, true);
    if (auto tk = u.find("tokens"); tk != u.end() && !tk->is_null()) {
      if (!tk->is_array()) throw DataError("line " + std::to_string(line) + ": 'tokens' must be an array");
      for (const json& t : *tk) {
        if (!t.is_string()) throw DataError("line " + std::to_string(line) + ": tokens must be strings");
        r.tokens.push_back(t.get<std::string>());
      }
    } else {
      r.tokens = tokenize(r.text);
    }
    if (r.tokens.empty())
      throw DataError("line " + std::to_string(line) + ": utterance in dialog '" + d.id + "' has no tokens");
    d.utterances.push_back(std::move(r));
  }
  return d;
}

}  // namespace

LabelSpace::LabelSpace(std::vector<std::string> sentiments, std::vector<std::string> acts)
    : sentiment_labels(std::move(sentiments)), act_labels(std::move(acts)) {
  check_unique(sentiment_labels, "sentiment");
  check_unique(act_labels, "act");
  for (std::size_t i = 0; i < sentiment_labels.size(); ++i)
    if (lower(sentiment_labels[i]) == "neutral") neutral_id = i;
}

std::optional<std::size_t> LabelSpace::sentiment_id(const std::string& name) const {
  return index_of(sentiment_labels, name);
}

std::optional<std::size_t> LabelSpace::act_id(const std::string& name) const { return index_of(act_labels, name); }

std::size_t DialogSet::num_utterances() const {
  std::size_t n = 0;
  for (const auto& d : dialogs) n += d.size();
  return n;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::istringstream is(lower(text));
  std::vector<std::string> out;
  for (std::string tok; is >> tok;) out.push_back(tok);
  return out;
}

DialogSet parse_dialogs(std::istream& in, const std::optional<LabelSpace>& labels) {
  std::vector<RawDialog> raw;
  std::string text;
  for (std::size_t line = 1; std::getline(in, text); ++line) {
    if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    raw.push_back(parse_line(text, line));
  }

  DialogSet ds;
  if (labels) {
    ds.labels = *labels;
  } else {
    std::set<std::string> sents, acts;
    for (const auto& d : raw)
      for (const auto& u : d.utterances) {
        sents.insert(u.sentiment);
        acts.insert(u.act);
      }
    ds.labels = LabelSpace({sents.begin(), sents.end()}, {acts.begin(), acts.end()});
  }

  ds.dialogs.reserve(raw.size());
  for (auto& rd : raw) {
    Dialog d;
    d.id = std::move(rd.id);
    for (auto& ru : rd.utterances) {
      auto s = ds.labels.sentiment_id(ru.sentiment);
      if (!s) throw DataError("dialog '" + d.id + "': unknown sentiment label '" + ru.sentiment + "'");
      auto a = ds.labels.act_id(ru.act);
      if (!a) throw DataError("dialog '" + d.id + "': unknown act label '" + ru.act + "'");
      d.utterances.push_back(Utterance{std::move(ru.speaker), std::move(ru.text), std::move(ru.tokens), *s, *a});
    }
    ds.dialogs.push_back(std::move(d));
  }
  return ds;
}

DialogSet load_dialogs(const std::filesystem::path& path, const std::optional<LabelSpace>& labels) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dialog file: " + path.string());
  return parse_dialogs(in, labels);
}

void write_dialogs(std::ostream& out, const DialogSet& ds) {
  for (const auto& d : ds.dialogs) {
    json utts = json::array();
    for (const auto& u : d.utterances) {
      json ju = {{"speaker", u.speaker}};
      if (!u.text.empty()) ju["text"] = u.text;
      ju["tokens"] = u.tokens;
      ju["sentiment"] = ds.labels.sentiment_labels.at(u.sentiment);
      ju["act"] = ds.labels.act_labels.at(u.act);
      utts.push_back(std::move(ju));
    }
    json jd = {{"dialog_id", d.id}, {"utterances", std::move(utts)}};
    out << jd.dump() << '\n';
  }
}

void save_dialogs(const std::filesystem::path& path, const DialogSet& ds) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write dialog file: " + path.string());
    write_dialogs(out, ds);
    if (!out) throw DataError("write failed: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Vocab::Vocab() {
  tokens_.push_back(kUnknownToken);
  index_.emplace(kUnknownToken, kUnknown);
}

Vocab Vocab::build(const DialogSet& train) {
  std::set<std::string> seen;
  for (const auto& d : train.dialogs)
    for (const auto& u : d.utterances) seen.insert(u.tokens.begin(), u.tokens.end());
  seen.erase(kUnknownToken);
  Vocab v;
  for (const auto& t : seen) {
    v.index_.emplace(t, v.tokens_.size());
    v.tokens_.push_back(t);
  }
  return v;
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  if (tokens.empty() || tokens.front() != kUnknownToken) throw DataError("vocabulary must start with <unk>");
  Vocab v;
  v.tokens_ = std::move(tokens);
  v.index_.clear();
  for (std::size_t i = 0; i < v.tokens_.size(); ++i)
    if (!v.index_.emplace(v.tokens_[i], i).second) throw DataError("duplicate vocabulary token: " + v.tokens_[i]);
  return v;
}

std::size_t Vocab::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnknown : it->second;
}

std::vector<std::size_t> Vocab::ids(const std::vector<std::string>& tokens) const {
  std::vector<std::size_t> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

CooccurrenceSets cooccurrence_sets(const DialogSet& train, const LabelSpace& labels) {
  const std::size_t l = labels.joint_size();
  // Only cross-task pairs can share an utterance.
  std::vector<std::vector<char>> co(l, std::vector<char>(l, 0));
  for (const auto& d : train.dialogs)
    for (const auto& u : d.utterances) {
      const std::size_t s = labels.joint_sentiment(u.sentiment), a = labels.joint_act(u.act);
      co[s][a] = co[a][s] = 1;
    }
  CooccurrenceSets sets;
  sets.positives.resize(l);
  sets.negatives.resize(l);
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t j = 0; j < l; ++j) {
      if (i == j) continue;
      (co[i][j] ? sets.positives : sets.negatives)[i].push_back(j);
    }
  return sets;
}

Marginals empirical_marginals(const DialogSet& train) {
  Marginals m;
  m.sentiment.assign(train.labels.num_sentiments(), 0.0);
  m.act.assign(train.labels.num_acts(), 0.0);
  const double n = static_cast<double>(train.num_utterances());
  if (n == 0) throw ContractError("empirical_marginals: empty training set");
  for (const auto& d : train.dialogs)
    for (const auto& u : d.utterances) {
      m.sentiment[u.sentiment] += 1.0;
      m.act[u.act] += 1.0;
    }
  for (double& p : m.sentiment) p /= n;
  for (double& p : m.act) p /= n;
  return m;
}

std::vector<std::vector<double>> deterministic_sent_table(std::size_t n_acts, std::size_t n_sentiments) {
  std::vector<std::vector<double>> t(n_acts, std::vector<double>(n_sentiments, 0.0));
  for (std::size_t a = 0; a < n_acts; ++a) t[a][a % n_sentiments] = 1.0;
  return t;
}

SyntheticSpec default_synthetic_spec(std::size_t n_acts, std::size_t n_sentiments) {
  SyntheticSpec spec;
  spec.act_table.assign(n_acts, 1.0 / static_cast<double>(n_acts));
  spec.sent_table = deterministic_sent_table(n_acts, n_sentiments);
  return spec;
}

namespace {

void check_distribution(const std::vector<double>& p, const std::string& what) {
  if (p.empty()) throw ConfigError(what + ": empty probability table");
  double total = 0.0;
  for (double x : p) {
    if (!std::isfinite(x) || x < 0.0) throw ConfigError(what + ": entries must be finite and non-negative");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-6) throw ConfigError(what + ": probabilities must sum to 1");
}

std::string padded(const std::string& prefix, std::size_t k, std::size_t count) {
  std::ostringstream os;
  os << prefix << std::setw(static_cast<int>(std::to_string(count - 1).size())) << std::setfill('0') << k;
  return os.str();
}

}  // namespace

DialogSet generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  check_distribution(spec.act_table, "act_table");
  const std::size_t n_acts = spec.act_table.size();
  if (spec.sent_table.size() != n_acts) throw ConfigError("sent_table must have one row per act");
  const std::size_t n_sents = spec.sent_table.front().size();
  for (std::size_t a = 0; a < n_acts; ++a) {
    if (spec.sent_table[a].size() != n_sents) throw ConfigError("sent_table rows must have equal length");
    check_distribution(spec.sent_table[a], "sent_table row " + std::to_string(a));
  }
  const double act_cue = spec.cue_strength;
  const double sent_cue = spec.sentiment_cue_strength.value_or(spec.cue_strength);
  if (!(act_cue >= 0.0 && act_cue <= 1.0) || !(sent_cue >= 0.0 && sent_cue <= 1.0))
    throw ConfigError("cue strengths must lie in [0, 1]");
  if (spec.min_len < 1 || spec.min_len > spec.max_len) throw ConfigError("invalid dialog length range");
  if (spec.min_tokens < 1 || spec.min_tokens > spec.max_tokens) throw ConfigError("invalid token count range");
  if (spec.cues_per_label < 1) throw ConfigError("cues_per_label must be >= 1");
  const std::size_t n_cues = spec.cues_per_label * (n_acts + n_sents);
  if (spec.vocab_size <= n_cues) throw ConfigError("vocab_size too small for the cue tokens");

  std::vector<std::string> sentiment_names;
  if (n_sents == 3) {
    sentiment_names = {"negative", "neutral", "positive"};
  } else {
    for (std::size_t s = 0; s < n_sents; ++s) sentiment_names.push_back(padded("sent", s, n_sents));
  }
  std::vector<std::string> act_names;
  for (std::size_t a = 0; a < n_acts; ++a) act_names.push_back(padded("act", a, n_acts));

  std::vector<std::string> words;
  for (std::size_t w = 0; w < spec.vocab_size; ++w) words.push_back(padded("w", w, spec.vocab_size));
  const std::size_t first_filler = n_cues;
  const std::size_t n_filler = spec.vocab_size - n_cues;
  auto act_cue_word = [&](std::size_t a, std::size_t k) { return words[a * spec.cues_per_label + k]; };
  auto sent_cue_word = [&](std::size_t s, std::size_t k) {
    return words[(n_acts + s) * spec.cues_per_label + k];
  };

  Rng rng(seed);
  DialogSet ds;
  ds.labels = LabelSpace(sentiment_names, act_names);
  ds.dialogs.reserve(spec.n_dialogs);
  for (std::size_t d = 0; d < spec.n_dialogs; ++d) {
    Dialog dialog;
    dialog.id = padded("syn", d, std::max<std::size_t>(spec.n_dialogs, 2));
    const std::size_t len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
    for (std::size_t i = 0; i < len; ++i) {
      Utterance u;
      u.speaker = (i % 2 == 0) ? "A" : "B";
      u.act = rng.categorical(spec.act_table);
      u.sentiment = rng.categorical(spec.sent_table[u.act]);
      const std::size_t n_tok = spec.min_tokens + rng.below(spec.max_tokens - spec.min_tokens + 1);
      for (std::size_t k = 0; k < n_tok; ++k) u.tokens.push_back(words[first_filler + rng.below(n_filler)]);
      if (rng.uniform() < act_cue) {
        const std::string cue = act_cue_word(u.act, rng.below(spec.cues_per_label));
        u.tokens.insert(u.tokens.begin() + static_cast<std::ptrdiff_t>(rng.below(u.tokens.size() + 1)), cue);
      }
      if (rng.uniform() < sent_cue) {
        const std::string cue = sent_cue_word(u.sentiment, rng.below(spec.cues_per_label));
        u.tokens.insert(u.tokens.begin() + static_cast<std::ptrdiff_t>(rng.below(u.tokens.size() + 1)), cue);
      }
      dialog.utterances.push_back(std::move(u));
    }
    ds.dialogs.push_back(std::move(dialog));
  }
  return ds;
}

std::vector<Batch> batch_dialogs(const DialogSet& ds, std::size_t batch_size,
                                 std::optional<std::uint64_t> shuffle_seed) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  std::vector<std::size_t> order(ds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (shuffle_seed) {
    Rng rng(*shuffle_seed);
    rng.shuffle(order);
  }
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    batches.push_back(Batch{{order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end)}});
  }
  return batches;
}

}  // namespace bmim
