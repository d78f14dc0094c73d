#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bmim/config.hpp"
#include "bmim/corpus.hpp"
#include "bmim/model.hpp"

namespace bmim {

struct Checkpoint;

enum class Averaging { weighted, macro };

Averaging parse_averaging(const std::string& name);
std::string to_string(Averaging mode);

struct LabelScore {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;    // gold count
  std::size_t predicted = 0;  // predicted count
  bool averaged = false;      // member of the averaged class set

  friend bool operator==(const LabelScore&, const LabelScore&) = default;
};

struct TaskMetrics {
  Averaging mode = Averaging::macro;
  bool neutral_excluded = false;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t n = 0;
  std::vector<LabelScore> per_label;

  friend bool operator==(const TaskMetrics&, const TaskMetrics&) = default;
};

// Metric core. The averaged class set is every label that occurs in gold or
// predictions, minus `excluded` (if any); excluded items stay in the
// confusion counts. Zero divisions yield 0. Weighted mode weights each class
// by its gold support over the averaged set.
TaskMetrics score_labels(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& gold,
                         const std::vector<std::string>& label_names, Averaging mode,
                         std::optional<std::size_t> excluded = std::nullopt);

struct EvalOptions {
  Averaging sentiment_mode = Averaging::macro;
  Averaging act_mode = Averaging::macro;
  bool exclude_neutral = false;
  // Alternative reading of neutral exclusion: drop neutral-gold utterances from DSC scoring.
  bool drop_neutral_utterances = false;
};

// mastodon: DSC macro without neutral, DAR weighted. dailydialog: macro for both.
EvalOptions protocol_options(const std::string& protocol);

struct MetricsReport {
  TaskMetrics sentiment;
  TaskMetrics act;

  double combined_f1() const { return 0.5 * (sentiment.f1 + act.f1); }
  nlohmann::json to_json() const;
  std::string to_table() const;
};

struct LabeledPredictions {
  std::vector<std::size_t> gold_s, gold_a, pred_s, pred_a;
};

LabeledPredictions predict_labels(const Model& model, const DialogSet& data);
MetricsReport score_predictions(const LabeledPredictions& p, const LabelSpace& labels, const EvalOptions& opts);
MetricsReport evaluate(const Model& model, const DialogSet& data, const EvalOptions& opts);
MetricsReport evaluate(const Checkpoint& ckpt, const DialogSet& data, const EvalOptions& opts);
// Same averaging mode for both tasks.
MetricsReport evaluate(const Checkpoint& ckpt, const DialogSet& data, Averaging mode, bool exclude_neutral);

struct Variant {
  std::string name;
  bool no_fsn = false;
  bool no_bmin = false;
  bool no_cl_dl = false;
};

// Accepts "full", "no_fsn", "no_bmin", "no_cl_dl" and '+'-joined combinations.
Variant parse_variant(const std::string& name);
std::vector<Variant> parse_variants(const std::string& comma_separated);

struct AblationRow {
  std::string variant;
  double dsc_f1 = 0.0;
  double dar_f1 = 0.0;
  MetricsReport report;
};

// Trains every variant from the same seed and scores it on `test` under cfg.protocol.
std::vector<AblationRow> ablate(const TrainConfig& cfg, const std::vector<Variant>& variants,
                                const DialogSet& train, const DialogSet& dev, const DialogSet& test);
nlohmann::json ablation_to_json(const std::vector<AblationRow>& rows);
std::string ablation_to_table(const std::vector<AblationRow>& rows);

}  // namespace bmim

namespace bmim {

// Per-dialog attention weights for every hop and direction.
nlohmann::json attention_dump(const Model& model, const DialogSet& data);

// Header "label\ttask\te0..e{d_e-1}", then one row per label (sentiments first).
std::string label_embeddings_tsv(const Checkpoint& ckpt);

}  // namespace bmim
