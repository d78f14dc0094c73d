#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bmim/config.hpp"
#include "bmim/corpus.hpp"
#include "bmim/model.hpp"

namespace bmim {

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss_s = 0.0;
  double loss_a = 0.0;
  double loss_cl = 0.0;  // summed over batches (arch a)
  double loss_dl = 0.0;  // summed over batches (arch b/c)
  double total = 0.0;
  bool has_dev = false;
  double dev_dsc_f1 = 0.0;
  double dev_dar_f1 = 0.0;
  double dev_combined = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct History {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 0 when no epoch ran

  nlohmann::json to_json() const;
  static History from_json(const nlohmann::json& j);
  friend bool operator==(const History&, const History&) = default;
};

struct NamedArray {
  std::string name;
  Matrix value;

  friend bool operator==(const NamedArray&, const NamedArray&) = default;
};

struct Checkpoint {
  TrainConfig config;
  LabelSpace labels;
  Vocab vocab;
  std::vector<NamedArray> arrays;
  History history;
};

Checkpoint make_checkpoint(const Model& model, History history);
Model model_from_checkpoint(const Checkpoint& ckpt);

inline constexpr int kCheckpointSchemaVersion = 1;

// Directory layout: manifest.json, history.json, one little-endian float64 file per array.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

class Adam {
 public:
  Adam(ParameterSet& params, double lr, double beta1, double beta2, double eps);
  // Uses the gradients currently stored in the parameters.
  void step();
  double learning_rate() const { return lr_; }

 private:
  ParameterSet& params_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Matrix> m_, v_;
};

// Rescales all gradients so their joint L2 norm is at most max_norm. Returns the pre-clip norm.
double clip_gradients(ParameterSet& params, double max_norm);

struct BatchLoss {
  ad::Var total;
  LossBreakdown breakdown;
  std::size_t utterances = 0;
};

// Joint objective for one batch: cross-entropy sums over all utterances plus
// lambda_cl * L_cl (arch a) or lambda_dl * mean dual gap (arch b/c).
// Throws NumericError naming the first non-finite tensor.
BatchLoss batch_loss(ad::Tape& tape, const Model& model, const DialogSet& data, const Batch& batch,
                     const CooccurrenceSets& sets, const Marginals& marginals);

struct TrainCallbacks {
  std::function<void(const EpochRecord&)> on_epoch;
};

// Trains for at most cfg.epochs epochs, keeping the parameters with the best
// dev combined F1 (mean of DSC and DAR F1 under cfg.protocol).
Checkpoint train(const TrainConfig& cfg, const DialogSet& train_set, const DialogSet& dev_set,
                 const TrainCallbacks& callbacks = {});

struct GradcheckResult {
  double max_rel_err = 0.0;
  std::string worst_parameter;
  std::size_t coordinates = 0;
  double loss = 0.0;
  // max |g_a - g_n| / (1e-4 max(|g_a|, |g_n|) + 8 eps |L| / step); <= 1 means every
  // mismatch is within what rounding of L explains
  double max_roundoff_ratio = 0.0;
};

// Computes the loss; when `with_grad`, also leaves d(loss)/d(param) in each Parameter::grad.
using LossFunction = std::function<double(bool with_grad)>;

// Central differences vs analytic gradients on up to max_coords sampled
// coordinates per parameter array. rel = |ga - gn| / max(|ga|, |gn|, 1e-8).
GradcheckResult gradcheck(ParameterSet& params, const LossFunction& loss, double step, std::uint64_t seed,
                          std::size_t max_coords = 50);

// Full joint objective of a freshly initialized model on `batch`.
GradcheckResult gradcheck(const TrainConfig& cfg, const DialogSet& data, const Batch& batch, double step,
                          std::uint64_t seed);

}  // namespace bmim
