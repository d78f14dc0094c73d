#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "bmim/heads.hpp"

namespace bmim {

// Hyperparameters and run settings. Serialized as flat JSON with dotted keys,
// e.g. {"arch": "a", "model.d": 128, "train.seed": 7}.
struct TrainConfig {
  Arch arch = Arch::a;

  std::size_t d_w = 64;
  std::size_t d = 128;
  std::size_t d_e = 64;
  std::size_t hops = 3;
  bool shared_gate = false;

  double tau = 0.5;
  double eps = 1e-8;
  double lambda_cl = 1.0;
  double lambda_dl = 1.0;

  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 5.0;  // global gradient-norm clip; 0 disables

  std::size_t epochs = 50;
  std::size_t batch_size = 16;
  std::size_t patience = 10;
  std::uint64_t seed = 1;

  bool no_fsn = false;
  bool no_bmin = false;
  bool no_cl_dl = false;

  std::string protocol = "dailydialog";  // dev-set model selection metric

  std::string train_path;
  std::string dev_path;
  std::string test_path;

  double effective_lambda_cl() const { return no_cl_dl ? 0.0 : lambda_cl; }
  double effective_lambda_dl() const { return no_cl_dl ? 0.0 : lambda_dl; }

  nlohmann::json to_json() const;
  // Rejects unknown keys and ill-typed values with ConfigError.
  static TrainConfig from_json(const nlohmann::json& j);
  void apply(const nlohmann::json& flat);
  // "key=value"; the value is parsed as JSON when possible, otherwise taken as a string.
  void apply_override(const std::string& assignment);
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

TrainConfig load_config(const std::filesystem::path& path);
void save_json_atomic(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace bmim
