#include "bmim/config.hpp"

#include <fstream>

#include "bmim/errors.hpp"

namespace bmim {

using nlohmann::json;

namespace {

template <typename T>
T get_as(const json& v, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("config key '" + key + "' must be a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() || (v.is_number_integer() && v.get<long long>() < 0))
        throw ConfigError("config key '" + key + "' must be a non-negative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError("config key '" + key + "' must be a number");
    } else {
      if (!v.is_string()) throw ConfigError("config key '" + key + "' must be a string");
    }
    return v.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

}  // namespace

json TrainConfig::to_json() const {
  return json{
      {"arch", to_string(arch)},
      {"model.d_w", d_w},
      {"model.d", d},
      {"model.d_e", d_e},
      {"model.hops", hops},
      {"fsn.shared_gate", shared_gate},
      {"loss.tau", tau},
      {"loss.eps", eps},
      {"loss.lambda_cl", lambda_cl},
      {"loss.lambda_dl", lambda_dl},
      {"optim.lr", lr},
      {"optim.beta1", beta1},
      {"optim.beta2", beta2},
      {"optim.eps", adam_eps},
      {"optim.clip_norm", clip_norm},
      {"train.epochs", epochs},
      {"train.batch_size", batch_size},
      {"train.patience", patience},
      {"train.seed", seed},
      {"ablation.no_fsn", no_fsn},
      {"ablation.no_bmin", no_bmin},
      {"ablation.no_cl_dl", no_cl_dl},
      {"eval.protocol", protocol},
      {"data.train", train_path},
      {"data.dev", dev_path},
      {"data.test", test_path},
  };
}

void TrainConfig::apply(const json& flat) {
  if (!flat.is_object()) throw ConfigError("config must be a flat JSON object");
  for (const auto& [key, v] : flat.items()) {
    if (key == "arch") arch = parse_arch(get_as<std::string>(v, key));
    else if (key == "model.d_w") d_w = get_as<std::size_t>(v, key);
    else if (key == "model.d") d = get_as<std::size_t>(v, key);
    else if (key == "model.d_e") d_e = get_as<std::size_t>(v, key);
    else if (key == "model.hops") hops = get_as<std::size_t>(v, key);
    else if (key == "fsn.shared_gate") shared_gate = get_as<bool>(v, key);
    else if (key == "loss.tau") tau = get_as<double>(v, key);
    else if (key == "loss.eps") eps = get_as<double>(v, key);
    else if (key == "loss.lambda_cl") lambda_cl = get_as<double>(v, key);
    else if (key == "loss.lambda_dl") lambda_dl = get_as<double>(v, key);
    else if (key == "optim.lr") lr = get_as<double>(v, key);
    else if (key == "optim.beta1") beta1 = get_as<double>(v, key);
    else if (key == "optim.beta2") beta2 = get_as<double>(v, key);
    else if (key == "optim.eps") adam_eps = get_as<double>(v, key);
    else if (key == "optim.clip_norm") clip_norm = get_as<double>(v, key);
    else if (key == "train.epochs") epochs = get_as<std::size_t>(v, key);
    else if (key == "train.batch_size") batch_size = get_as<std::size_t>(v, key);
    else if (key == "train.patience") patience = get_as<std::size_t>(v, key);
    else if (key == "train.seed") seed = get_as<std::uint64_t>(v, key);
    else if (key == "ablation.no_fsn") no_fsn = get_as<bool>(v, key);
    else if (key == "ablation.no_bmin") no_bmin = get_as<bool>(v, key);
    else if (key == "ablation.no_cl_dl") no_cl_dl = get_as<bool>(v, key);
    else if (key == "eval.protocol") protocol = get_as<std::string>(v, key);
    else if (key == "data.train") train_path = get_as<std::string>(v, key);
    else if (key == "data.dev") dev_path = get_as<std::string>(v, key);
    else if (key == "data.test") test_path = get_as<std::string>(v, key);
    else throw ConfigError("unknown config key '" + key + "'");
  }
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig cfg;
  cfg.apply(j);
  cfg.validate();
  return cfg;
}

void TrainConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  apply(json{{key, value}});
}

void TrainConfig::validate() const {
  auto positive = [](double v) { return v > 0.0; };
  if (d_w == 0 || d == 0 || d_e == 0) throw ConfigError("model widths must be positive");
  if (d % 2 != 0) throw ConfigError("model.d must be even");
  if (hops < 1) throw ConfigError("model.hops must be >= 1");
  if (!positive(tau)) throw ConfigError("loss.tau must be > 0");
  if (eps < 0.0) throw ConfigError("loss.eps must be >= 0");
  if (lambda_cl < 0.0 || lambda_dl < 0.0) throw ConfigError("loss weights must be >= 0");
  if (lr < 0.0) throw ConfigError("optim.lr must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must be in [0, 1)");
  if (!positive(adam_eps)) throw ConfigError("optim.eps must be > 0");
  if (clip_norm < 0.0) throw ConfigError("optim.clip_norm must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (protocol != "mastodon" && protocol != "dailydialog")
    throw ConfigError("eval.protocol must be 'mastodon' or 'dailydialog'");
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path.string());
  return TrainConfig::from_json(j);
}

void save_json_atomic(const std::filesystem::path& path, const json& j) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace bmim
