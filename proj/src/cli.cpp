#include "bmim/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "bmim/errors.hpp"
#include "bmim/evaluation.hpp"
#include "bmim/training.hpp"

namespace bmim::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("--config", args.config_path, "Flat JSON config with dotted keys");
  cmd->add_option("--set", args.overrides, "Override a config key (key=value), repeatable");
  cmd->add_option("--seed", args.seed, "Shortcut for --set train.seed=N");
}

// File config, then --set overrides, then --seed; BMIM_SEED only when nothing set the seed.
TrainConfig resolve_config(const ConfigArgs& args) {
  TrainConfig cfg;
  bool seed_set = false;
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path);
    if (!in) throw ConfigError("cannot open config file: " + args.config_path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + args.config_path);
    cfg.apply(j);
    seed_set = j.is_object() && j.contains("train.seed");
  }
  for (const auto& o : args.overrides) {
    cfg.apply_override(o);
    if (o.rfind("train.seed=", 0) == 0) seed_set = true;
  }
  if (args.seed) {
    cfg.seed = *args.seed;
    seed_set = true;
  }
  if (!seed_set) {
    if (const char* env = std::getenv("BMIM_SEED"); env != nullptr && *env != '\0') {
      try {
        cfg.seed = std::stoull(env);
      } catch (const std::exception&) {
        throw ConfigError(std::string("BMIM_SEED is not an unsigned integer: ") + env);
      }
    }
  }
  cfg.validate();
  return cfg;
}

DialogSet load_optional(const std::string& path, const std::optional<LabelSpace>& labels) {
  if (path.empty()) return DialogSet{{}, labels.value_or(LabelSpace{})};
  return load_dialogs(path, labels);
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path.string());
  }
  fs::rename(tmp, path);
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  json j = json::parse(text, nullptr, false);
  if (!j.is_discarded() && j.is_array()) {
    try {
      return j.get<std::vector<double>>();
    } catch (const json::exception&) {
    }
  }
  std::vector<double> out;
  std::istringstream is(text);
  for (std::string part; std::getline(is, part, ',');) {
    try {
      out.push_back(std::stod(part));
    } catch (const std::exception&) {
      throw ConfigError(std::string(what) + ": cannot parse '" + part + "'");
    }
  }
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Joint dialog sentiment classification and act recognition"};
  app.require_subcommand(1);

  // synth
  SyntheticSpec spec = default_synthetic_spec();
  std::string synth_out, act_table, sent_table = "deterministic";
  std::size_t n_acts = 5, n_sents = 3;
  std::uint64_t synth_seed = 0;
  std::optional<double> sent_cue;
  auto* synth = app.add_subcommand("synth", "Write a synthetic JSONL corpus");
  synth->add_option("--out", synth_out, "Output JSONL path")->required();
  synth->add_option("--dialogs", spec.n_dialogs, "Number of dialogs");
  synth->add_option("--seed", synth_seed, "Generator seed (default: BMIM_SEED or 1)");
  synth->add_option("--min-len", spec.min_len, "Minimum utterances per dialog");
  synth->add_option("--max-len", spec.max_len, "Maximum utterances per dialog");
  synth->add_option("--min-tokens", spec.min_tokens, "Minimum filler tokens per utterance");
  synth->add_option("--max-tokens", spec.max_tokens, "Maximum filler tokens per utterance");
  synth->add_option("--vocab", spec.vocab_size, "Vocabulary size");
  synth->add_option("--acts", n_acts, "Number of act labels");
  synth->add_option("--sentiments", n_sents, "Number of sentiment labels");
  synth->add_option("--cue-strength", spec.cue_strength, "Probability of a lexical cue token");
  synth->add_option("--sentiment-cue-strength", sent_cue, "Probability of a sentiment cue (default: cue strength)");
  synth->add_option("--act-table", act_table, "P(a) as a JSON array or comma list (default: uniform)");
  synth->add_option("--sent-table", sent_table, "'deterministic' or P(s|a) as a JSON array of rows");

  // train
  ConfigArgs train_cfg;
  std::string train_path, dev_path, train_out;
  bool quiet = false;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint directory");
  add_config_options(train_cmd, train_cfg);
  train_cmd->add_option("--train", train_path, "Training JSONL (overrides data.train)");
  train_cmd->add_option("--dev", dev_path, "Dev JSONL for model selection (overrides data.dev)");
  train_cmd->add_option("--out", train_out, "Checkpoint directory")->required();
  train_cmd->add_flag("--quiet", quiet, "No per-epoch progress");

  // eval
  std::string eval_ckpt, eval_data, eval_out, eval_mode, protocol = "dailydialog", attention_out;
  bool exclude_neutral = false, drop_neutral = false;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a labeled corpus");
  eval_cmd->add_option("--ckpt", eval_ckpt, "Checkpoint directory")->required();
  eval_cmd->add_option("--data", eval_data, "Labeled JSONL")->required();
  eval_cmd->add_option("--protocol", protocol, "mastodon or dailydialog");
  eval_cmd->add_option("--mode", eval_mode, "weighted or macro for both tasks (overrides the protocol)");
  eval_cmd->add_flag("--exclude-neutral", exclude_neutral, "Drop the neutral class from DSC averaging");
  eval_cmd->add_flag("--drop-neutral-utterances", drop_neutral, "Drop neutral-gold utterances from DSC scoring");
  eval_cmd->add_option("--out", eval_out, "Report JSON path");
  eval_cmd->add_option("--attention-dump", attention_out, "Write per-hop attention weights as JSON");

  // ablate
  ConfigArgs ablate_cfg;
  std::string ab_train, ab_dev, ab_test, ab_out, variants = "full,no_bmin,no_cl_dl,no_fsn";
  auto* ablate_cmd = app.add_subcommand("ablate", "Train and compare ablation variants");
  add_config_options(ablate_cmd, ablate_cfg);
  ablate_cmd->add_option("--train", ab_train, "Training JSONL");
  ablate_cmd->add_option("--dev", ab_dev, "Dev JSONL");
  ablate_cmd->add_option("--test", ab_test, "Test JSONL");
  ablate_cmd->add_option("--variants", variants, "Comma-separated variants");
  ablate_cmd->add_option("--out", ab_out, "Comparison table JSON path");

  // gradcheck
  ConfigArgs gc_cfg;
  std::string gc_data, gc_out;
  double gc_step = 1e-5, gc_threshold = 1e-4;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  add_config_options(gc_cmd, gc_cfg);
  gc_cmd->add_option("--data", gc_data, "JSONL to draw the batch from (default: synthetic)");
  gc_cmd->add_option("--step", gc_step, "Central-difference step");
  gc_cmd->add_option("--threshold", gc_threshold, "Fail (exit 4) above this relative error");
  gc_cmd->add_option("--out", gc_out, "Report JSON path");

  // export-embeddings
  std::string ex_ckpt, ex_out;
  auto* export_cmd = app.add_subcommand("export-embeddings", "Write label embeddings as TSV");
  export_cmd->add_option("--ckpt", ex_ckpt, "Checkpoint directory")->required();
  export_cmd->add_option("--out", ex_out, "TSV path")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (*synth) {
      if (!act_table.empty()) {
        spec.act_table = parse_list(act_table, "--act-table");
        n_acts = spec.act_table.size();
      } else {
        spec.act_table.assign(n_acts, 1.0 / static_cast<double>(n_acts));
      }
      if (sent_table == "deterministic") {
        spec.sent_table = deterministic_sent_table(n_acts, n_sents);
      } else {
        json j = json::parse(sent_table, nullptr, false);
        if (j.is_discarded()) throw ConfigError("--sent-table must be 'deterministic' or a JSON array of rows");
        try {
          spec.sent_table = j.get<std::vector<std::vector<double>>>();
        } catch (const json::exception&) {
          throw ConfigError("--sent-table must be a JSON array of numeric rows");
        }
      }
      spec.sentiment_cue_strength = sent_cue;
      if (synth->count("--seed") == 0) {
        ConfigArgs none;
        synth_seed = resolve_config(none).seed;
      }
      save_dialogs(synth_out, generate_synthetic(spec, synth_seed));
      return kExitOk;
    }

    if (*train_cmd) {
      TrainConfig cfg = resolve_config(train_cfg);
      if (!train_path.empty()) cfg.train_path = train_path;
      if (!dev_path.empty()) cfg.dev_path = dev_path;
      if (cfg.train_path.empty()) throw ConfigError("train: no training data (use --train or data.train)");
      DialogSet train_set = load_dialogs(cfg.train_path);
      DialogSet dev_set = load_optional(cfg.dev_path, train_set.labels);
      TrainCallbacks cb;
      if (!quiet)
        cb.on_epoch = [&](const EpochRecord& r) {
          err << "epoch " << r.epoch << " loss " << r.total;
          if (r.has_dev) err << " dev_dsc_f1 " << r.dev_dsc_f1 << " dev_dar_f1 " << r.dev_dar_f1;
          err << "\n";
        };
      Checkpoint ckpt = train(cfg, train_set, dev_set, cb);
      save_checkpoint(ckpt, train_out);
      save_json_atomic(fs::path(train_out) / "config.json", cfg.to_json());
      return kExitOk;
    }

    if (*eval_cmd) {
      Checkpoint ckpt = load_checkpoint(eval_ckpt);
      DialogSet data = load_dialogs(eval_data, ckpt.labels);
      EvalOptions opts = protocol_options(protocol);
      if (!eval_mode.empty()) opts.sentiment_mode = opts.act_mode = parse_averaging(eval_mode);
      if (exclude_neutral) opts.exclude_neutral = true;
      opts.drop_neutral_utterances = drop_neutral;
      Model model = model_from_checkpoint(ckpt);
      MetricsReport report = evaluate(model, data, opts);
      out << report.to_table();
      if (!eval_out.empty()) {
        json j = report.to_json();
        j["options"] = {{"protocol", protocol},
                        {"dsc_mode", to_string(opts.sentiment_mode)},
                        {"dar_mode", to_string(opts.act_mode)},
                        {"exclude_neutral", opts.exclude_neutral},
                        {"drop_neutral_utterances", opts.drop_neutral_utterances},
                        {"ckpt", eval_ckpt},
                        {"data", eval_data}};
        save_json_atomic(eval_out, j);
      }
      if (!attention_out.empty()) save_json_atomic(attention_out, attention_dump(model, data));
      return kExitOk;
    }

    if (*ablate_cmd) {
      TrainConfig cfg = resolve_config(ablate_cfg);
      if (!ab_train.empty()) cfg.train_path = ab_train;
      if (!ab_dev.empty()) cfg.dev_path = ab_dev;
      if (!ab_test.empty()) cfg.test_path = ab_test;
      if (cfg.train_path.empty() || cfg.test_path.empty()) throw ConfigError("ablate: --train and --test are required");
      DialogSet train_set = load_dialogs(cfg.train_path);
      DialogSet dev_set = load_optional(cfg.dev_path, train_set.labels);
      DialogSet test_set = load_dialogs(cfg.test_path, train_set.labels);
      auto rows = ablate(cfg, parse_variants(variants), train_set, dev_set, test_set);
      out << ablation_to_table(rows);
      if (!ab_out.empty()) save_json_atomic(ab_out, json{{"config", cfg.to_json()}, {"rows", ablation_to_json(rows)}});
      return kExitOk;
    }

    if (*gc_cmd) {
      TrainConfig cfg = resolve_config(gc_cfg);
      DialogSet source;
      if (gc_data.empty()) {
        SyntheticSpec s = default_synthetic_spec();
        s.n_dialogs = 2;
        s.min_len = s.max_len = 3;
        source = generate_synthetic(s, cfg.seed);
      } else {
        source = load_dialogs(gc_data);
      }
      // small batch: at most 2 dialogs of at most 3 utterances
      DialogSet small;
      small.labels = source.labels;
      for (std::size_t i = 0; i < source.size() && i < 2; ++i) {
        Dialog d = source.dialogs[i];
        if (d.utterances.size() > 3) d.utterances.resize(3);
        small.dialogs.push_back(std::move(d));
      }
      if (small.empty()) throw DataError("gradcheck: no dialogs");
      Batch batch;
      for (std::size_t i = 0; i < small.size(); ++i) batch.indices.push_back(i);
      GradcheckResult r = gradcheck(cfg, small, batch, gc_step, cfg.seed);
      const bool ok = r.max_rel_err < gc_threshold;
      json j = {{"arch", to_string(cfg.arch)},
                {"max_rel_err", r.max_rel_err},
                {"worst_parameter", r.worst_parameter},
                {"coordinates", r.coordinates},
                {"loss", r.loss},
                {"roundoff_ratio", r.max_roundoff_ratio},
                {"step", gc_step},
                {"threshold", gc_threshold},
                {"passed", ok}};
      out << j.dump(2) << "\n";
      if (!gc_out.empty()) save_json_atomic(gc_out, j);
      return ok ? kExitOk : kExitGradcheck;
    }

    if (*export_cmd) {
      write_text(ex_out, label_embeddings_tsv(load_checkpoint(ex_ckpt)));
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const LoadError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace bmim::cli
