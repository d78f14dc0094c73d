#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace bmim {

struct Utterance {
  std::string speaker;
  std::string text;  // optional surface form; empty when the source only had tokens
  std::vector<std::string> tokens;
  std::size_t sentiment = 0;
  std::size_t act = 0;
};

struct Dialog {
  std::string id;
  std::vector<Utterance> utterances;

  std::size_t size() const { return utterances.size(); }
};

// The two label inventories. Joint ids place sentiment labels first, then acts.
struct LabelSpace {
  std::vector<std::string> sentiment_labels;
  std::vector<std::string> act_labels;
  std::optional<std::size_t> neutral_id;

  LabelSpace() = default;
  LabelSpace(std::vector<std::string> sentiments, std::vector<std::string> acts);

  std::size_t num_sentiments() const { return sentiment_labels.size(); }
  std::size_t num_acts() const { return act_labels.size(); }
  std::size_t joint_size() const { return sentiment_labels.size() + act_labels.size(); }
  std::size_t joint_sentiment(std::size_t s) const { return s; }
  std::size_t joint_act(std::size_t a) const { return sentiment_labels.size() + a; }

  std::optional<std::size_t> sentiment_id(const std::string& name) const;
  std::optional<std::size_t> act_id(const std::string& name) const;

  friend bool operator==(const LabelSpace&, const LabelSpace&) = default;
};

struct DialogSet {
  std::vector<Dialog> dialogs;
  LabelSpace labels;

  std::size_t size() const { return dialogs.size(); }
  bool empty() const { return dialogs.empty(); }
  std::size_t num_utterances() const;
};

// Reads one dialog per JSONL line. With no label space the inventory is inferred
// as the sorted unique labels seen; otherwise unknown labels are rejected.
DialogSet load_dialogs(const std::filesystem::path& path, const std::optional<LabelSpace>& labels = std::nullopt);
DialogSet parse_dialogs(std::istream& in, const std::optional<LabelSpace>& labels = std::nullopt);
void write_dialogs(std::ostream& out, const DialogSet& ds);
void save_dialogs(const std::filesystem::path& path, const DialogSet& ds);

// Lowercased whitespace tokenization.
std::vector<std::string> tokenize(const std::string& text);

// Closed word vocabulary; id 0 is the shared unknown token.
class Vocab {
 public:
  static constexpr std::size_t kUnknown = 0;
  static constexpr const char* kUnknownToken = "<unk>";

  Vocab();
  static Vocab build(const DialogSet& train);
  static Vocab from_tokens(std::vector<std::string> tokens);

  std::size_t id(const std::string& token) const;
  std::vector<std::size_t> ids(const std::vector<std::string>& tokens) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Per joint label id: labels that share at least one training utterance with it
// (positives) and all other labels (negatives). A label is never its own
// positive or negative.
struct CooccurrenceSets {
  std::vector<std::vector<std::size_t>> positives;
  std::vector<std::vector<std::size_t>> negatives;
};

CooccurrenceSets cooccurrence_sets(const DialogSet& train, const LabelSpace& labels);

struct Marginals {
  std::vector<double> sentiment;
  std::vector<double> act;
};

Marginals empirical_marginals(const DialogSet& train);

struct SyntheticSpec {
  std::size_t n_dialogs = 200;
  std::size_t min_len = 4;  // utterances per dialog
  std::size_t max_len = 8;
  std::size_t min_tokens = 3;  // filler tokens per utterance
  std::size_t max_tokens = 6;
  std::size_t vocab_size = 60;
  std::size_t cues_per_label = 2;
  std::vector<double> act_table;                 // P(a), size N_a
  std::vector<std::vector<double>> sent_table;  // P(s | a), N_a rows of size N_s
  double cue_strength = 1.0;
  // Probability of a sentiment cue token; defaults to cue_strength.
  std::optional<double> sentiment_cue_strength;
};

// Act-to-sentiment table where act k always carries sentiment k mod n_sentiments.
std::vector<std::vector<double>> deterministic_sent_table(std::size_t n_acts, std::size_t n_sentiments);
SyntheticSpec default_synthetic_spec(std::size_t n_acts = 5, std::size_t n_sentiments = 3);

DialogSet generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

struct Batch {
  std::vector<std::size_t> indices;  // positions in the source DialogSet
};

std::vector<Batch> batch_dialogs(const DialogSet& ds, std::size_t batch_size,
                                 std::optional<std::uint64_t> shuffle_seed = std::nullopt);

}  // namespace bmim
