#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "bmim/corpus.hpp"
#include "bmim/rng.hpp"
#include "bmim/tensor.hpp"
#include "bmim/training.hpp"

namespace testing {

inline bmim::Matrix random_matrix(bmim::Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  bmim::Matrix m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform(-scale, scale);
  return m;
}

inline std::vector<double> random_vector(bmim::Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return v;
}

inline bool bit_equal(const bmim::Matrix& a, const bmim::Matrix& b) { return a == b; }

inline bool rows_equal(const bmim::Matrix& a, const bmim::Matrix& b, std::size_t row) {
  if (a.cols() != b.cols()) return false;
  for (std::size_t j = 0; j < a.cols(); ++j)
    if (a(row, j) != b(row, j)) return false;
  return true;
}

inline double max_abs_diff(const bmim::Matrix& a, const bmim::Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// The five-utterance Mastodon snippet.
inline const char* kMastodonLine =
    R"({"dialog_id": "m1", "utterances": [)"
    R"({"speaker": "A", "text": "There's no way to make a post visible to just your local tl and not federated tl.", "sentiment": "Negative", "act": "Statement"},)"
    R"({"speaker": "B", "text": "Correct ?", "sentiment": "Negative", "act": "Question"},)"
    R"({"speaker": "B", "text": "I don't think there is.", "sentiment": "Negative", "act": "Answer"},)"
    R"({"speaker": "A", "text": "Thanks.", "sentiment": "Positive", "act": "Thanking"},)"
    R"({"speaker": "B", "text": "Didn't think so.", "sentiment": "Negative", "act": "Agreement"}]})";

inline bmim::DialogSet mastodon_set() {
  std::istringstream in(std::string(kMastodonLine) + "\n");
  return bmim::parse_dialogs(in);
}

// Narrow model for fast unit tests.
inline bmim::TrainConfig tiny_config(bmim::Arch arch = bmim::Arch::a, std::uint64_t seed = 1) {
  bmim::TrainConfig cfg;
  cfg.arch = arch;
  cfg.d_w = 6;
  cfg.d = 8;
  cfg.d_e = 5;
  cfg.hops = 2;
  cfg.seed = seed;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  return cfg;
}

inline bmim::DialogSet small_synthetic(std::size_t dialogs, std::uint64_t seed, double cue = 1.0) {
  bmim::SyntheticSpec s = bmim::default_synthetic_spec();
  s.n_dialogs = dialogs;
  s.cue_strength = cue;
  return bmim::generate_synthetic(s, seed);
}

}  // namespace testing
