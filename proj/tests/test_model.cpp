#include <doctest.h>

#include "bmim/errors.hpp"
#include "bmim/model.hpp"
#include "bmim/training.hpp"
#include "support.hpp"

using namespace bmim;

namespace {

struct Setup {
  DialogSet data = testing::small_synthetic(6, 2);
  Vocab vocab = Vocab::build(data);
  std::vector<TokenIds> ids(std::size_t d = 0) const { return dialog_token_ids(data.dialogs[d], vocab); }
};

Model make(const Setup& s, TrainConfig cfg) { return Model(cfg, s.data.labels, s.vocab); }

bool has_prefix(const ParameterSet& ps, const std::string& prefix) {
  for (const auto& p : ps)
    if (p.name.rfind(prefix, 0) == 0) return true;
  return false;
}

}  // namespace

TEST_CASE("forward shapes for every architecture") {
  Setup s;
  for (Arch arch : {Arch::a, Arch::b, Arch::c}) {
    Model m = make(s, testing::tiny_config(arch));
    ad::Tape t;
    auto f = m.forward(t, s.ids());
    const std::size_t n = s.data.dialogs[0].size();
    CHECK(f.u.rows() == n);
    CHECK(f.u.cols() == 8);
    CHECK(f.q_s.cols() == 32);
    CHECK(f.preds.y_s.rows() == n);
    CHECK(f.preds.y_s.cols() == 3);
    CHECK(f.preds.y_a.cols() == 5);
    CHECK(f.preds.aux_y_s.has_value() == (arch == Arch::b));
    CHECK(f.preds.aux_y_a.has_value() == (arch == Arch::c));
    for (std::size_t i = 0; i < n; ++i) {
      double rs = 0.0, ra = 0.0;
      for (std::size_t j = 0; j < 3; ++j) rs += f.preds.y_s.value()(i, j);
      for (std::size_t j = 0; j < 5; ++j) ra += f.preds.y_a.value()(i, j);
      CHECK(std::abs(rs - 1.0) <= 1e-6);
      CHECK(std::abs(ra - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("same seed builds identical parameters") {
  Setup s;
  Model a = make(s, testing::tiny_config(Arch::b, 5)), b = make(s, testing::tiny_config(Arch::b, 5));
  auto sa = a.params().snapshot(), sb = b.params().snapshot();
  CHECK(sa == sb);
  Model c = make(s, testing::tiny_config(Arch::b, 6));
  CHECK_FALSE(c.params().snapshot() == sa);
  CHECK(a.predict(s.data.dialogs[1]) == b.predict(s.data.dialogs[1]));
}

TEST_CASE("predict matches forward") {
  Setup s;
  Model m = make(s, testing::tiny_config(Arch::c));
  ad::Tape t;
  PredictionBundle direct = to_bundle(m.forward(t, s.ids(2)).preds);
  CHECK(m.predict(s.data.dialogs[2]) == direct);
}

TEST_CASE("no_fsn feeds the encoder output to both tasks") {
  Setup s;
  TrainConfig cfg = testing::tiny_config();
  cfg.no_fsn = true;
  Model m = make(s, cfg);
  CHECK_FALSE(has_prefix(m.params(), "fsn."));
  ad::Tape t;
  auto f = m.forward(t, s.ids());
  CHECK(f.x_s.value() == f.u.value());
  CHECK(f.x_a.value() == f.u.value());
  // encoder parameters come first, so they match the full model
  Model full = make(s, testing::tiny_config());
  CHECK(m.params().find("encoder.embedding")->value == full.params().find("encoder.embedding")->value);
}

TEST_CASE("no_bmin uses the features side by side") {
  Setup s;
  TrainConfig cfg = testing::tiny_config(Arch::b);
  cfg.no_bmin = true;
  Model m = make(s, cfg);
  CHECK_FALSE(has_prefix(m.params(), "bmin."));
  CHECK(m.q_width() == 16);
  ad::Tape t;
  auto f = m.forward(t, s.ids());
  const Matrix& xs = f.x_s.value();
  const Matrix& qs = f.q_s.value();
  REQUIRE(qs.cols() == 16);
  for (std::size_t i = 0; i < xs.rows(); ++i)
    for (std::size_t j = 0; j < 8; ++j) {
      CHECK(qs(i, j) == xs(i, j));
      CHECK(qs(i, 8 + j) == xs(i, j));
    }
  // the fsn output is untouched by the flag
  Model full = make(s, testing::tiny_config(Arch::b));
  ad::Tape t2;
  CHECK(full.forward(t2, s.ids()).x_s.value() == xs);
}

TEST_CASE("no_cl_dl only drops the extra loss") {
  Setup s;
  const CooccurrenceSets sets = cooccurrence_sets(s.data, s.data.labels);
  const Marginals marg = empirical_marginals(s.data);
  Batch batch{{0, 1, 2}};
  for (Arch arch : {Arch::a, Arch::b, Arch::c}) {
    TrainConfig cfg = testing::tiny_config(arch);
    Model full = make(s, cfg);
    cfg.no_cl_dl = true;
    Model ablated = make(s, cfg);
    CHECK(full.params().snapshot() == ablated.params().snapshot());
    CHECK(full.predict(s.data.dialogs[0]) == ablated.predict(s.data.dialogs[0]));
    ad::Tape t1, t2;
    BatchLoss lf = batch_loss(t1, full, s.data, batch, sets, marg);
    BatchLoss la = batch_loss(t2, ablated, s.data, batch, sets, marg);
    CHECK(la.breakdown.sentiment == lf.breakdown.sentiment);
    CHECK(la.breakdown.act == lf.breakdown.act);
    CHECK(la.breakdown.total == la.breakdown.sentiment + la.breakdown.act);
    CHECK(lf.breakdown.total > la.breakdown.total);
    CHECK(lf.breakdown.contrastive.has_value() == (arch == Arch::a));
    CHECK(lf.breakdown.dual.has_value() == (arch != Arch::a));
    CHECK(la.total.scalar() == la.breakdown.total);
  }
}

TEST_CASE("argmax ties go to the lowest index") {
  CHECK(argmax_rows(Matrix{{0.2, 0.4, 0.4}, {0.5, 0.5, 0.0}, {0.1, 0.2, 0.7}}) == std::vector<std::size_t>{1, 0, 2});
}
