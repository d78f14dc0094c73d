#include <doctest.h>

#include <cmath>
#include <functional>

#include "bmim/autodiff.hpp"
#include "bmim/errors.hpp"
#include "bmim/layers.hpp"
#include "bmim/rng.hpp"
#include "support.hpp"

using namespace bmim;

namespace {

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

using OpFn = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

// Central differences of sum(w * op(inputs)) against the tape gradient.
double op_gradcheck(const std::vector<std::pair<std::size_t, std::size_t>>& shapes, const OpFn& op,
                    std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  ParameterSet ps;
  for (std::size_t i = 0; i < shapes.size(); ++i)
    ps.add_uniform("in" + std::to_string(i), shapes[i].first, shapes[i].second, scale, rng);
  Matrix w;
  auto eval = [&](bool grad) {
    ad::Tape t;
    std::vector<ad::Var> ins;
    for (auto& p : ps) ins.push_back(t.param(p));
    ad::Var y = op(t, ins);
    if (w.empty()) w = testing::random_matrix(rng, y.rows(), y.cols());
    ad::Var loss = ad::sum_all(ad::mul(y, t.constant(w)));
    if (grad) {
      ps.zero_grad();
      t.backward(loss);
    }
    return loss.scalar();
  };
  eval(true);
  double worst = 0.0;
  const double h = 1e-6;
  for (auto& p : ps) {
    Matrix ga = p.grad;
    for (std::size_t c = 0; c < p.value.size(); ++c) {
      const double o = p.value[c];
      p.value[c] = o + h;
      const double up = eval(false);
      p.value[c] = o - h;
      const double dn = eval(false);
      p.value[c] = o;
      const double gn = (up - dn) / (2 * h);
      worst = std::max(worst, std::abs(gn - ga[c]) / std::max(1.0, std::abs(gn)));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("gemm kernels agree with the naive product") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng.below(6), k = 1 + rng.below(6), n = 1 + rng.below(6);
    Matrix a = testing::random_matrix(rng, m, k), b = testing::random_matrix(rng, k, n);
    CHECK(testing::max_abs_diff(matmul(a, b), naive_matmul(a, b)) < 1e-12);
    Matrix c(m, n);
    gemm_nt_acc(a, transpose(b), c);
    CHECK(testing::max_abs_diff(c, naive_matmul(a, b)) < 1e-12);
    Matrix d(k, n);
    Matrix e = testing::random_matrix(rng, m, n);
    gemm_tn_acc(a, e, d);
    CHECK(testing::max_abs_diff(d, naive_matmul(transpose(a), e)) < 1e-12);
  }
}

TEST_CASE("matmul rows do not depend on other rows") {
  Rng rng(4);
  Matrix a = testing::random_matrix(rng, 5, 7), b = testing::random_matrix(rng, 7, 3);
  Matrix full = matmul(a, b);
  for (std::size_t r = 0; r < 5; ++r) {
    Matrix one(1, 7);
    for (std::size_t j = 0; j < 7; ++j) one(0, j) = a(r, j);
    Matrix single = matmul(one, b);
    for (std::size_t j = 0; j < 3; ++j) CHECK(single(0, j) == full(r, j));
  }
}

TEST_CASE("matrix basics") {
  Matrix m{{1, 2, 3}, {4, 5, 6}};
  CHECK(m.rows() == 2);
  CHECK(m(1, 2) == 6);
  CHECK(transpose(m)(2, 1) == 6);
  CHECK(m.all_finite());
  m(0, 0) = std::nan("");
  CHECK_FALSE(m.all_finite());
  std::vector<double> v{1, 2};
  CHECK(Matrix::row_vector(v) == Matrix{{1, 2}});
  CHECK(dot(v, v) == 5.0);
}

TEST_CASE("rng is deterministic and in range") {
  Rng a(9), b(9);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  Rng r(1);
  std::vector<int> hist(3, 0);
  for (int i = 0; i < 30000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const auto k = r.below(3);
    REQUIRE(k < 3);
    ++hist[k];
  }
  for (int h : hist) CHECK(std::abs(h - 10000) < 500);
  std::vector<double> w{0.0, 1.0, 0.0};
  for (int i = 0; i < 50; ++i) CHECK(r.categorical(w) == 1);
  std::vector<int> perm{0, 1, 2, 3, 4, 5};
  r.shuffle(perm);
  std::sort(perm.begin(), perm.end());
  CHECK(perm == std::vector<int>{0, 1, 2, 3, 4, 5});
}

TEST_CASE("parameter set") {
  ParameterSet ps;
  Rng rng(1);
  Parameter& p = ps.add_xavier("w", 3, 4, rng);
  const double bound = std::sqrt(6.0 / 7.0);
  for (double v : p.value.flat()) CHECK(std::abs(v) <= bound);
  CHECK_THROWS_AS(ps.add("w", 1, 1), ContractError);
  CHECK(ps.find("w") == &p);
  CHECK(ps.find("nope") == nullptr);
  auto snap = ps.snapshot();
  p.value.fill(0.0);
  ps.restore(snap);
  CHECK(p.value == snap[0]);
  // addresses survive growth
  for (int i = 0; i < 100; ++i) ps.add("x" + std::to_string(i), 1, 1);
  CHECK(ps.find("w") == &p);
}

TEST_CASE("op gradients match central differences") {
  using V = std::vector<ad::Var>;
  const double tol = 1e-7;
  CHECK(op_gradcheck({{3, 4}, {4, 2}}, [](ad::Tape&, const V& x) { return ad::matmul(x[0], x[1]); }, 1) < tol);
  CHECK(op_gradcheck({{3, 4}, {2, 4}}, [](ad::Tape&, const V& x) { return ad::matmul_nt(x[0], x[1]); }, 2) < tol);
  CHECK(op_gradcheck({{3, 4}, {3, 4}}, [](ad::Tape&, const V& x) { return x[0] + x[1]; }, 3) < tol);
  CHECK(op_gradcheck({{3, 4}, {3, 4}}, [](ad::Tape&, const V& x) { return x[0] - x[1]; }, 4) < tol);
  CHECK(op_gradcheck({{3, 4}, {3, 4}}, [](ad::Tape&, const V& x) { return x[0] * x[1]; }, 5) < tol);
  CHECK(op_gradcheck({{3, 4}, {1, 4}}, [](ad::Tape&, const V& x) { return ad::add_row(x[0], x[1]); }, 6) < tol);
  CHECK(op_gradcheck({{3, 4}}, [](ad::Tape&, const V& x) { return ad::affine(x[0], -2.5, 0.3); }, 7) < tol);
  CHECK(op_gradcheck({{3, 4}}, [](ad::Tape&, const V& x) { return ad::tanh(x[0]); }, 8) < tol);
  CHECK(op_gradcheck({{3, 4}}, [](ad::Tape&, const V& x) { return ad::sigmoid(x[0]); }, 9) < tol);
  CHECK(op_gradcheck({{3, 4}}, [](ad::Tape&, const V& x) { return ad::square(x[0]); }, 10) < tol);
  CHECK(op_gradcheck({{3, 4}}, [](ad::Tape&, const V& x) { return ad::log_floor(ad::affine(x[0], 1.0, 2.0)); }, 11) <
        tol);
  CHECK(op_gradcheck({{3, 5}}, [](ad::Tape&, const V& x) { return ad::softmax_rows(x[0]); }, 12) < tol);
  CHECK(op_gradcheck({{3, 5}}, [](ad::Tape&, const V& x) { return ad::cumsum_rows(x[0]); }, 13) < tol);
  Matrix mask{{1, 0, 1}, {1, 1, 0}, {0, 0, 1}};
  CHECK(op_gradcheck({{3, 3}}, [&](ad::Tape&, const V& x) { return ad::masked_softmax_rows(x[0], mask); }, 14) < tol);
  CHECK(op_gradcheck({{3, 2}, {3, 3}},
                     [](ad::Tape&, const V& x) { return ad::concat_cols({x[0], x[1], x[0]}); }, 15) < tol);
  CHECK(op_gradcheck({{2, 3}, {1, 3}}, [](ad::Tape&, const V& x) { return ad::concat_rows({x[0], x[1]}); }, 16) <
        tol);
  CHECK(op_gradcheck({{3, 5}}, [](ad::Tape&, const V& x) { return ad::slice_cols(x[0], 1, 3); }, 17) < tol);
  CHECK(op_gradcheck({{4, 2}}, [](ad::Tape&, const V& x) { return ad::slice_rows(x[0], 1, 2); }, 18) < tol);
  CHECK(op_gradcheck({{3, 2}, {3, 2}},
                     [](ad::Tape&, const V& x) { return ad::select_rows({1, 0, 1}, x[0], x[1]); }, 19) < tol);
  CHECK(op_gradcheck({{3, 4}, {3, 4}},
                     [](ad::Tape&, const V& x) {
                       return ad::masked_max({x[0], x[1]}, {{1, 1, 0}, {0, 1, 1}});
                     },
                     20) < tol);
  CHECK(op_gradcheck({{3, 4}}, [](ad::Tape&, const V& x) { return ad::pick(x[0], {3, 0, 2}); }, 21) < tol);
  // a tanh chain reusing one input several times
  CHECK(op_gradcheck({{2, 3}, {3, 3}},
                     [](ad::Tape&, const V& x) {
                       ad::Var h = ad::tanh(ad::matmul(x[0], x[1]));
                       return ad::softmax_rows(ad::matmul(h, x[1]) * h);
                     },
                     22) < tol);
}

TEST_CASE("lookup scatters gradients into the table") {
  ParameterSet ps;
  Rng rng(2);
  Parameter& table = ps.add_uniform("emb", 4, 3, 1.0, rng);
  ad::Tape t;
  ad::Var rows = ad::lookup(t, table, {2, 0, 2});
  CHECK(rows.value()(0, 1) == table.value(2, 1));
  t.backward(ad::sum_all(rows));
  CHECK(table.grad(2, 0) == 2.0);
  CHECK(table.grad(0, 0) == 1.0);
  CHECK(table.grad(1, 0) == 0.0);
  CHECK(table.grad(3, 2) == 0.0);
  ad::Tape t2;
  CHECK_THROWS_AS(ad::lookup(t2, table, {4}), ContractError);
}

TEST_CASE("masked softmax leaves masked entries at exactly zero") {
  ad::Tape t;
  Matrix mask{{1, 0, 1}};
  ad::Var y = ad::masked_softmax_rows(t.constant(Matrix{{5.0, 1e6, -2.0}}), mask);
  CHECK(y.value()(0, 1) == 0.0);
  CHECK(y.value()(0, 0) + y.value()(0, 2) == doctest::Approx(1.0));
}

TEST_CASE("tape contracts") {
  ad::Tape t, other;
  ad::Var a = t.constant(Matrix(2, 2, 1.0));
  ad::Var b = other.constant(Matrix(2, 2, 1.0));
  CHECK_THROWS_AS(ad::add(a, b), ContractError);
  CHECK_THROWS_AS(t.backward(a), ContractError);
  CHECK_THROWS_AS(ad::matmul(a, t.constant(Matrix(3, 1))), ContractError);
  CHECK_FALSE(t.first_non_finite().has_value());
  t.constant(Matrix{{std::nan("")}}, "poison");
  auto bad = t.first_non_finite();
  REQUIRE(bad.has_value());
  CHECK(bad->find("poison") != std::string::npos);
}

TEST_CASE("a parameter used twice shares one leaf and accumulates") {
  ParameterSet ps;
  Parameter& p = ps.add("p", 1, 1);
  p.value(0, 0) = 3.0;
  ad::Tape t;
  ad::Var a = t.param(p), b = t.param(p);
  CHECK(a.id() == b.id());
  t.backward(ad::sum_all(a * b));
  CHECK(p.grad(0, 0) == 6.0);
}

TEST_CASE("linear and lstm layers") {
  ParameterSet ps;
  Rng rng(5);
  Linear lin = Linear::create(ps, "lin", 3, 2, rng);
  CHECK(lin.in_features() == 3);
  CHECK(lin.out_features() == 2);
  CHECK(ps.find("lin.weight") != nullptr);
  CHECK(ps.find("lin.bias") != nullptr);
  ad::Tape t;
  Matrix x = testing::random_matrix(rng, 4, 3);
  ad::Var y = lin(t, t.constant(x));
  Matrix expect = matmul(x, lin.weight->value);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 2; ++c) CHECK(y.value()(r, c) == doctest::Approx(expect(r, c) + lin.bias->value(0, c)));

  LstmCell cell = LstmCell::create(ps, "cell", 3, 5, rng);
  CHECK(cell.weight->value.rows() == 8);
  CHECK(cell.weight->value.cols() == 20);
  // forget-gate bias starts at 1
  for (std::size_t j = 5; j < 10; ++j) CHECK(cell.bias->value(0, j) == 1.0);
  LstmState s0 = cell.zero_state(t, 4);
  LstmState s1 = cell(t, t.constant(x), s0);
  CHECK(s1.h.rows() == 4);
  CHECK(s1.h.cols() == 5);
  for (double v : s1.h.value().flat()) CHECK(std::abs(v) < 1.0);

  // hand evaluation of one row
  std::vector<double> z(x.row(1).begin(), x.row(1).end());
  z.resize(8, 0.0);
  std::vector<double> pre(20);
  for (std::size_t j = 0; j < 20; ++j) {
    double s = cell.bias->value(0, j);
    for (std::size_t k = 0; k < 8; ++k) s += z[k] * cell.weight->value(k, j);
    pre[j] = s;
  }
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  for (std::size_t j = 0; j < 5; ++j) {
    const double c = sig(pre[j]) * std::tanh(pre[10 + j]);
    CHECK(s1.c.value()(1, j) == doctest::Approx(c).epsilon(1e-12));
    CHECK(s1.h.value()(1, j) == doctest::Approx(sig(pre[15 + j]) * std::tanh(c)).epsilon(1e-12));
  }
}
