#include "bmim/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bmim/errors.hpp"

namespace bmim::ad {

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value, const char* op) {
  Node n;
  n.value = std::move(value);
  n.op = op;
  return push(std::move(n));
}

Var Tape::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.value = p.value;
  n.op = "param";
  n.param = &p;
  n.requires_grad = true;
  Var v = push(std::move(n));
  param_nodes_.emplace(&p, v.id());
  return v;
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward, const char* op) {
  return record(std::move(value), std::vector<Var>(inputs), std::move(backward), op);
}

Var Tape::record(Matrix value, const std::vector<Var>& inputs, Backward backward, const char* op) {
  Node n;
  n.value = std::move(value);
  n.op = op;
  for (const Var& in : inputs) {
    if (in.tape() != this) throw ContractError(std::string("ad::") + op + ": input from another tape");
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

Var Tape::record_param_op(Matrix value, Backward backward, const char* op) {
  Node n;
  n.value = std::move(value);
  n.op = op;
  n.requires_grad = true;
  n.backward = std::move(backward);
  return push(std::move(n));
}

Matrix& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.tape() != this || root.value().size() != 1) throw ContractError("Tape::backward: root must be a 1x1 node");
  grad(root.id()).fill(1.0);
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param != nullptr) {
      if (n.param->grad.empty()) n.param->grad = Matrix(n.value.rows(), n.value.cols());
      add_inplace(n.param->grad, n.grad);
    }
  }
}

std::optional<std::string> Tape::first_non_finite() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].value.all_finite()) {
      std::ostringstream os;
      os << "node #" << i << " (op '" << nodes_[i].op << "'";
      if (nodes_[i].param != nullptr) os << ", parameter '" << nodes_[i].param->name << "'";
      os << ", shape " << nodes_[i].value.rows() << "x" << nodes_[i].value.cols() << ")";
      return os.str();
    }
  }
  return std::nullopt;
}

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw ContractError(msg);
}

Tape& tape_of(Var a) {
  require(a.valid(), "ad: invalid Var");
  return *a.tape();
}

template <typename F, typename G>
Var unary(Var a, const char* op, F f, G dfdx_from_xy) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const std::size_t ia = a.id();
  return tape_of(a).record(std::move(y), {a},
                           [ia, dfdx_from_xy](Tape& t, std::size_t self) {
                             const Matrix& xv = t.value(ia);
                             const Matrix& yv = t.value(self);
                             const Matrix& gy = t.grad(self);
                             Matrix& gx = t.grad(ia);
                             for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * dfdx_from_xy(xv[i], yv[i]);
                           },
                           op);
}

}  // namespace

Var matmul(Var a, Var b) {
  Matrix c = bmim::matmul(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(std::move(c), {a, b},
                           [ia, ib](Tape& t, std::size_t self) {
                             const Matrix& g = t.grad(self);
                             if (t.requires_grad(ia)) gemm_nt_acc(g, t.value(ib), t.grad(ia));
                             if (t.requires_grad(ib)) gemm_tn_acc(t.value(ia), g, t.grad(ib));
                           },
                           "matmul");
}

Var matmul_nt(Var a, Var b) {
  Matrix c(a.rows(), b.rows());
  gemm_nt_acc(a.value(), b.value(), c);
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(std::move(c), {a, b},
                           [ia, ib](Tape& t, std::size_t self) {
                             const Matrix& g = t.grad(self);
                             if (t.requires_grad(ia)) gemm_acc(g, t.value(ib), t.grad(ia));
                             if (t.requires_grad(ib)) gemm_tn_acc(g, t.value(ia), t.grad(ib));
                           },
                           "matmul_nt");
}

Var add(Var a, Var b) {
  require(a.value().same_shape(b.value()), "ad::add: shape mismatch");
  Matrix c = a.value();
  add_inplace(c, b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(std::move(c), {a, b},
                           [ia, ib](Tape& t, std::size_t self) {
                             if (t.requires_grad(ia)) add_inplace(t.grad(ia), t.grad(self));
                             if (t.requires_grad(ib)) add_inplace(t.grad(ib), t.grad(self));
                           },
                           "add");
}

Var sub(Var a, Var b) {
  require(a.value().same_shape(b.value()), "ad::sub: shape mismatch");
  Matrix c = a.value();
  add_inplace(c, b.value(), -1.0);
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(std::move(c), {a, b},
                           [ia, ib](Tape& t, std::size_t self) {
                             if (t.requires_grad(ia)) add_inplace(t.grad(ia), t.grad(self));
                             if (t.requires_grad(ib)) add_inplace(t.grad(ib), t.grad(self), -1.0);
                           },
                           "sub");
}

Var mul(Var a, Var b) {
  require(a.value().same_shape(b.value()), "ad::mul: shape mismatch");
  const Matrix& x = a.value();
  const Matrix& y = b.value();
  Matrix c(x.rows(), x.cols());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = x[i] * y[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(std::move(c), {a, b},
                           [ia, ib](Tape& t, std::size_t self) {
                             const Matrix& g = t.grad(self);
                             if (t.requires_grad(ia)) {
                               const Matrix& yv = t.value(ib);
                               Matrix& gx = t.grad(ia);
                               for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * yv[i];
                             }
                             if (t.requires_grad(ib)) {
                               const Matrix& xv = t.value(ia);
                               Matrix& gy = t.grad(ib);
                               for (std::size_t i = 0; i < g.size(); ++i) gy[i] += g[i] * xv[i];
                             }
                           },
                           "mul");
}

Var add_row(Var a, Var bias) {
  const Matrix& x = a.value();
  const Matrix& b = bias.value();
  require(b.rows() == 1 && b.cols() == x.cols(), "ad::add_row: bias must be 1 x cols");
  Matrix c = x;
  for (std::size_t r = 0; r < c.rows(); ++r)
    for (std::size_t j = 0; j < c.cols(); ++j) c(r, j) += b[j];
  const std::size_t ia = a.id(), ib = bias.id();
  return tape_of(a).record(std::move(c), {a, bias},
                           [ia, ib](Tape& t, std::size_t self) {
                             const Matrix& g = t.grad(self);
                             if (t.requires_grad(ia)) add_inplace(t.grad(ia), g);
                             if (t.requires_grad(ib)) {
                               Matrix& gb = t.grad(ib);
                               for (std::size_t r = 0; r < g.rows(); ++r)
                                 for (std::size_t j = 0; j < g.cols(); ++j) gb[j] += g(r, j);
                             }
                           },
                           "add_row");
}

Var affine(Var a, double alpha, double beta) {
  return unary(
      a, "affine", [alpha, beta](double x) { return alpha * x + beta; },
      [alpha](double, double) { return alpha; });
}

Var tanh(Var a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(
      a, "sigmoid",
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var square(Var a) {
  return unary(
      a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var log_floor(Var a, double floor) {
  return unary(
      a, "log_floor", [floor](double x) { return std::log(std::max(x, floor)); },
      [floor](double x, double) { return x > floor ? 1.0 / x : 0.0; });
}

namespace {

Var softmax_impl(Var a, const Matrix* mask, const char* op) {
  const Matrix& x = a.value();
  if (mask != nullptr) require(mask->same_shape(x), "ad::masked_softmax_rows: mask shape mismatch");
  Matrix y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double m = -INFINITY;
    std::size_t open = 0;
    for (std::size_t j = 0; j < x.cols(); ++j)
      if (mask == nullptr || (*mask)(r, j) != 0.0) {
        ++open;
        // NaN must survive so the loss check can name its source
        m = std::isnan(x(r, j)) ? x(r, j) : std::max(m, x(r, j));
        if (std::isnan(m)) break;
      }
    require(open > 0, "ad::masked_softmax_rows: fully masked row");
    double s = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) {
      if (mask != nullptr && (*mask)(r, j) == 0.0) continue;
      y(r, j) = std::exp(x(r, j) - m);
      s += y(r, j);
    }
    for (std::size_t j = 0; j < x.cols(); ++j) y(r, j) /= s;
  }
  const std::size_t ia = a.id();
  return tape_of(a).record(std::move(y), {a},
                           [ia](Tape& t, std::size_t self) {
                             const Matrix& yv = t.value(self);
                             const Matrix& g = t.grad(self);
                             Matrix& gx = t.grad(ia);
                             for (std::size_t r = 0; r < yv.rows(); ++r) {
                               double inner = 0.0;
                               for (std::size_t j = 0; j < yv.cols(); ++j) inner += yv(r, j) * g(r, j);
                               for (std::size_t j = 0; j < yv.cols(); ++j) gx(r, j) += yv(r, j) * (g(r, j) - inner);
                             }
                           },
                           op);
}

}  // namespace

Var softmax_rows(Var a) { return softmax_impl(a, nullptr, "softmax_rows"); }

Var masked_softmax_rows(Var a, const Matrix& mask) { return softmax_impl(a, &mask, "masked_softmax_rows"); }

Var cumsum_rows(Var a) {
  Matrix y = a.value();
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t j = 1; j < y.cols(); ++j) y(r, j) += y(r, j - 1);
  const std::size_t ia = a.id();
  return tape_of(a).record(std::move(y), {a},
                           [ia](Tape& t, std::size_t self) {
                             const Matrix& g = t.grad(self);
                             Matrix& gx = t.grad(ia);
                             for (std::size_t r = 0; r < g.rows(); ++r) {
                               double acc = 0.0;
                               for (std::size_t j = g.cols(); j-- > 0;) {
                                 acc += g(r, j);
                                 gx(r, j) += acc;
                               }
                             }
                           },
                           "cumsum_rows");
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "ad::concat_cols: no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    require(p.rows() == rows, "ad::concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix y(rows, cols);
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Matrix& v = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < v.cols(); ++j) y(r, off + j) = v(r, j);
    ids.push_back(p.id());
    offsets.push_back(off);
    off += v.cols();
  }
  return tape_of(parts.front())
      .record(std::move(y), parts,
              [ids, offsets](Tape& t, std::size_t self) {
                const Matrix& g = t.grad(self);
                for (std::size_t k = 0; k < ids.size(); ++k) {
                  if (!t.requires_grad(ids[k])) continue;
                  Matrix& gp = t.grad(ids[k]);
                  for (std::size_t r = 0; r < gp.rows(); ++r)
                    for (std::size_t j = 0; j < gp.cols(); ++j) gp(r, j) += g(r, offsets[k] + j);
                }
              },
              "concat_cols");
}

Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "ad::concat_rows: no inputs");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    require(p.cols() == cols, "ad::concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix y(rows, cols);
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Matrix& v = p.value();
    std::copy(v.data(), v.data() + v.size(), y.data() + off * cols);
    ids.push_back(p.id());
    offsets.push_back(off);
    off += v.rows();
  }
  return tape_of(parts.front())
      .record(std::move(y), parts,
              [ids, offsets, cols](Tape& t, std::size_t self) {
                const Matrix& g = t.grad(self);
                for (std::size_t k = 0; k < ids.size(); ++k) {
                  if (!t.requires_grad(ids[k])) continue;
                  Matrix& gp = t.grad(ids[k]);
                  const double* src = g.data() + offsets[k] * cols;
                  for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += src[i];
                }
              },
              "concat_rows");
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  const Matrix& x = a.value();
  require(start + count <= x.cols(), "ad::slice_cols: out of range");
  Matrix y(x.rows(), count);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t j = 0; j < count; ++j) y(r, j) = x(r, start + j);
  const std::size_t ia = a.id();
  return tape_of(a).record(std::move(y), {a},
                           [ia, start](Tape& t, std::size_t self) {
                             const Matrix& g = t.grad(self);
                             Matrix& gx = t.grad(ia);
                             for (std::size_t r = 0; r < g.rows(); ++r)
                               for (std::size_t j = 0; j < g.cols(); ++j) gx(r, start + j) += g(r, j);
                           },
                           "slice_cols");
}

Var slice_rows(Var a, std::size_t start, std::size_t count) {
  const Matrix& x = a.value();
  require(start + count <= x.rows(), "ad::slice_rows: out of range");
  Matrix y(count, x.cols());
  std::copy(x.data() + start * x.cols(), x.data() + (start + count) * x.cols(), y.data());
  const std::size_t ia = a.id();
  return tape_of(a).record(std::move(y), {a},
                           [ia, start](Tape& t, std::size_t self) {
                             const Matrix& g = t.grad(self);
                             Matrix& gx = t.grad(ia);
                             double* dst = gx.data() + start * g.cols();
                             for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
                           },
                           "slice_rows");
}

Var lookup(Tape& tape, Parameter& table, const std::vector<std::size_t>& ids) {
  const std::size_t width = table.value.cols();
  Matrix y(ids.size(), width);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    require(ids[r] < table.value.rows(), "ad::lookup: id out of range");
    std::copy_n(table.value.data() + ids[r] * width, width, y.data() + r * width);
  }
  Parameter* p = &table;
  return tape.record_param_op(
      std::move(y),
      [p, ids, width](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        if (p->grad.empty()) p->grad = Matrix(p->value.rows(), p->value.cols());
        for (std::size_t r = 0; r < ids.size(); ++r) {
          double* dst = p->grad.data() + ids[r] * width;
          for (std::size_t j = 0; j < width; ++j) dst[j] += g(r, j);
        }
      },
      "lookup");
}

Var select_rows(const std::vector<char>& take_first, Var a, Var b) {
  const Matrix& x = a.value();
  const Matrix& y = b.value();
  require(x.same_shape(y) && take_first.size() == x.rows(), "ad::select_rows: shape mismatch");
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const Matrix& src = take_first[r] ? x : y;
    std::copy_n(src.data() + r * x.cols(), x.cols(), out.data() + r * x.cols());
  }
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(std::move(out), {a, b},
                           [ia, ib, take_first](Tape& t, std::size_t self) {
                             const Matrix& g = t.grad(self);
                             for (std::size_t r = 0; r < g.rows(); ++r) {
                               const std::size_t target = take_first[r] ? ia : ib;
                               if (!t.requires_grad(target)) continue;
                               Matrix& gt = t.grad(target);
                               for (std::size_t j = 0; j < g.cols(); ++j) gt(r, j) += g(r, j);
                             }
                           },
                           "select_rows");
}

Var masked_max(const std::vector<Var>& steps, const std::vector<std::vector<char>>& valid) {
  require(!steps.empty() && steps.size() == valid.size(), "ad::masked_max: steps/valid mismatch");
  const std::size_t rows = steps.front().rows(), cols = steps.front().cols();
  Matrix y(rows, cols);
  std::vector<std::size_t> arg(rows * cols, steps.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t t = 0; t < steps.size(); ++t) {
      require(valid[t].size() == rows, "ad::masked_max: mask row mismatch");
      if (!valid[t][r]) continue;
      const Matrix& v = steps[t].value();
      for (std::size_t j = 0; j < cols; ++j) {
        std::size_t& k = arg[r * cols + j];
        if (k == steps.size() || v(r, j) > y(r, j)) {
          y(r, j) = v(r, j);
          k = t;
        }
      }
    }
    require(arg[r * cols] != steps.size(), "ad::masked_max: row without valid steps");
  }
  std::vector<std::size_t> ids;
  for (const Var& s : steps) ids.push_back(s.id());
  return tape_of(steps.front())
      .record(std::move(y), steps,
              [ids, arg, cols](Tape& t, std::size_t self) {
                const Matrix& g = t.grad(self);
                for (std::size_t i = 0; i < arg.size(); ++i) {
                  const std::size_t src = ids[arg[i]];
                  if (t.requires_grad(src)) t.grad(src)[i] += g[i];
                }
                (void)cols;
              },
              "masked_max");
}

Var pick(Var a, const std::vector<std::size_t>& index) {
  const Matrix& x = a.value();
  require(index.size() == x.rows(), "ad::pick: index length mismatch");
  Matrix y(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    require(index[r] < x.cols(), "ad::pick: index out of range");
    y(r, 0) = x(r, index[r]);
  }
  const std::size_t ia = a.id();
  return tape_of(a).record(std::move(y), {a},
                           [ia, index](Tape& t, std::size_t self) {
                             const Matrix& g = t.grad(self);
                             Matrix& gx = t.grad(ia);
                             for (std::size_t r = 0; r < index.size(); ++r) gx(r, index[r]) += g(r, 0);
                           },
                           "pick");
}

Var sum_all(Var a) {
  double s = 0.0;
  for (double v : a.value().flat()) s += v;
  const std::size_t ia = a.id();
  return tape_of(a).record(Matrix(1, 1, s), {a},
                           [ia](Tape& t, std::size_t self) {
                             const double g = t.grad(self)[0];
                             Matrix& gx = t.grad(ia);
                             for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
                           },
                           "sum_all");
}

}  // namespace bmim::ad
