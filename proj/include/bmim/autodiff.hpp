#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "bmim/params.hpp"
#include "bmim/tensor.hpp"

// Reverse-mode automatic differentiation over dense double matrices.
namespace bmim::ad {

class Tape;

// Handle to a node on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double scalar() const { return value()[0]; }

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value, const char* op = "constant");
  // Leaf bound to a parameter; repeated calls for the same parameter share one node.
  Var param(Parameter& p);
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward, const char* op);
  Var record(Matrix value, const std::vector<Var>& inputs, Backward backward, const char* op);
  // Node whose gradient flows directly into `p` through `backward`.
  Var record_param_op(Matrix value, Backward backward, const char* op);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  Matrix& grad(std::size_t id);
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(const Var& v) const { return nodes_[v.id()].requires_grad; }

  // Seeds d(root)/d(root) = 1 and accumulates into Parameter::grad.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }
  // Description of the first node holding a NaN or infinity, if any.
  std::optional<std::string> first_non_finite() const;

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    const char* op = "";
    Parameter* param = nullptr;
    bool requires_grad = false;
  };
  Var push(Node node);

  std::vector<Node> nodes_;
  std::unordered_map<Parameter*, std::size_t> param_nodes_;
};

Var matmul(Var a, Var b);
// a * b^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
// a + bias broadcast over rows; bias is 1 x cols.
Var add_row(Var a, Var bias);
// alpha * a + beta
Var affine(Var a, double alpha, double beta);
Var tanh(Var a);
Var sigmoid(Var a);
Var square(Var a);
// log(max(a, floor)); gradient is zero where the floor is active.
Var log_floor(Var a, double floor = 1e-12);

// Row-wise softmax (max-subtracted).
Var softmax_rows(Var a);
// Row-wise softmax restricted to entries where mask != 0; masked outputs are exactly 0.
Var masked_softmax_rows(Var a, const Matrix& mask);
Var cumsum_rows(Var a);

Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(Var a, std::size_t start, std::size_t count);
Var slice_rows(Var a, std::size_t start, std::size_t count);

// Rows of `table` selected by ids.
Var lookup(Tape& tape, Parameter& table, const std::vector<std::size_t>& ids);
// Row r of the result is take_first[r] ? a.row(r) : b.row(r).
Var select_rows(const std::vector<char>& take_first, Var a, Var b);
// Elementwise max over steps, considering step t for row r only where valid[t][r].
// Every row must have at least one valid step.
Var masked_max(const std::vector<Var>& steps, const std::vector<std::vector<char>>& valid);
// out[r] = a(r, index[r]) as an N x 1 column.
Var pick(Var a, const std::vector<std::size_t>& index);
Var sum_all(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

}  // namespace bmim::ad
