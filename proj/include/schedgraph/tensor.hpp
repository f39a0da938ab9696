#pragma once

// Dense f64 tensors, a named parameter registry and a reverse-mode tape.
//
// Tensors are Eigen matrices (rank <= 2; vectors are 1 x n or n x 1, scalars
// are 1 x 1). A Tape records every operation applied to Vars; backward()
// walks the tape in reverse and accumulates exact gradients into the
// ParamStore entries the leaves were bound to.

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace schedgraph {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using Vector = Eigen::VectorXd;

// Additive floor used inside every log of a probability.
inline constexpr double kProbFloor = 1e-12;

struct Param {
  Matrix value;
  Matrix grad;
};

class ParamStore {
 public:
  using Map = std::map<std::string, Param>;

  // Registers a new parameter with a zero gradient. Names must be unique.
  Param& add(const std::string& name, Matrix value);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.contains(name); }

  void reset_grads();
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  Map::iterator begin() { return params_.begin(); }
  Map::iterator end() { return params_.end(); }
  Map::const_iterator begin() const { return params_.begin(); }
  Map::const_iterator end() const { return params_.end(); }

  // Number of backward passes that have written into this store.
  std::size_t backward_passes() const { return backward_passes_; }
  void note_backward() { ++backward_passes_; }

  bool operator==(const ParamStore& other) const;

 private:
  Map params_;
  std::size_t backward_passes_ = 0;
};

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
// lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var scalar(double v);
  // Leaf bound to a stored parameter. Repeated calls with the same name
  // return the same Var.
  Var param(ParamStore& store, const std::string& name);

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients into the bound
  // ParamStore (grads add up across calls until reset_grads()). Throws
  // ContractError if loss is not 1 x 1.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  // Op plumbing, used by the free functions below.
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Param* param = nullptr;
    std::function<void(Tape&, const Node&)> backward;
  };
  Var record(const char* op, Matrix value, bool requires_grad,
             std::function<void(Tape&, const Node&)> backward);
  const Node& node(std::size_t id) const { return nodes_[id]; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  void accumulate(Var v, const Matrix& g);

 private:
  std::vector<Node> nodes_;
  std::map<const Param*, std::size_t> leaves_;
  ParamStore* store_ = nullptr;
};

// Forward contract of each op: standard definitions on finite inputs, shape
// mismatch -> ValidationError, non-finite output -> NumericError naming the op.
Var matmul(Var a, Var b);
// a * b^T
Var matmul_t(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
// Adds a 1 x cols row vector to every row of a.
Var add_row(Var a, Var row);
// Elementwise product.
Var mul(Var a, Var b);
// Elementwise product with a constant matrix.
Var mul_const(Var a, const Matrix& c);
Var scale(Var a, double s);
// out(i, j) = a(i, j) * v(i); v is rows x 1.
Var scale_rows(Var a, Var v);
Var tanh(Var a);
// Row softmax with max subtraction.
Var softmax_row(Var a);
// Row softmax restricted to entries where mask != 0; masked entries and rows
// with an empty mask come out as exactly 0.
Var masked_softmax_row(Var a, const Matrix& mask);
// Divides each row by its sum; all-zero rows stay zero. Rows whose flag in
// `keep` is non-zero pass through unchanged (pass an empty span to
// normalize every row).
Var row_normalize(Var a, std::span<const char> keep = {});
// Mean over rows: rows x cols -> 1 x cols.
Var mean_rows(Var a);
Var sum(Var a);
Var sum_sq(Var a);
// Sum over rows of KL(p_i || q_i) = sum_c p_ic (ln(p_ic + floor) - ln(q_ic + floor)).
Var kl_div(Var p, Var q);
// -sum_i ln(p(i, label_i) + floor).
Var cross_entropy(Var p, std::span<const int> labels);
// Column-wise concatenation.
Var concat(std::span<const Var> parts);
Var select_rows(Var a, std::span<const Eigen::Index> rows);
Var select_col(Var a, Eigen::Index col);
// out(r, c) = a(rows[r], cols[c]), or 0 when either index is negative.
Var gather(Var a, std::span<const Eigen::Index> rows, std::span<const Eigen::Index> cols);
// out(i, j) = ||a_i - a_j||^2.
Var pairwise_sqdist(Var a);

}  // namespace schedgraph
