#include "schedgraph/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "schedgraph/error.hpp"

namespace schedgraph {

namespace {

std::string shape_of(const Matrix& m) {
  return "[" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + "]";
}

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ValidationError(std::string(op) + ": shape mismatch " + shape_of(a) + " vs " +
                          shape_of(b));
}

void require_same_tape(const char* op, Var a, Var b) {
  if (a.tape() != b.tape()) throw ContractError(std::string(op) + ": operands live on different tapes");
}

}  // namespace

// ---------------------------------------------------------------- ParamStore

Param& ParamStore::add(const std::string& name, Matrix value) {
  if (params_.contains(name)) throw ValidationError("duplicate parameter '" + name + "'");
  if (!value.allFinite()) throw NumericError("parameter '" + name + "' is not finite");
  Matrix grad = Matrix::Zero(value.rows(), value.cols());
  return params_.emplace(name, Param{std::move(value), std::move(grad)}).first->second;
}

Param& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ValidationError("unknown parameter '" + name + "'");
  return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ValidationError("unknown parameter '" + name + "'");
  return it->second;
}

void ParamStore::reset_grads() {
  for (auto& [name, p] : params_) p.grad.setZero();
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

bool ParamStore::operator==(const ParamStore& other) const {
  if (params_.size() != other.params_.size()) return false;
  for (const auto& [name, p] : params_) {
    auto it = other.params_.find(name);
    if (it == other.params_.end()) return false;
    if (p.value.rows() != it->second.value.rows() || p.value.cols() != it->second.value.cols())
      return false;
    if (p.value != it->second.value) return false;
  }
  return true;
}

// ---------------------------------------------------------------- Var / Tape

const Matrix& Var::value() const { return tape_->node(id_).value; }
const Matrix& Var::grad() const { return tape_->node(id_).grad; }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ContractError("Var::scalar on a " + shape_of(v) + " value");
  return v(0, 0);
}

Var Tape::record(const char* op, Matrix value, bool requires_grad,
                 std::function<void(Tape&, const Node&)> backward) {
  if (!value.allFinite()) throw NumericError(std::string(op) + " produced a non-finite value");
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) { return record("constant", std::move(value), false, nullptr); }

Var Tape::scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

Var Tape::param(ParamStore& store, const std::string& name) {
  if (store_ != nullptr && store_ != &store)
    throw ContractError("a tape can only bind parameters from one ParamStore");
  store_ = &store;
  Param& p = store.at(name);
  if (auto it = leaves_.find(&p); it != leaves_.end()) return Var(this, it->second);
  Var v = record("param", p.value, true, nullptr);
  nodes_[v.id()].param = &p;
  leaves_.emplace(&p, v.id());
  return v;
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0)
    n.grad = g;
  else
    n.grad += g;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw ContractError("backward: loss recorded on another tape");
  const Node& root = nodes_[loss.id()];
  if (root.value.rows() != 1 || root.value.cols() != 1)
    throw ContractError("backward: loss must be a 1x1 scalar, got " + shape_of(root.value));
  for (auto& n : nodes_) n.grad.resize(0, 0);
  nodes_[loss.id()].grad = Matrix::Ones(1, 1);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this, n);
  }
  for (auto& n : nodes_)
    if (n.param != nullptr && n.grad.size() != 0) n.param->grad += n.grad;
  if (store_ != nullptr) store_->note_backward();
}

// ---------------------------------------------------------------- ops

Var matmul(Var a, Var b) {
  require_same_tape("matmul", a, b);
  if (a.cols() != b.rows())
    throw ValidationError("matmul: shape mismatch " + shape_of(a.value()) + " * " +
                          shape_of(b.value()));
  Tape& t = *a.tape();
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record("matmul", a.value() * b.value(), rg, [a, b](Tape& t, const Tape::Node& n) {
    if (t.requires_grad(a)) t.accumulate(a, n.grad * b.value().transpose());
    if (t.requires_grad(b)) t.accumulate(b, a.value().transpose() * n.grad);
  });
}

Var matmul_t(Var a, Var b) {
  require_same_tape("matmul_t", a, b);
  if (a.cols() != b.cols())
    throw ValidationError("matmul_t: shape mismatch " + shape_of(a.value()) + " * " +
                          shape_of(b.value()) + "^T");
  Tape& t = *a.tape();
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record("matmul_t", a.value() * b.value().transpose(), rg,
                  [a, b](Tape& t, const Tape::Node& n) {
                    if (t.requires_grad(a)) t.accumulate(a, n.grad * b.value());
                    if (t.requires_grad(b)) t.accumulate(b, n.grad.transpose() * a.value());
                  });
}

Var transpose(Var a) {
  Tape& t = *a.tape();
  return t.record("transpose", a.value().transpose(), t.requires_grad(a),
                  [a](Tape& t, const Tape::Node& n) { t.accumulate(a, n.grad.transpose()); });
}

Var add(Var a, Var b) {
  require_same_tape("add", a, b);
  require_same_shape("add", a.value(), b.value());
  Tape& t = *a.tape();
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record("add", a.value() + b.value(), rg, [a, b](Tape& t, const Tape::Node& n) {
    t.accumulate(a, n.grad);
    t.accumulate(b, n.grad);
  });
}

Var sub(Var a, Var b) {
  require_same_tape("sub", a, b);
  require_same_shape("sub", a.value(), b.value());
  Tape& t = *a.tape();
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record("sub", a.value() - b.value(), rg, [a, b](Tape& t, const Tape::Node& n) {
    t.accumulate(a, n.grad);
    if (t.requires_grad(b)) t.accumulate(b, -n.grad);
  });
}

Var add_row(Var a, Var row) {
  require_same_tape("add_row", a, row);
  if (row.rows() != 1 || row.cols() != a.cols())
    throw ValidationError("add_row: expected a 1x" + std::to_string(a.cols()) + " row, got " +
                          shape_of(row.value()));
  Tape& t = *a.tape();
  const bool rg = t.requires_grad(a) || t.requires_grad(row);
  Matrix out = a.value().rowwise() + row.value().row(0);
  return t.record("add_row", std::move(out), rg, [a, row](Tape& t, const Tape::Node& n) {
    t.accumulate(a, n.grad);
    if (t.requires_grad(row)) t.accumulate(row, n.grad.colwise().sum());
  });
}

Var mul(Var a, Var b) {
  require_same_tape("mul", a, b);
  require_same_shape("mul", a.value(), b.value());
  Tape& t = *a.tape();
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record("mul", a.value().cwiseProduct(b.value()), rg,
                  [a, b](Tape& t, const Tape::Node& n) {
                    if (t.requires_grad(a)) t.accumulate(a, n.grad.cwiseProduct(b.value()));
                    if (t.requires_grad(b)) t.accumulate(b, n.grad.cwiseProduct(a.value()));
                  });
}

Var mul_const(Var a, const Matrix& c) {
  require_same_shape("mul_const", a.value(), c);
  Tape& t = *a.tape();
  return t.record("mul_const", a.value().cwiseProduct(c), t.requires_grad(a),
                  [a, c](Tape& t, const Tape::Node& n) { t.accumulate(a, n.grad.cwiseProduct(c)); });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape();
  return t.record("scale", a.value() * s, t.requires_grad(a),
                  [a, s](Tape& t, const Tape::Node& n) { t.accumulate(a, n.grad * s); });
}

Var scale_rows(Var a, Var v) {
  require_same_tape("scale_rows", a, v);
  if (v.cols() != 1 || v.rows() != a.rows())
    throw ValidationError("scale_rows: expected a " + std::to_string(a.rows()) + "x1 column, got " +
                          shape_of(v.value()));
  Tape& t = *a.tape();
  const bool rg = t.requires_grad(a) || t.requires_grad(v);
  Matrix out = a.value().array().colwise() * v.value().col(0).array();
  return t.record("scale_rows", std::move(out), rg, [a, v](Tape& t, const Tape::Node& n) {
    if (t.requires_grad(a)) {
      Matrix g = n.grad.array().colwise() * v.value().col(0).array();
      t.accumulate(a, g);
    }
    if (t.requires_grad(v)) t.accumulate(v, n.grad.cwiseProduct(a.value()).rowwise().sum());
  });
}

Var tanh(Var a) {
  Tape& t = *a.tape();
  Matrix y = a.value().array().tanh().matrix();
  return t.record("tanh", std::move(y), t.requires_grad(a), [a](Tape& t, const Tape::Node& n) {
    Matrix g = n.grad.array() * (1.0 - n.value.array().square());
    t.accumulate(a, g);
  });
}

namespace {

void softmax_backward(Tape& t, Var a, const Tape::Node& n) {
  const Matrix& y = n.value;
  Vector dot = n.grad.cwiseProduct(y).rowwise().sum();
  Matrix g = y.array() * (n.grad.colwise() - dot).array();
  t.accumulate(a, g);
}

}  // namespace

Var softmax_row(Var a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    y.row(i) = (x.row(i).array() - m).exp().matrix();
    y.row(i) /= y.row(i).sum();
  }
  Tape& t = *a.tape();
  return t.record("softmax_row", std::move(y), t.requires_grad(a),
                  [a](Tape& t, const Tape::Node& n) { softmax_backward(t, a, n); });
}

Var masked_softmax_row(Var a, const Matrix& mask) {
  require_same_shape("masked_softmax_row", a.value(), mask);
  const Matrix& x = a.value();
  Matrix y = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (mask(i, j) != 0.0) m = std::max(m, x(i, j));
    if (m == -std::numeric_limits<double>::infinity()) continue;
    double total = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (mask(i, j) != 0.0) total += (y(i, j) = std::exp(x(i, j) - m));
    y.row(i) /= total;
  }
  Tape& t = *a.tape();
  return t.record("masked_softmax_row", std::move(y), t.requires_grad(a),
                  [a](Tape& t, const Tape::Node& n) { softmax_backward(t, a, n); });
}

Var row_normalize(Var a, std::span<const char> keep) {
  const Matrix& x = a.value();
  if (!keep.empty() && static_cast<Eigen::Index>(keep.size()) != x.rows())
    throw ValidationError("row_normalize: keep mask has " + std::to_string(keep.size()) +
                          " entries for " + std::to_string(x.rows()) + " rows");
  Vector sums = x.rowwise().sum();
  Matrix y = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const bool pass = !keep.empty() && keep[i] != 0;
    if (!pass && sums(i) != 0.0) y.row(i) /= sums(i);
  }
  std::vector<char> keep_copy(keep.begin(), keep.end());
  Tape& t = *a.tape();
  return t.record("row_normalize", std::move(y), t.requires_grad(a),
                  [a, sums, keep_copy](Tape& t, const Tape::Node& n) {
                    Matrix g = n.grad;
                    for (Eigen::Index i = 0; i < g.rows(); ++i) {
                      const bool pass = !keep_copy.empty() && keep_copy[i] != 0;
                      if (pass) continue;
                      if (sums(i) == 0.0) {
                        g.row(i).setZero();
                        continue;
                      }
                      const double dot = n.grad.row(i).dot(n.value.row(i));
                      g.row(i) = (n.grad.row(i).array() - dot) / sums(i);
                    }
                    t.accumulate(a, g);
                  });
}

Var mean_rows(Var a) {
  const auto n_rows = a.rows();
  if (n_rows == 0) throw ValidationError("mean_rows: empty input");
  Tape& t = *a.tape();
  Matrix y = a.value().colwise().mean();
  return t.record("mean_rows", std::move(y), t.requires_grad(a),
                  [a, n_rows](Tape& t, const Tape::Node& n) {
                    Matrix g = n.grad.replicate(n_rows, 1) / static_cast<double>(n_rows);
                    t.accumulate(a, g);
                  });
}

Var sum(Var a) {
  Tape& t = *a.tape();
  return t.record("sum", Matrix::Constant(1, 1, a.value().sum()), t.requires_grad(a),
                  [a](Tape& t, const Tape::Node& n) {
                    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), n.grad(0, 0)));
                  });
}

Var sum_sq(Var a) {
  Tape& t = *a.tape();
  return t.record("sum_sq", Matrix::Constant(1, 1, a.value().squaredNorm()), t.requires_grad(a),
                  [a](Tape& t, const Tape::Node& n) {
                    t.accumulate(a, 2.0 * n.grad(0, 0) * a.value());
                  });
}

Var kl_div(Var p, Var q) {
  require_same_tape("kl_div", p, q);
  require_same_shape("kl_div", p.value(), q.value());
  const auto lp = (p.value().array() + kProbFloor).log();
  const auto lq = (q.value().array() + kProbFloor).log();
  const double v = (p.value().array() * (lp - lq)).sum();
  Tape& t = *p.tape();
  const bool rg = t.requires_grad(p) || t.requires_grad(q);
  return t.record("kl_div", Matrix::Constant(1, 1, v), rg, [p, q](Tape& t, const Tape::Node& n) {
    const double g = n.grad(0, 0);
    const auto pa = p.value().array();
    const auto qa = q.value().array();
    if (t.requires_grad(p)) {
      Matrix gp = g * ((pa + kProbFloor).log() - (qa + kProbFloor).log() + pa / (pa + kProbFloor));
      t.accumulate(p, gp);
    }
    if (t.requires_grad(q)) {
      Matrix gq = -g * pa / (qa + kProbFloor);
      t.accumulate(q, gq);
    }
  });
}

Var cross_entropy(Var p, std::span<const int> labels) {
  const Matrix& x = p.value();
  if (static_cast<Eigen::Index>(labels.size()) != x.rows())
    throw ValidationError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(x.rows()) + " rows");
  double v = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= x.cols())
      throw ValidationError("cross_entropy: label " + std::to_string(y) + " out of range");
    v -= std::log(x(i, y) + kProbFloor);
  }
  std::vector<int> ls(labels.begin(), labels.end());
  Tape& t = *p.tape();
  return t.record("cross_entropy", Matrix::Constant(1, 1, v), t.requires_grad(p),
                  [p, ls](Tape& t, const Tape::Node& n) {
                    Matrix g = Matrix::Zero(p.rows(), p.cols());
                    for (Eigen::Index i = 0; i < g.rows(); ++i)
                      g(i, ls[i]) = -n.grad(0, 0) / (p.value()(i, ls[i]) + kProbFloor);
                    t.accumulate(p, g);
                  });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ValidationError("concat: no inputs");
  Tape& t = *parts.front().tape();
  const auto rows = parts.front().rows();
  Eigen::Index cols = 0;
  bool rg = false;
  for (const Var& v : parts) {
    require_same_tape("concat", parts.front(), v);
    if (v.rows() != rows)
      throw ValidationError("concat: row mismatch " + std::to_string(rows) + " vs " +
                            std::to_string(v.rows()));
    cols += v.cols();
    rg = rg || t.requires_grad(v);
  }
  Matrix y(rows, cols);
  Eigen::Index off = 0;
  for (const Var& v : parts) {
    y.middleCols(off, v.cols()) = v.value();
    off += v.cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return t.record("concat", std::move(y), rg, [ps](Tape& t, const Tape::Node& n) {
    Eigen::Index off = 0;
    for (const Var& v : ps) {
      if (t.requires_grad(v)) t.accumulate(v, n.grad.middleCols(off, v.cols()));
      off += v.cols();
    }
  });
}

Var select_rows(Var a, std::span<const Eigen::Index> rows) {
  const Matrix& x = a.value();
  Matrix y(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= x.rows())
      throw ValidationError("select_rows: index " + std::to_string(rows[r]) + " out of range");
    y.row(static_cast<Eigen::Index>(r)) = x.row(rows[r]);
  }
  std::vector<Eigen::Index> idx(rows.begin(), rows.end());
  Tape& t = *a.tape();
  return t.record("select_rows", std::move(y), t.requires_grad(a),
                  [a, idx](Tape& t, const Tape::Node& n) {
                    Matrix g = Matrix::Zero(a.rows(), a.cols());
                    for (std::size_t r = 0; r < idx.size(); ++r)
                      g.row(idx[r]) += n.grad.row(static_cast<Eigen::Index>(r));
                    t.accumulate(a, g);
                  });
}

Var select_col(Var a, Eigen::Index col) {
  if (col < 0 || col >= a.cols())
    throw ValidationError("select_col: index " + std::to_string(col) + " out of range");
  Tape& t = *a.tape();
  return t.record("select_col", a.value().col(col), t.requires_grad(a),
                  [a, col](Tape& t, const Tape::Node& n) {
                    Matrix g = Matrix::Zero(a.rows(), a.cols());
                    g.col(col) = n.grad.col(0);
                    t.accumulate(a, g);
                  });
}

Var gather(Var a, std::span<const Eigen::Index> rows, std::span<const Eigen::Index> cols) {
  const Matrix& x = a.value();
  for (auto r : rows)
    if (r >= x.rows()) throw ValidationError("gather: row index out of range");
  for (auto c : cols)
    if (c >= x.cols()) throw ValidationError("gather: column index out of range");
  const auto nr = static_cast<Eigen::Index>(rows.size());
  const auto nc = static_cast<Eigen::Index>(cols.size());
  Matrix y = Matrix::Zero(nr, nc);
  for (Eigen::Index i = 0; i < nr; ++i)
    for (Eigen::Index j = 0; j < nc; ++j)
      if (rows[i] >= 0 && cols[j] >= 0) y(i, j) = x(rows[i], cols[j]);
  std::vector<Eigen::Index> ri(rows.begin(), rows.end());
  std::vector<Eigen::Index> ci(cols.begin(), cols.end());
  Tape& t = *a.tape();
  return t.record("gather", std::move(y), t.requires_grad(a),
                  [a, ri, ci](Tape& t, const Tape::Node& n) {
                    Matrix g = Matrix::Zero(a.rows(), a.cols());
                    for (std::size_t i = 0; i < ri.size(); ++i)
                      for (std::size_t j = 0; j < ci.size(); ++j)
                        if (ri[i] >= 0 && ci[j] >= 0)
                          g(ri[i], ci[j]) += n.grad(static_cast<Eigen::Index>(i),
                                                    static_cast<Eigen::Index>(j));
                    t.accumulate(a, g);
                  });
}

Var pairwise_sqdist(Var a) {
  const Matrix& x = a.value();
  const auto n = x.rows();
  Matrix d = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (x.row(i) - x.row(j)).squaredNorm();
  Tape& t = *a.tape();
  return t.record("pairwise_sqdist", std::move(d), t.requires_grad(a),
                  [a](Tape& t, const Tape::Node& n) {
                    const Matrix sym = n.grad + n.grad.transpose();
                    const Vector rs = sym.rowwise().sum();
                    Matrix g = 2.0 * (a.value().array().colwise() * rs.array()).matrix() -
                               2.0 * sym * a.value();
                    t.accumulate(a, g);
                  });
}

}  // namespace schedgraph
