#include "erw/tensor.hpp"

#include <cmath>
#include <sstream>

namespace erw {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << "]";
  return os.str();
}

namespace {

void check_finite(const Array& a, const char* op_name) {
  if (!a.allFinite()) {
    throw NumericsError(std::string(op_name) + ": result contains NaN/Inf");
  }
}

void require_rank2(const Tensor& t, const char* op_name) {
  if (t.shape().size() != 2) {
    throw std::invalid_argument(std::string(op_name) + ": expected rank-2 tensor, got shape " +
                                shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op_name) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op_name) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

Array sigmoid(const Array& x) {
  // exp of a non-positive argument on both branches keeps this overflow-free.
  return (x >= 0.0).select(1.0 / (1.0 + (-x).exp()), x.exp() / (1.0 + x.exp()));
}

}  // namespace

// --- Tensor -------------------------------------------------------------

const Shape& Tensor::shape() const { return tape_->shape_of(id_); }
Index Tensor::size() const { return tape_->values_of(id_).size(); }
bool Tensor::requires_grad() const { return tape_->requires_grad_of(id_); }
const Array& Tensor::values() const { return tape_->values_of(id_); }
const Array& Tensor::grad() const { return tape_->grad_of(id_); }

Eigen::Map<const Matrix> Tensor::matrix() const {
  const Shape& s = shape();
  if (s.size() != 2) {
    throw std::logic_error("Tensor::matrix: tensor is not rank-2, shape " + shape_str(s));
  }
  return Eigen::Map<const Matrix>(values().data(), s[0], s[1]);
}

double Tensor::scalar() const {
  if (size() != 1) {
    throw std::logic_error("Tensor::scalar: tensor has " + std::to_string(size()) + " elements");
  }
  return values()[0];
}

// --- Tape ---------------------------------------------------------------

const Array& Tape::grad_of(int id) const {
  const Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.requires_grad) {
    throw std::logic_error("Tape::grad_of: node does not require grad");
  }
  return n.grad;
}

int Tape::emit(Shape shape, Array values, std::vector<int> parents, PullFn pull,
               const char* op_name) {
  if (values.size() != shape_size(shape)) {
    throw std::logic_error(std::string(op_name) + ": value count " + std::to_string(values.size()) +
                           " does not match shape " + shape_str(shape));
  }
  check_finite(values, op_name);
  Node node;
  node.shape = std::move(shape);
  node.values = std::move(values);
  node.parents = std::move(parents);
  node.requires_grad = false;
  for (int p : node.parents) {
    if (nodes_[static_cast<size_t>(p)].requires_grad) node.requires_grad = true;
  }
  if (node.requires_grad) {
    node.grad = Array::Zero(node.values.size());
    node.pull = std::move(pull);
  }
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor Tape::input(const Shape& shape, Array values, bool requires_grad) {
  if (values.size() != shape_size(shape)) {
    throw std::invalid_argument("Tape::input: value count " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape));
  }
  check_finite(values, "input");
  Node node;
  node.shape = shape;
  node.values = std::move(values);
  node.requires_grad = requires_grad;
  if (requires_grad) node.grad = Array::Zero(node.values.size());
  nodes_.push_back(std::move(node));
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

Tensor Tape::input(const Matrix& m, bool requires_grad) {
  Array flat = Eigen::Map<const Array>(m.data(), m.size());
  return input(Shape{m.rows(), m.cols()}, std::move(flat), requires_grad);
}

Tensor Tape::input_row(const Vector& v, bool requires_grad) {
  Array flat = Eigen::Map<const Array>(v.data(), v.size());
  return input(Shape{1, v.size()}, std::move(flat), requires_grad);
}

Tensor Tape::input_scalar(double v, bool requires_grad) {
  Array a(1);
  a[0] = v;
  return input(Shape{}, std::move(a), requires_grad);
}

void Tape::add_adjoint(int id, const Array& contribution) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.requires_grad) return;
  Array& adj = adjoints_[static_cast<size_t>(id)];
  if (adj.size() == 0) {
    adj = contribution;
  } else {
    adj += contribution;
  }
}

void Tape::backward(const Tensor& root) {
  if (root.tape_ != this) {
    throw std::invalid_argument("Tape::backward: root belongs to a different tape");
  }
  if (!root.shape().empty()) {
    throw std::invalid_argument("Tape::backward: root must be a scalar, got shape " +
                                shape_str(root.shape()));
  }
  if (!root.requires_grad()) {
    throw std::invalid_argument("Tape::backward: root does not depend on any grad tensor");
  }

  const int n = num_nodes();
  reachable_.assign(static_cast<size_t>(n), 0);
  // Ancestors of the root along requires_grad edges; ids decrease toward
  // parents, so a reverse sweep visits children before parents.
  reachable_[static_cast<size_t>(root.id_)] = 1;
  for (int i = root.id_; i >= 0; --i) {
    if (!reachable_[static_cast<size_t>(i)]) continue;
    for (int p : nodes_[static_cast<size_t>(i)].parents) {
      if (nodes_[static_cast<size_t>(p)].requires_grad) reachable_[static_cast<size_t>(p)] = 1;
    }
  }

  adjoints_.assign(static_cast<size_t>(n), Array());
  adjoints_[static_cast<size_t>(root.id_)] = Array::Ones(1);

  for (int i = root.id_; i >= 0; --i) {
    if (!reachable_[static_cast<size_t>(i)]) continue;
    Node& node = nodes_[static_cast<size_t>(i)];
    Array& adj = adjoints_[static_cast<size_t>(i)];
    if (adj.size() == 0) adj = Array::Zero(node.values.size());
    if (node.pull) node.pull(*this, adj);
  }

  for (int i = root.id_; i >= 0; --i) {
    if (!reachable_[static_cast<size_t>(i)]) continue;
    Node& node = nodes_[static_cast<size_t>(i)];
    const Array& adj = adjoints_[static_cast<size_t>(i)];
    if (adj.size() != 0) {
      node.grad += adj;
      check_finite(node.grad, "backward");
    }
  }
  adjoints_.clear();
  reachable_.clear();
}

void Tape::zero_grad() {
  for (Node& n : nodes_) {
    if (n.requires_grad) n.grad.setZero();
  }
}

// --- ops ----------------------------------------------------------------

namespace {

Tape& tape_for(const Tensor& t, const char* op_name) {
  if (!t.defined()) {
    throw std::invalid_argument(std::string(op_name) + ": undefined tensor operand");
  }
  return *t.tape();
}

void require_same_tape(const Tensor& a, const Tensor& b, const char* op_name) {
  if (a.tape() != b.tape()) {
    throw std::invalid_argument(std::string(op_name) + ": operands live on different tapes");
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tape& tape = tape_for(a, "matmul");
  require_same_tape(a, b, "matmul");
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const Index m = a.shape()[0], k = a.shape()[1], k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2) {
    throw std::invalid_argument("matmul: inner dimensions differ, " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  Matrix out = a.matrix() * b.matrix();
  Array flat = Eigen::Map<const Array>(out.data(), out.size());
  const int aid = a.id(), bid = b.id();
  auto pull = [aid, bid, m, k, n](Tape& t, const Array& g) {
    Eigen::Map<const Matrix> G(g.data(), m, n);
    Eigen::Map<const Matrix> A(t.values_of(aid).data(), m, k);
    Eigen::Map<const Matrix> B(t.values_of(bid).data(), k, n);
    if (t.requires_grad_of(aid)) {
      Matrix ga = G * B.transpose();
      t.add_adjoint(aid, Eigen::Map<const Array>(ga.data(), ga.size()));
    }
    if (t.requires_grad_of(bid)) {
      Matrix gb = A.transpose() * G;
      t.add_adjoint(bid, Eigen::Map<const Array>(gb.data(), gb.size()));
    }
  };
  return tape.handle(tape.emit(Shape{m, n}, std::move(flat), {aid, bid}, std::move(pull), "matmul"));
}

Tensor transpose(const Tensor& x) {
  Tape& tape = tape_for(x, "transpose");
  require_rank2(x, "transpose");
  const Index m = x.shape()[0], n = x.shape()[1];
  Matrix out = x.matrix().transpose();
  Array flat = Eigen::Map<const Array>(out.data(), out.size());
  const int xid = x.id();
  auto pull = [xid, m, n](Tape& t, const Array& g) {
    Eigen::Map<const Matrix> G(g.data(), n, m);
    Matrix gx = G.transpose();
    t.add_adjoint(xid, Eigen::Map<const Array>(gx.data(), gx.size()));
  };
  return tape.handle(tape.emit(Shape{n, m}, std::move(flat), {xid}, std::move(pull), "transpose"));
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tape& tape = tape_for(a, "add");
  require_same_tape(a, b, "add");
  require_same_shape(a, b, "add");
  Array out = a.values() + b.values();
  const int aid = a.id(), bid = b.id();
  auto pull = [aid, bid](Tape& t, const Array& g) {
    t.add_adjoint(aid, g);
    t.add_adjoint(bid, g);
  };
  return tape.handle(tape.emit(a.shape(), std::move(out), {aid, bid}, std::move(pull), "add"));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tape& tape = tape_for(a, "sub");
  require_same_tape(a, b, "sub");
  require_same_shape(a, b, "sub");
  Array out = a.values() - b.values();
  const int aid = a.id(), bid = b.id();
  auto pull = [aid, bid](Tape& t, const Array& g) {
    t.add_adjoint(aid, g);
    t.add_adjoint(bid, Array(-g));
  };
  return tape.handle(tape.emit(a.shape(), std::move(out), {aid, bid}, std::move(pull), "sub"));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tape& tape = tape_for(a, "mul");
  require_same_tape(a, b, "mul");
  require_same_shape(a, b, "mul");
  Array out = a.values() * b.values();
  const int aid = a.id(), bid = b.id();
  auto pull = [aid, bid](Tape& t, const Array& g) {
    if (t.requires_grad_of(aid)) t.add_adjoint(aid, Array(g * t.values_of(bid)));
    if (t.requires_grad_of(bid)) t.add_adjoint(bid, Array(g * t.values_of(aid)));
  };
  return tape.handle(tape.emit(a.shape(), std::move(out), {aid, bid}, std::move(pull), "mul"));
}

Tensor scale(const Tensor& x, double c) {
  Tape& tape = tape_for(x, "scale");
  if (!std::isfinite(c)) throw NumericsError("scale: non-finite scalar");
  Array out = x.values() * c;
  const int xid = x.id();
  auto pull = [xid, c](Tape& t, const Array& g) { t.add_adjoint(xid, Array(g * c)); };
  return tape.handle(tape.emit(x.shape(), std::move(out), {xid}, std::move(pull), "scale"));
}

Tensor silu(const Tensor& x) {
  Tape& tape = tape_for(x, "silu");
  Array sig = sigmoid(x.values());
  Array out = x.values() * sig;
  const int xid = x.id();
  auto pull = [xid, sig](Tape& t, const Array& g) {
    const Array& xv = t.values_of(xid);
    // d/dx x*sig(x) = sig(x) * (1 + x * (1 - sig(x)))
    t.add_adjoint(xid, Array(g * sig * (1.0 + xv * (1.0 - sig))));
  };
  return tape.handle(tape.emit(x.shape(), std::move(out), {xid}, std::move(pull), "silu"));
}

Tensor exp(const Tensor& x) {
  Tape& tape = tape_for(x, "exp");
  Array out = x.values().exp();
  const int xid = x.id();
  auto pull = [xid](Tape& t, const Array& g) {
    t.add_adjoint(xid, Array(g * t.values_of(xid).exp()));
  };
  return tape.handle(tape.emit(x.shape(), std::move(out), {xid}, std::move(pull), "exp"));
}

Tensor log(const Tensor& x) {
  Tape& tape = tape_for(x, "log");
  if ((x.values() < 0.0).any()) {
    throw std::domain_error("log: negative input");
  }
  Array out = x.values().log();
  const int xid = x.id();
  auto pull = [xid](Tape& t, const Array& g) { t.add_adjoint(xid, Array(g / t.values_of(xid))); };
  return tape.handle(tape.emit(x.shape(), std::move(out), {xid}, std::move(pull), "log"));
}

Tensor sqrt(const Tensor& x) {
  Tape& tape = tape_for(x, "sqrt");
  if ((x.values() < 0.0).any()) {
    throw std::domain_error("sqrt: negative input");
  }
  Array out = x.values().sqrt();
  const int xid = x.id();
  auto pull = [xid, out](Tape& t, const Array& g) { t.add_adjoint(xid, Array(g / (2.0 * out))); };
  return tape.handle(tape.emit(x.shape(), std::move(out), {xid}, std::move(pull), "sqrt"));
}

Tensor softmax_rows(const Tensor& x) {
  Tape& tape = tape_for(x, "softmax_rows");
  require_rank2(x, "softmax_rows");
  const Index m = x.shape()[0], n = x.shape()[1];
  Matrix out(m, n);
  Eigen::Map<const Matrix> X(x.values().data(), m, n);
  for (Index i = 0; i < m; ++i) {
    const double mx = X.row(i).maxCoeff();
    out.row(i) = (X.row(i).array() - mx).exp();
    out.row(i) /= out.row(i).sum();
  }
  Array flat = Eigen::Map<const Array>(out.data(), out.size());
  Array ycopy = flat;
  const int xid = x.id();
  auto pull = [xid, m, n, ycopy](Tape& t, const Array& g) {
    Eigen::Map<const Matrix> G(g.data(), m, n);
    Eigen::Map<const Matrix> Y(ycopy.data(), m, n);
    Matrix gx(m, n);
    for (Index i = 0; i < m; ++i) {
      const double dot = (G.row(i).array() * Y.row(i).array()).sum();
      gx.row(i) = Y.row(i).array() * (G.row(i).array() - dot);
    }
    t.add_adjoint(xid, Eigen::Map<const Array>(gx.data(), gx.size()));
  };
  return tape.handle(tape.emit(Shape{m, n}, std::move(flat), {xid}, std::move(pull), "softmax_rows"));
}

Tensor log_softmax_rows(const Tensor& x) {
  Tape& tape = tape_for(x, "log_softmax_rows");
  require_rank2(x, "log_softmax_rows");
  const Index m = x.shape()[0], n = x.shape()[1];
  Matrix out(m, n);
  Eigen::Map<const Matrix> X(x.values().data(), m, n);
  for (Index i = 0; i < m; ++i) {
    const double mx = X.row(i).maxCoeff();
    const double lse = mx + std::log((X.row(i).array() - mx).exp().sum());
    out.row(i) = X.row(i).array() - lse;
  }
  Array flat = Eigen::Map<const Array>(out.data(), out.size());
  Array ycopy = flat;
  const int xid = x.id();
  auto pull = [xid, m, n, ycopy](Tape& t, const Array& g) {
    Eigen::Map<const Matrix> G(g.data(), m, n);
    Eigen::Map<const Matrix> Y(ycopy.data(), m, n);
    Matrix gx(m, n);
    for (Index i = 0; i < m; ++i) {
      const double gsum = G.row(i).sum();
      gx.row(i) = G.row(i).array() - Y.row(i).array().exp() * gsum;
    }
    t.add_adjoint(xid, Eigen::Map<const Array>(gx.data(), gx.size()));
  };
  return tape.handle(
      tape.emit(Shape{m, n}, std::move(flat), {xid}, std::move(pull), "log_softmax_rows"));
}

Tensor sum(const Tensor& x) {
  Tape& tape = tape_for(x, "sum");
  Array out(1);
  out[0] = x.values().sum();
  const int xid = x.id();
  const Index sz = x.size();
  auto pull = [xid, sz](Tape& t, const Array& g) {
    t.add_adjoint(xid, Array(Array::Constant(sz, g[0])));
  };
  return tape.handle(tape.emit(Shape{}, std::move(out), {xid}, std::move(pull), "sum"));
}

Tensor broadcast_rows(const Tensor& row, Index n) {
  Tape& tape = tape_for(row, "broadcast_rows");
  require_rank2(row, "broadcast_rows");
  if (row.shape()[0] != 1) {
    throw std::invalid_argument("broadcast_rows: expected a 1 x d tensor, got shape " +
                                shape_str(row.shape()));
  }
  if (n < 1) throw std::invalid_argument("broadcast_rows: n must be positive");
  const Index d = row.shape()[1];
  Matrix out = row.matrix().replicate(n, 1);
  Array flat = Eigen::Map<const Array>(out.data(), out.size());
  const int rid = row.id();
  auto pull = [rid, n, d](Tape& t, const Array& g) {
    Eigen::Map<const Matrix> G(g.data(), n, d);
    Matrix gr = G.colwise().sum();
    t.add_adjoint(rid, Eigen::Map<const Array>(gr.data(), gr.size()));
  };
  return tape.handle(tape.emit(Shape{n, d}, std::move(flat), {rid}, std::move(pull), "broadcast_rows"));
}

Tensor l2_normalize_rows(const Tensor& x) {
  Tape& tape = tape_for(x, "l2_normalize_rows");
  require_rank2(x, "l2_normalize_rows");
  const Index m = x.shape()[0], n = x.shape()[1];
  Eigen::Map<const Matrix> X(x.values().data(), m, n);
  Vector norms(m);
  for (Index i = 0; i < m; ++i) {
    norms[i] = X.row(i).norm();
    if (norms[i] < 1e-300) {
      throw std::domain_error("l2_normalize_rows: zero row " + std::to_string(i));
    }
  }
  Matrix out = norms.cwiseInverse().asDiagonal() * X;
  Array flat = Eigen::Map<const Array>(out.data(), out.size());
  Array ycopy = flat;
  const int xid = x.id();
  auto pull = [xid, m, n, ycopy, norms](Tape& t, const Array& g) {
    Eigen::Map<const Matrix> G(g.data(), m, n);
    Eigen::Map<const Matrix> Y(ycopy.data(), m, n);
    Matrix gx(m, n);
    for (Index i = 0; i < m; ++i) {
      const double dot = G.row(i).dot(Y.row(i));
      gx.row(i) = (G.row(i) - dot * Y.row(i)) / norms[i];
    }
    t.add_adjoint(xid, Eigen::Map<const Array>(gx.data(), gx.size()));
  };
  return tape.handle(
      tape.emit(Shape{m, n}, std::move(flat), {xid}, std::move(pull), "l2_normalize_rows"));
}

Tensor diag(const Tensor& x) {
  Tape& tape = tape_for(x, "diag");
  require_rank2(x, "diag");
  const Index m = x.shape()[0], n = x.shape()[1];
  if (m != n) {
    throw std::invalid_argument("diag: expected a square tensor, got shape " + shape_str(x.shape()));
  }
  Array out(m);
  Eigen::Map<const Matrix> X(x.values().data(), m, n);
  for (Index i = 0; i < m; ++i) out[i] = X(i, i);
  const int xid = x.id();
  auto pull = [xid, m, n](Tape& t, const Array& g) {
    Matrix gx = Matrix::Zero(m, n);
    for (Index i = 0; i < m; ++i) gx(i, i) = g[i];
    t.add_adjoint(xid, Eigen::Map<const Array>(gx.data(), gx.size()));
  };
  return tape.handle(tape.emit(Shape{m}, std::move(out), {xid}, std::move(pull), "diag"));
}

double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f, const Shape& shape,
                  const Array& x0, double step) {
  if (step <= 0.0) throw std::invalid_argument("grad_check: step must be positive");
  Array analytic;
  {
    Tape tape;
    Tensor x = tape.input(shape, x0, true);
    Tensor y = f(tape, x);
    if (!y.shape().empty()) {
      throw std::invalid_argument("grad_check: f must return a scalar, got shape " +
                                  shape_str(y.shape()));
    }
    tape.backward(y);
    analytic = x.grad();
  }
  auto eval = [&](const Array& xv) {
    Tape tape;
    Tensor x = tape.input(shape, xv, false);
    return f(tape, x).scalar();
  };
  double max_rel = 0.0;
  for (Index i = 0; i < x0.size(); ++i) {
    Array xp = x0, xm = x0;
    xp[i] += step;
    xm[i] -= step;
    const double cd = (eval(xp) - eval(xm)) / (2.0 * step);
    const double rel = std::abs(analytic[i] - cd) / std::max(1.0, std::abs(cd));
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace erw

