#pragma once

#include "erw/types.hpp"

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace erw {

class Tape;

// Lightweight handle onto a tape node. Values are immutable after creation;
// grad accumulates across backward passes until Tape::zero_grad.
class Tensor {
 public:
  Tensor() = default;

  bool defined() const { return tape_ != nullptr; }
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  const Shape& shape() const;
  Index size() const;
  bool requires_grad() const;
  const Array& values() const;
  const Array& grad() const;

  // Rank-2 view of the flat buffer.
  Eigen::Map<const Matrix> matrix() const;
  // Rank-0 access.
  double scalar() const;

 private:
  friend class Tape;
  Tensor(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Recorded computation. Nodes are appended in execution order, so parents
// always precede children; backward replays the list in reverse.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor input(const Shape& shape, Array values, bool requires_grad);
  Tensor input(const Matrix& m, bool requires_grad);
  Tensor input_row(const Vector& v, bool requires_grad);  // 1 x n
  Tensor input_scalar(double v, bool requires_grad);

  // Seeds d(root)/d(root) = 1 and accumulates d(root)/d(node) into the grad
  // of every requires_grad ancestor. Adjoints are per-pass, so replaying
  // backward twice accumulates exactly twice the gradient.
  void backward(const Tensor& root);
  void zero_grad();

  int num_nodes() const { return static_cast<int>(nodes_.size()); }

  // --- low-level node API used by the op free functions ---
  using PullFn = std::function<void(Tape&, const Array& out_adjoint)>;
  int emit(Shape shape, Array values, std::vector<int> parents, PullFn pull, const char* op_name);
  const Array& values_of(int id) const { return nodes_[static_cast<size_t>(id)].values; }
  const Shape& shape_of(int id) const { return nodes_[static_cast<size_t>(id)].shape; }
  bool requires_grad_of(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }
  const Array& grad_of(int id) const;
  // Accumulates into the per-pass adjoint of `id`; no-op for non-grad nodes.
  void add_adjoint(int id, const Array& contribution);
  Tensor handle(int id) { return Tensor(this, id); }

 private:
  struct Node {
    Shape shape;
    Array values;
    Array grad;  // allocated only when requires_grad
    bool requires_grad = false;
    std::vector<int> parents;
    PullFn pull;
  };

  friend class Tensor;
  std::vector<Node> nodes_;
  // live only during a backward pass
  std::vector<Array> adjoints_;
  std::vector<char> reachable_;
};

// Raised when an operation would produce NaN/Inf or violates a numeric
// domain; values on the tape stay finite by construction.
class NumericsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- operations --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& x, double c);
Tensor silu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);
Tensor sum(const Tensor& x);                       // -> rank-0
Tensor broadcast_rows(const Tensor& row, Index n); // 1 x d -> n x d
Tensor l2_normalize_rows(const Tensor& x);
Tensor diag(const Tensor& x);                      // n x n -> n

// Max over coordinates of |analytic - central difference| / max(1, |cd|).
// f must map a tensor to a rank-0 tensor on the tape it is given.
double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                  const Shape& shape, const Array& x0, double step);

}  // namespace erw
