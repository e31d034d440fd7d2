#pragma once

// Small reverse-mode gradient engine over dense matrices.
//
// The primitive set is closed: add, mul, exp, log, tanh, affine, sum, square
// (plus constant scaling/shifting, which are affine in one argument). Every
// model and loss in this project is built from these, so a finite-difference
// check of each primitive covers the full gradient path.

#include <Eigen/Core>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sketchteach {

using Matrix = Eigen::MatrixXd;

/// A non-finite value appeared in the forward or backward pass.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(std::string block, const std::string& what)
      : std::runtime_error("non-finite value in block '" + block + "': " + what), block_(std::move(block)) {}
  const std::string& block() const { return block_; }

 private:
  std::string block_;
};

/// Named parameter blocks packed into one flat vector (column-major per block).
class ParamVector {
 public:
  struct Block {
    std::string name;
    Eigen::Index offset;
    Eigen::Index rows;
    Eigen::Index cols;
    Eigen::Index size() const { return rows * cols; }
  };

  ParamVector() = default;

  /// Appends a block; names must be unique.
  void add_block(const std::string& name, const Matrix& init);

  const std::vector<Block>& blocks() const { return blocks_; }
  const Eigen::VectorXd& values() const { return values_; }
  Eigen::VectorXd& values() { return values_; }
  Eigen::Index size() const { return values_.size(); }

  std::size_t index_of(const std::string& name) const;
  bool has_block(const std::string& name) const;

  Eigen::Map<const Matrix> block(const std::string& name) const;
  Eigen::Map<Matrix> block(const std::string& name);
  Eigen::Map<const Matrix> block(std::size_t i) const;
  Eigen::Map<Matrix> block(std::size_t i);

  /// Same layout, all values zero.
  ParamVector zeros_like() const;
  bool same_layout(const ParamVector& other) const;

  /// Throws NonFiniteError naming the first block holding a non-finite value.
  void check_finite() const;

 private:
  std::vector<Block> blocks_;
  Eigen::VectorXd values_;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
class Var {
 public:
  Var() = default;
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var constant(double value);
  /// Leaf whose gradient is reported by backward().
  Var leaf(Matrix value, std::string block);

  /// Block name attached to nodes created from now on (used in error reports).
  void set_scope(std::string scope) { scope_ = std::move(scope); }
  const std::string& scope() const { return scope_; }

  /// Reverse sweep from a 1x1 node. Returns gradients of all leaves, in leaf order.
  std::vector<Matrix> backward(const Var& root);

  std::size_t node_count() const { return nodes_.size(); }

  // Internal interface used by the primitive functions.
  using BackwardFn = std::function<void(Tape&, const Matrix& upstream)>;
  Var push(Matrix value, BackwardFn backward);
  const Matrix& value_of(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  void accumulate(int id, const Matrix& g);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    std::string scope;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
  std::vector<int> leaves_;
  std::string scope_ = "<root>";
};

// ---------------------------------------------------------------------------
// Primitives. Shapes must match exactly except where noted.

/// a + b. `b` may also be a 1xC row broadcast over the rows of `a`, or 1x1.
Var add(const Var& a, const Var& b);
/// Elementwise a * b. `b` may also be a 1xC row broadcast or 1x1.
Var mul(const Var& a, const Var& b);
Var exp(const Var& a);
/// Natural log; the forward pass rejects non-positive inputs as non-finite.
Var log(const Var& a);
Var tanh(const Var& a);
/// x * w + b with b a 1xC row broadcast over rows.
Var affine(const Var& x, const Var& w, const Var& b);
/// x * w (no bias).
Var affine(const Var& x, const Var& w);
/// Sum of all entries, 1x1.
Var sum(const Var& a);
/// Elementwise square.
Var square(const Var& a);

/// c * a for a constant c.
Var scale(const Var& a, double c);
/// a + c for a constant c.
Var shift(const Var& a, double c);
inline Var sub(const Var& a, const Var& b) { return add(a, scale(b, -1.0)); }

// ---------------------------------------------------------------------------

/// Binds each ParamVector block to a leaf on a tape.
class BoundParams {
 public:
  BoundParams(Tape& tape, const ParamVector& params);
  const Var& operator[](std::size_t i) const { return vars_[i]; }
  const Var& operator[](const std::string& name) const;

 private:
  const ParamVector* params_;
  std::vector<Var> vars_;
};

using LossFn = std::function<Var(Tape&, const BoundParams&)>;

struct ValueAndGrad {
  double loss;
  ParamVector gradient;
};

/// Loss value plus exact reverse-accumulated gradient.
ValueAndGrad value_and_grad(const LossFn& loss_fn, const ParamVector& params);
ParamVector grad(const LossFn& loss_fn, const ParamVector& params);
/// Forward pass only.
double evaluate(const LossFn& loss_fn, const ParamVector& params);

}  // namespace sketchteach
