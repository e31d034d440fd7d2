#include "sketchteach/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace sketchteach {

// ---------------------------------------------------------------------------
// ParamVector

void ParamVector::add_block(const std::string& name, const Matrix& init) {
  if (has_block(name)) throw std::invalid_argument("ParamVector: duplicate block '" + name + "'");
  const Eigen::Index offset = values_.size();
  blocks_.push_back(Block{name, offset, init.rows(), init.cols()});
  values_.conservativeResize(offset + init.size());
  values_.segment(offset, init.size()) = Eigen::Map<const Eigen::VectorXd>(init.data(), init.size());
}

std::size_t ParamVector::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    if (blocks_[i].name == name) return i;
  throw std::out_of_range("ParamVector: no block named '" + name + "'");
}

bool ParamVector::has_block(const std::string& name) const {
  return std::any_of(blocks_.begin(), blocks_.end(), [&](const Block& b) { return b.name == name; });
}

Eigen::Map<const Matrix> ParamVector::block(std::size_t i) const {
  const Block& b = blocks_.at(i);
  return {values_.data() + b.offset, b.rows, b.cols};
}

Eigen::Map<Matrix> ParamVector::block(std::size_t i) {
  const Block& b = blocks_.at(i);
  return {values_.data() + b.offset, b.rows, b.cols};
}

Eigen::Map<const Matrix> ParamVector::block(const std::string& name) const { return block(index_of(name)); }
Eigen::Map<Matrix> ParamVector::block(const std::string& name) { return block(index_of(name)); }

ParamVector ParamVector::zeros_like() const {
  ParamVector out = *this;
  out.values_.setZero();
  return out;
}

bool ParamVector::same_layout(const ParamVector& other) const {
  if (blocks_.size() != other.blocks_.size() || values_.size() != other.values_.size()) return false;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const Block& a = blocks_[i];
    const Block& b = other.blocks_[i];
    if (a.name != b.name || a.offset != b.offset || a.rows != b.rows || a.cols != b.cols) return false;
  }
  return true;
}

void ParamVector::check_finite() const {
  for (const Block& b : blocks_)
    if (!values_.segment(b.offset, b.size()).allFinite()) throw NonFiniteError(b.name, "parameter value");
}

// ---------------------------------------------------------------------------
// Tape

const Matrix& Var::value() const {
  if (!tape_) throw std::logic_error("Var: unbound handle");
  return tape_->value_of(id_);
}

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw std::invalid_argument("Var::scalar: node is not 1x1");
  return v(0, 0);
}

Var Tape::constant(Matrix value) {
  if (!value.allFinite()) throw NonFiniteError(scope_, "constant input");
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, scope_, false});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

Var Tape::leaf(Matrix value, std::string block) {
  if (!value.allFinite()) throw NonFiniteError(block, "parameter value");
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, std::move(block), true});
  const int id = static_cast<int>(nodes_.size() - 1);
  leaves_.push_back(id);
  return Var(this, id);
}

Var Tape::push(Matrix value, BackwardFn backward) {
  if (!value.allFinite()) throw NonFiniteError(scope_, "forward pass");
  nodes_.push_back(Node{std::move(value), Matrix(), std::move(backward), scope_, true});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

void Tape::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0)
    n.grad = g;
  else
    n.grad += g;
}

std::vector<Matrix> Tape::backward(const Var& root) {
  if (root.tape() != this) throw std::invalid_argument("Tape::backward: foreign node");
  if (value_of(root.id()).size() != 1) throw std::invalid_argument("Tape::backward: root must be 1x1");
  for (Node& n : nodes_) n.grad.resize(0, 0);
  nodes_[static_cast<std::size_t>(root.id())].grad = Matrix::Ones(1, 1);
  for (int i = root.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.needs_grad || !n.backward || n.grad.size() == 0) continue;
    if (!n.grad.allFinite()) throw NonFiniteError(n.scope, "backward pass");
    // Move the gradient out so the closure may read it while we accumulate elsewhere.
    Matrix g = std::move(n.grad);
    n.backward(*this, g);
    n.grad = std::move(g);
  }
  std::vector<Matrix> out;
  out.reserve(leaves_.size());
  for (int id : leaves_) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) {
      out.push_back(Matrix::Zero(n.value.rows(), n.value.cols()));
    } else {
      if (!n.grad.allFinite()) throw NonFiniteError(n.scope, "gradient");
      out.push_back(n.grad);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Primitives

namespace {

enum class Broadcast { kNone, kRow, kScalar };

Broadcast broadcast_kind(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::kNone;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::kScalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

Matrix expand(const Matrix& b, Eigen::Index rows, Eigen::Index cols, Broadcast kind) {
  switch (kind) {
    case Broadcast::kNone:
      return b;
    case Broadcast::kRow:
      return b.replicate(rows, 1);
    case Broadcast::kScalar:
      return Matrix::Constant(rows, cols, b(0, 0));
  }
  return b;
}

Matrix reduce(const Matrix& g, Broadcast kind) {
  switch (kind) {
    case Broadcast::kNone:
      return g;
    case Broadcast::kRow:
      return g.colwise().sum();
    case Broadcast::kScalar:
      return Matrix::Constant(1, 1, g.sum());
  }
  return g;
}

Tape& same_tape(const Var& a, const Var& b) {
  if (!a.tape() || a.tape() != b.tape()) throw std::invalid_argument("autodiff: operands live on different tapes");
  return *a.tape();
}

}  // namespace

Var add(const Var& a, const Var& b) {
  Tape& tape = same_tape(a, b);
  const Broadcast kind = broadcast_kind(a.value(), b.value(), "add");
  const int ia = a.id(), ib = b.id();
  Matrix value = a.value() + expand(b.value(), a.rows(), a.cols(), kind);
  return tape.push(std::move(value), [ia, ib, kind](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, reduce(g, kind));
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& tape = same_tape(a, b);
  const Broadcast kind = broadcast_kind(a.value(), b.value(), "mul");
  const int ia = a.id(), ib = b.id();
  Matrix value = a.value().cwiseProduct(expand(b.value(), a.rows(), a.cols(), kind));
  return tape.push(std::move(value), [ia, ib, kind](Tape& t, const Matrix& g) {
    const Matrix& av = t.value_of(ia);
    const Matrix& bv = t.value_of(ib);
    t.accumulate(ia, g.cwiseProduct(expand(bv, av.rows(), av.cols(), kind)));
    t.accumulate(ib, reduce(g.cwiseProduct(av), kind));
  });
}

Var exp(const Var& a) {
  Tape& tape = *a.tape();
  const int ia = a.id();
  Matrix value = a.value().array().exp().matrix();
  const int out = static_cast<int>(tape.node_count());
  return tape.push(std::move(value), [ia, out](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.cwiseProduct(t.value_of(out)));
  });
}

Var log(const Var& a) {
  Tape& tape = *a.tape();
  const int ia = a.id();
  if ((a.value().array() <= 0.0).any()) throw NonFiniteError(tape.scope(), "log of non-positive value");
  Matrix value = a.value().array().log().matrix();
  return tape.push(std::move(value), [ia](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.cwiseQuotient(t.value_of(ia)));
  });
}

Var tanh(const Var& a) {
  Tape& tape = *a.tape();
  const int ia = a.id();
  Matrix value = a.value().array().tanh().matrix();
  const int out = static_cast<int>(tape.node_count());
  return tape.push(std::move(value), [ia, out](Tape& t, const Matrix& g) {
    const Matrix& y = t.value_of(out);
    t.accumulate(ia, (g.array() * (1.0 - y.array().square())).matrix());
  });
}

Var affine(const Var& x, const Var& w, const Var& b) {
  Tape& tape = same_tape(x, w);
  same_tape(x, b);
  if (x.cols() != w.rows()) throw std::invalid_argument("affine: inner dimensions differ");
  if (b.rows() != 1 || b.cols() != w.cols()) throw std::invalid_argument("affine: bias must be 1 x out");
  const int ix = x.id(), iw = w.id(), ib = b.id();
  Matrix value = x.value() * w.value();
  value.rowwise() += b.value().row(0);
  return tape.push(std::move(value), [ix, iw, ib](Tape& t, const Matrix& g) {
    t.accumulate(ix, g * t.value_of(iw).transpose());
    t.accumulate(iw, t.value_of(ix).transpose() * g);
    t.accumulate(ib, g.colwise().sum());
  });
}

Var affine(const Var& x, const Var& w) {
  Tape& tape = same_tape(x, w);
  if (x.cols() != w.rows()) throw std::invalid_argument("affine: inner dimensions differ");
  const int ix = x.id(), iw = w.id();
  Matrix value = x.value() * w.value();
  return tape.push(std::move(value), [ix, iw](Tape& t, const Matrix& g) {
    t.accumulate(ix, g * t.value_of(iw).transpose());
    t.accumulate(iw, t.value_of(ix).transpose() * g);
  });
}

Var sum(const Var& a) {
  Tape& tape = *a.tape();
  const int ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  return tape.push(Matrix::Constant(1, 1, a.value().sum()),
                   [ia, r, c](Tape& t, const Matrix& g) { t.accumulate(ia, Matrix::Constant(r, c, g(0, 0))); });
}

Var square(const Var& a) {
  Tape& tape = *a.tape();
  const int ia = a.id();
  Matrix value = a.value().array().square().matrix();
  return tape.push(std::move(value), [ia](Tape& t, const Matrix& g) {
    t.accumulate(ia, 2.0 * g.cwiseProduct(t.value_of(ia)));
  });
}

Var scale(const Var& a, double c) {
  Tape& tape = *a.tape();
  const int ia = a.id();
  return tape.push(a.value() * c, [ia, c](Tape& t, const Matrix& g) { t.accumulate(ia, g * c); });
}

Var shift(const Var& a, double c) {
  Tape& tape = *a.tape();
  const int ia = a.id();
  Matrix value = (a.value().array() + c).matrix();
  return tape.push(std::move(value), [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g); });
}

// ---------------------------------------------------------------------------

BoundParams::BoundParams(Tape& tape, const ParamVector& params) : params_(&params) {
  vars_.reserve(params.blocks().size());
  for (std::size_t i = 0; i < params.blocks().size(); ++i)
    vars_.push_back(tape.leaf(Matrix(params.block(i)), params.blocks()[i].name));
}

const Var& BoundParams::operator[](const std::string& name) const { return vars_[params_->index_of(name)]; }

ValueAndGrad value_and_grad(const LossFn& loss_fn, const ParamVector& params) {
  Tape tape;
  BoundParams bound(tape, params);
  const Var loss = loss_fn(tape, bound);
  const double value = loss.scalar();
  const std::vector<Matrix> grads = tape.backward(loss);
  ParamVector g = params.zeros_like();
  for (std::size_t i = 0; i < grads.size(); ++i) g.block(i) = grads[i];
  return {value, std::move(g)};
}

ParamVector grad(const LossFn& loss_fn, const ParamVector& params) {
  return value_and_grad(loss_fn, params).gradient;
}

double evaluate(const LossFn& loss_fn, const ParamVector& params) {
  Tape tape;
  BoundParams bound(tape, params);
  return loss_fn(tape, bound).scalar();
}

}  // namespace sketchteach
