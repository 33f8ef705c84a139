#pragma once

// Reverse-mode differentiation over small dense expression graphs.
//
// An Expr is an immutable DAG. Leaves are either named parameters (bound at
// call time) or constants. evaluate() and gradient() keep all intermediate
// state local to the call, so one Expr can be shared across threads.

#include <cstddef>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdsd/tensor.hpp"

namespace cdsd::diff {

enum class Op {
  parameter,
  constant,
  add,
  sub,
  mul,
  matmul,
  transpose,
  reshape,
  sum,
  mean,
  square,
  exp,
  log,
  sigmoid,
  leaky_relu,
  concat,
  slice,
  broadcast,
  embed_lookup,
  stop_gradient,
};

const char* op_name(Op op);

/// Slope of leaky-ReLU on the non-positive side (also used at exactly 0).
inline constexpr double kLeakySlope = 0.01;

struct Node;

class Expr {
 public:
  Expr() = default;
  explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

  const Shape& shape() const;
  Op op() const;
  const Node* node() const { return node_.get(); }
  const std::shared_ptr<const Node>& ptr() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<const Node> node_;
};

struct Node {
  Op op = Op::constant;
  Shape shape;
  std::vector<Expr> children;
  std::string param_id;                    // parameter
  std::shared_ptr<const Tensor> value;     // constant
  std::size_t axis = 0;                    // concat, slice
  std::size_t begin = 0, end = 0;          // slice
  std::vector<std::size_t> indices;        // embed_lookup
};

// ---- construction --------------------------------------------------------

Expr param(std::string id, Shape shape);
Expr constant(Tensor value);
Expr constant(double value);

Expr add(const Expr& a, const Expr& b);
Expr sub(const Expr& a, const Expr& b);
Expr mul(const Expr& a, const Expr& b);
Expr matmul(const Expr& a, const Expr& b);
Expr transpose(const Expr& a);
/// Row-major reinterpretation; element count must match.
Expr reshape(const Expr& a, Shape shape);
Expr sum(const Expr& a);
Expr mean(const Expr& a);
Expr square(const Expr& a);
Expr exp(const Expr& a);
Expr log(const Expr& a);
Expr sigmoid(const Expr& a);
Expr leaky_relu(const Expr& a);
/// Concatenate rank-2 operands along axis 0 (rows) or 1 (columns).
Expr concat(const std::vector<Expr>& parts, std::size_t axis);
/// Half-open range [begin, end) along `axis` of a rank-2 operand.
Expr slice(const Expr& a, std::size_t axis, std::size_t begin, std::size_t end);
/// Repeat size-1 dimensions (or a scalar) up to `shape`.
Expr broadcast(const Expr& a, Shape shape);
/// Gather rows of a rank-2 table.
Expr embed_lookup(const Expr& table, std::vector<std::size_t> indices);
Expr stop_gradient(const Expr& a);

// Sugar. None of these add node kinds.
Expr scale(const Expr& a, double factor);
Expr add_scalar(const Expr& a, double offset);
Expr neg(const Expr& a);

inline Expr operator+(const Expr& a, const Expr& b) { return add(a, b); }
inline Expr operator-(const Expr& a, const Expr& b) { return sub(a, b); }
inline Expr operator*(const Expr& a, const Expr& b) { return mul(a, b); }
inline Expr operator-(const Expr& a) { return neg(a); }

// ---- evaluation -----------------------------------------------------------

using Bindings = std::map<std::string, Tensor>;
using Gradients = std::map<std::string, Tensor>;

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Tensor evaluate(const Expr& root, const Bindings& bindings);

struct ValueAndGradient {
  double value = 0.0;
  Gradients grads;
};

/// Scalar root only. Parameters listed in `wrt` but not reachable from the
/// root receive zero gradients.
ValueAndGradient value_and_gradient(const Expr& root, const Bindings& bindings,
                                    const std::set<std::string>& wrt);

Gradients gradient(const Expr& root, const Bindings& bindings,
                   const std::set<std::string>& wrt);

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
double finite_difference_check(const Expr& root, const Bindings& bindings,
                               const std::set<std::string>& wrt, double step);

/// Same comparison against caller-supplied analytic gradients.
double finite_difference_check(const Expr& root, const Bindings& bindings,
                               const Gradients& analytic, double step);

/// Every parameter id reachable from `root`, with its declared shape.
std::map<std::string, Shape> collect_parameters(const Expr& root);

}  // namespace cdsd::diff
