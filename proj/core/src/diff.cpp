#include "cdsd/diff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

namespace cdsd::diff {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

MapC as_matrix(const Tensor& t) {
  return MapC(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

Map as_matrix(Tensor& t) {
  return Map(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

Expr make(Node n) { return Expr(std::make_shared<const Node>(std::move(n))); }

void require_rank2(const Expr& e, const char* what) {
  if (e.shape().size() != 2) {
    throw ShapeError(std::string(what) + " expects a rank-2 operand, got " + shape_string(e.shape()));
  }
}

Expr unary(Op op, const Expr& a) {
  Node n;
  n.op = op;
  n.shape = a.shape();
  n.children = {a};
  return make(std::move(n));
}

Expr binary_same_shape(Op op, const Expr& a, const Expr& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op_name(op)) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  Node n;
  n.op = op;
  n.shape = a.shape();
  n.children = {a, b};
  return make(std::move(n));
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Post-order over the DAG. parent[i] is the index of the node through which
// node i was first reached (root has none); used for error paths.
struct Order {
  std::vector<const Node*> nodes;
  std::vector<std::size_t> parent;
  std::unordered_map<const Node*, std::size_t> index;
};

constexpr std::size_t kNoParent = static_cast<std::size_t>(-1);

Order topo_order(const Expr& root) {
  if (!root) throw EvalError("evaluate: empty expression");
  Order order;
  std::unordered_map<const Node*, const Node*> first_parent;
  std::unordered_map<const Node*, bool> visited;
  struct Frame {
    const Node* node;
    std::size_t next_child;
  };
  std::vector<Frame> stack;
  stack.push_back({root.node(), 0});
  visited[root.node()] = true;
  first_parent[root.node()] = nullptr;
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_child < f.node->children.size()) {
      const Node* child = f.node->children[f.next_child++].node();
      if (!visited[child]) {
        visited[child] = true;
        first_parent[child] = f.node;
        stack.push_back({child, 0});
      }
      continue;
    }
    order.index[f.node] = order.nodes.size();
    order.nodes.push_back(f.node);
    stack.pop_back();
  }
  order.parent.resize(order.nodes.size(), kNoParent);
  for (std::size_t i = 0; i < order.nodes.size(); ++i) {
    const Node* p = first_parent[order.nodes[i]];
    if (p) order.parent[i] = order.index.at(p);
  }
  return order;
}

std::string node_label(const Node* n) {
  std::string s = op_name(n->op);
  if (n->op == Op::parameter) s += "('" + n->param_id + "')";
  return s;
}

std::string node_path(const Order& order, std::size_t i) {
  std::vector<std::string> parts;
  for (std::size_t cur = i; cur != kNoParent; cur = order.parent[cur]) {
    parts.push_back(node_label(order.nodes[cur]));
  }
  std::ostringstream os;
  for (std::size_t k = parts.size(); k-- > 0;) {
    os << parts[k];
    if (k) os << " > ";
  }
  return os.str();
}

void check_bindings_consistent(const Order& order) {
  std::unordered_map<std::string, const Node*> seen;
  for (const Node* n : order.nodes) {
    if (n->op != Op::parameter) continue;
    auto [it, inserted] = seen.emplace(n->param_id, n);
    if (!inserted && it->second->shape != n->shape) {
      throw EvalError("parameter '" + n->param_id + "' declared with two shapes " +
                      shape_string(it->second->shape) + " and " + shape_string(n->shape));
    }
  }
}

Tensor forward_node(const Node& n, const std::vector<Tensor>& values, const Order& order,
                    const Bindings& bindings) {
  auto in = [&](std::size_t k) -> const Tensor& { return values[order.index.at(n.children[k].node())]; };
  switch (n.op) {
    case Op::parameter: {
      auto it = bindings.find(n.param_id);
      if (it == bindings.end()) throw EvalError("unbound parameter '" + n.param_id + "'");
      if (it->second.shape() != n.shape) {
        throw ShapeError("parameter '" + n.param_id + "' bound with shape " + shape_string(it->second.shape()) +
                         ", expected " + shape_string(n.shape));
      }
      return it->second;
    }
    case Op::constant:
      return *n.value;
    case Op::add:
    case Op::sub:
    case Op::mul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      Tensor out(n.shape);
      const double* pa = a.data().data();
      const double* pb = b.data().data();
      double* po = out.data().data();
      const std::size_t sz = out.size();
      if (n.op == Op::add)
        for (std::size_t i = 0; i < sz; ++i) po[i] = pa[i] + pb[i];
      else if (n.op == Op::sub)
        for (std::size_t i = 0; i < sz; ++i) po[i] = pa[i] - pb[i];
      else
        for (std::size_t i = 0; i < sz; ++i) po[i] = pa[i] * pb[i];
      return out;
    }
    case Op::matmul: {
      Tensor out(n.shape);
      as_matrix(out).noalias() = as_matrix(in(0)) * as_matrix(in(1));
      return out;
    }
    case Op::transpose: {
      Tensor out(n.shape);
      as_matrix(out) = as_matrix(in(0)).transpose();
      return out;
    }
    case Op::sum:
    case Op::mean: {
      const Tensor& a = in(0);
      double s = 0.0;
      for (double v : a.data()) s += v;
      if (n.op == Op::mean) s /= static_cast<double>(a.size());
      return Tensor::scalar(s);
    }
    case Op::square:
    case Op::exp:
    case Op::log:
    case Op::sigmoid:
    case Op::leaky_relu: {
      const Tensor& a = in(0);
      Tensor out(n.shape);
      const double* pa = a.data().data();
      double* po = out.data().data();
      const std::size_t sz = out.size();
      switch (n.op) {
        case Op::square:
          for (std::size_t i = 0; i < sz; ++i) po[i] = pa[i] * pa[i];
          break;
        case Op::exp:
          for (std::size_t i = 0; i < sz; ++i) po[i] = std::exp(pa[i]);
          break;
        case Op::log:
          for (std::size_t i = 0; i < sz; ++i) po[i] = std::log(pa[i]);
          break;
        case Op::sigmoid:
          for (std::size_t i = 0; i < sz; ++i) po[i] = sigmoid_scalar(pa[i]);
          break;
        default:
          for (std::size_t i = 0; i < sz; ++i) po[i] = pa[i] > 0.0 ? pa[i] : kLeakySlope * pa[i];
          break;
      }
      return out;
    }
    case Op::concat: {
      Tensor out(n.shape);
      if (n.axis == 0) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < n.children.size(); ++k) {
          const Tensor& part = in(k);
          std::copy(part.data().begin(), part.data().end(), out.data().begin() + offset);
          offset += part.size();
        }
      } else {
        const std::size_t rows = n.shape[0];
        const std::size_t cols = n.shape[1];
        std::size_t col_offset = 0;
        for (std::size_t k = 0; k < n.children.size(); ++k) {
          const Tensor& part = in(k);
          const std::size_t pc = part.cols();
          for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(part.data().data() + r * pc, pc, out.data().data() + r * cols + col_offset);
          }
          col_offset += pc;
        }
      }
      return out;
    }
    case Op::slice: {
      const Tensor& a = in(0);
      Tensor out(n.shape);
      if (n.axis == 0) {
        std::copy_n(a.data().data() + n.begin * a.cols(), out.size(), out.data().data());
      } else {
        const std::size_t w = n.end - n.begin;
        for (std::size_t r = 0; r < a.rows(); ++r) {
          std::copy_n(a.data().data() + r * a.cols() + n.begin, w, out.data().data() + r * w);
        }
      }
      return out;
    }
    case Op::broadcast: {
      const Tensor& a = in(0);
      Tensor out(n.shape);
      if (a.rank() == 0) {
        std::fill(out.data().begin(), out.data().end(), a[0]);
        return out;
      }
      const std::size_t rows = n.shape[0], cols = n.shape[1];
      const bool rep_r = a.rows() == 1, rep_c = a.cols() == 1;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
          out.at(r, c) = a.at(rep_r ? 0 : r, rep_c ? 0 : c);
      return out;
    }
    case Op::embed_lookup: {
      const Tensor& table = in(0);
      Tensor out(n.shape);
      const std::size_t w = table.cols();
      for (std::size_t r = 0; r < n.indices.size(); ++r) {
        std::copy_n(table.data().data() + n.indices[r] * w, w, out.data().data() + r * w);
      }
      return out;
    }
    case Op::reshape:
      return Tensor(n.shape, in(0).storage());
    case Op::stop_gradient:
      return in(0);
  }
  throw EvalError("unknown op");
}

struct Forward {
  Order order;
  std::vector<Tensor> values;
};

Forward run_forward(const Expr& root, const Bindings& bindings) {
  Forward fw{topo_order(root), {}};
  check_bindings_consistent(fw.order);
  fw.values.resize(fw.order.nodes.size());
  for (std::size_t i = 0; i < fw.order.nodes.size(); ++i) {
    fw.values[i] = forward_node(*fw.order.nodes[i], fw.values, fw.order, bindings);
    const auto vals = fw.values[i].data();
    if (!Eigen::Map<const Eigen::ArrayXd>(vals.data(), static_cast<Eigen::Index>(vals.size())).allFinite()) {
      throw EvalError("non-finite value at " + node_path(fw.order, i));
    }
  }
  return fw;
}

void accumulate(Tensor& slot, const Shape& shape, const Tensor& g) {
  if (slot.size() == 0 && shape_size(shape) > 0) {
    slot = g;
    return;
  }
  double* ps = slot.data().data();
  const double* pg = g.data().data();
  for (std::size_t i = 0; i < slot.size(); ++i) ps[i] += pg[i];
}

// Adds the contribution of `n`'s adjoint `g` to the adjoints of its children.
void backward_node(const Node& n, std::size_t self, const Tensor& g, const Forward& fw,
                   const std::vector<char>& needs, std::vector<Tensor>& adj) {
  auto idx = [&](std::size_t k) { return fw.order.index.at(n.children[k].node()); };
  auto val = [&](std::size_t k) -> const Tensor& { return fw.values[idx(k)]; };
  auto want = [&](std::size_t k) { return needs[idx(k)] != 0; };
  auto push = [&](std::size_t k, const Tensor& t) { accumulate(adj[idx(k)], n.children[k].shape(), t); };

  switch (n.op) {
    case Op::parameter:
    case Op::constant:
    case Op::stop_gradient:
      return;
    case Op::add:
      if (want(0)) push(0, g);
      if (want(1)) push(1, g);
      return;
    case Op::sub:
      if (want(0)) push(0, g);
      if (want(1)) {
        Tensor t = g;
        for (double& v : t.data()) v = -v;
        push(1, t);
      }
      return;
    case Op::mul: {
      for (std::size_t k = 0; k < 2; ++k) {
        if (!want(k)) continue;
        const Tensor& other = val(1 - k);
        Tensor t(g.shape());
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = g[i] * other[i];
        push(k, t);
      }
      return;
    }
    case Op::matmul: {
      if (want(0)) {
        Tensor t(n.children[0].shape());
        as_matrix(t).noalias() = as_matrix(g) * as_matrix(val(1)).transpose();
        push(0, t);
      }
      if (want(1)) {
        Tensor t(n.children[1].shape());
        as_matrix(t).noalias() = as_matrix(val(0)).transpose() * as_matrix(g);
        push(1, t);
      }
      return;
    }
    case Op::transpose: {
      Tensor t(n.children[0].shape());
      as_matrix(t) = as_matrix(g).transpose();
      push(0, t);
      return;
    }
    case Op::reshape:
      push(0, Tensor(n.children[0].shape(), g.storage()));
      return;
    case Op::sum:
    case Op::mean: {
      const Shape& cs = n.children[0].shape();
      double v = g[0];
      if (n.op == Op::mean) v /= static_cast<double>(shape_size(cs));
      push(0, Tensor(cs, v));
      return;
    }
    case Op::square:
    case Op::exp:
    case Op::log:
    case Op::sigmoid:
    case Op::leaky_relu: {
      const Tensor& a = val(0);
      const Tensor& out = fw.values[self];
      Tensor t(g.shape());
      const std::size_t sz = t.size();
      switch (n.op) {
        case Op::square:
          for (std::size_t i = 0; i < sz; ++i) t[i] = 2.0 * a[i] * g[i];
          break;
        case Op::exp:
          for (std::size_t i = 0; i < sz; ++i) t[i] = out[i] * g[i];
          break;
        case Op::log:
          for (std::size_t i = 0; i < sz; ++i) t[i] = g[i] / a[i];
          break;
        case Op::sigmoid:
          for (std::size_t i = 0; i < sz; ++i) t[i] = out[i] * (1.0 - out[i]) * g[i];
          break;
        default:
          for (std::size_t i = 0; i < sz; ++i) t[i] = a[i] > 0.0 ? g[i] : kLeakySlope * g[i];
          break;
      }
      push(0, t);
      return;
    }
    case Op::concat: {
      if (n.axis == 0) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < n.children.size(); ++k) {
          const Shape& cs = n.children[k].shape();
          const std::size_t sz = shape_size(cs);
          if (want(k)) {
            Tensor t(cs, std::vector<double>(g.data().begin() + offset, g.data().begin() + offset + sz));
            push(k, t);
          }
          offset += sz;
        }
      } else {
        const std::size_t rows = n.shape[0], cols = n.shape[1];
        std::size_t col_offset = 0;
        for (std::size_t k = 0; k < n.children.size(); ++k) {
          const Shape& cs = n.children[k].shape();
          const std::size_t pc = cs[1];
          if (want(k)) {
            Tensor t(cs);
            for (std::size_t r = 0; r < rows; ++r) {
              std::copy_n(g.data().data() + r * cols + col_offset, pc, t.data().data() + r * pc);
            }
            push(k, t);
          }
          col_offset += pc;
        }
      }
      return;
    }
    case Op::slice: {
      const Shape& cs = n.children[0].shape();
      Tensor t(cs);
      if (n.axis == 0) {
        std::copy_n(g.data().data(), g.size(), t.data().data() + n.begin * cs[1]);
      } else {
        const std::size_t w = n.end - n.begin;
        for (std::size_t r = 0; r < cs[0]; ++r) {
          std::copy_n(g.data().data() + r * w, w, t.data().data() + r * cs[1] + n.begin);
        }
      }
      push(0, t);
      return;
    }
    case Op::broadcast: {
      const Shape& cs = n.children[0].shape();
      Tensor t(cs);
      if (cs.empty()) {
        double s = 0.0;
        for (double v : g.data()) s += v;
        t[0] = s;
      } else {
        const bool rep_r = cs[0] == 1, rep_c = cs[1] == 1;
        for (std::size_t r = 0; r < n.shape[0]; ++r)
          for (std::size_t c = 0; c < n.shape[1]; ++c)
            t.at(rep_r ? 0 : r, rep_c ? 0 : c) += g.at(r, c);
      }
      push(0, t);
      return;
    }
    case Op::embed_lookup: {
      const Shape& cs = n.children[0].shape();
      Tensor t(cs);
      const std::size_t w = cs[1];
      for (std::size_t r = 0; r < n.indices.size(); ++r) {
        double* dst = t.data().data() + n.indices[r] * w;
        const double* src = g.data().data() + r * w;
        for (std::size_t c = 0; c < w; ++c) dst[c] += src[c];
      }
      push(0, t);
      return;
    }
  }
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::parameter: return "parameter";
    case Op::constant: return "constant";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::matmul: return "matmul";
    case Op::transpose: return "transpose";
    case Op::reshape: return "reshape";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::square: return "square";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::sigmoid: return "sigmoid";
    case Op::leaky_relu: return "leaky_relu";
    case Op::concat: return "concat";
    case Op::slice: return "slice";
    case Op::broadcast: return "broadcast";
    case Op::embed_lookup: return "embed_lookup";
    case Op::stop_gradient: return "stop_gradient";
  }
  return "?";
}

const Shape& Expr::shape() const {
  if (!node_) throw EvalError("empty expression");
  return node_->shape;
}

Op Expr::op() const {
  if (!node_) throw EvalError("empty expression");
  return node_->op;
}

Expr param(std::string id, Shape shape) {
  if (id.empty()) throw std::invalid_argument("parameter id must be non-empty");
  Node n;
  n.op = Op::parameter;
  n.shape = std::move(shape);
  n.param_id = std::move(id);
  return make(std::move(n));
}

Expr constant(Tensor value) {
  Node n;
  n.op = Op::constant;
  n.shape = value.shape();
  n.value = std::make_shared<const Tensor>(std::move(value));
  return make(std::move(n));
}

Expr constant(double value) { return constant(Tensor::scalar(value)); }

Expr add(const Expr& a, const Expr& b) { return binary_same_shape(Op::add, a, b); }
Expr sub(const Expr& a, const Expr& b) { return binary_same_shape(Op::sub, a, b); }
Expr mul(const Expr& a, const Expr& b) { return binary_same_shape(Op::mul, a, b); }

Expr matmul(const Expr& a, const Expr& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul: inner dimensions differ " + shape_string(a.shape()) + " * " + shape_string(b.shape()));
  }
  Node n;
  n.op = Op::matmul;
  n.shape = {a.shape()[0], b.shape()[1]};
  n.children = {a, b};
  return make(std::move(n));
}

Expr transpose(const Expr& a) {
  require_rank2(a, "transpose");
  Node n;
  n.op = Op::transpose;
  n.shape = {a.shape()[1], a.shape()[0]};
  n.children = {a};
  return make(std::move(n));
}

Expr reshape(const Expr& a, Shape shape) {
  if (shape_size(shape) != shape_size(a.shape())) {
    throw ShapeError("reshape " + shape_string(a.shape()) + " to " + shape_string(shape));
  }
  if (shape == a.shape()) return a;
  Node n;
  n.op = Op::reshape;
  n.shape = std::move(shape);
  n.children = {a};
  return make(std::move(n));
}

Expr sum(const Expr& a) {
  Node n;
  n.op = Op::sum;
  n.children = {a};
  return make(std::move(n));
}

Expr mean(const Expr& a) {
  if (shape_size(a.shape()) == 0) throw ShapeError("mean of empty tensor");
  Node n;
  n.op = Op::mean;
  n.children = {a};
  return make(std::move(n));
}

Expr square(const Expr& a) { return unary(Op::square, a); }
Expr exp(const Expr& a) { return unary(Op::exp, a); }
Expr log(const Expr& a) { return unary(Op::log, a); }
Expr sigmoid(const Expr& a) { return unary(Op::sigmoid, a); }
Expr leaky_relu(const Expr& a) { return unary(Op::leaky_relu, a); }
Expr stop_gradient(const Expr& a) { return unary(Op::stop_gradient, a); }

Expr concat(const std::vector<Expr>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of no operands");
  if (axis > 1) throw ShapeError("concat axis must be 0 or 1");
  if (parts.size() == 1) return parts.front();
  Shape shape = parts.front().shape();
  require_rank2(parts.front(), "concat");
  const std::size_t other = 1 - axis;
  for (std::size_t k = 1; k < parts.size(); ++k) {
    require_rank2(parts[k], "concat");
    if (parts[k].shape()[other] != shape[other]) {
      throw ShapeError("concat: operand " + std::to_string(k) + " has shape " + shape_string(parts[k].shape()) +
                       ", incompatible with " + shape_string(shape));
    }
    shape[axis] += parts[k].shape()[axis];
  }
  Node n;
  n.op = Op::concat;
  n.shape = shape;
  n.children = parts;
  n.axis = axis;
  return make(std::move(n));
}

Expr slice(const Expr& a, std::size_t axis, std::size_t begin, std::size_t end) {
  require_rank2(a, "slice");
  if (axis > 1 || begin >= end || end > a.shape()[axis]) {
    throw ShapeError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                     std::to_string(axis) + " out of range for " + shape_string(a.shape()));
  }
  Node n;
  n.op = Op::slice;
  n.shape = a.shape();
  n.shape[axis] = end - begin;
  n.children = {a};
  n.axis = axis;
  n.begin = begin;
  n.end = end;
  return make(std::move(n));
}

Expr broadcast(const Expr& a, Shape shape) {
  const Shape& s = a.shape();
  if (s == shape) return a;
  const bool ok = s.empty() || (s.size() == 2 && shape.size() == 2 && (s[0] == 1 || s[0] == shape[0]) &&
                                (s[1] == 1 || s[1] == shape[1]));
  if (!ok) throw ShapeError("cannot broadcast " + shape_string(s) + " to " + shape_string(shape));
  Node n;
  n.op = Op::broadcast;
  n.shape = std::move(shape);
  n.children = {a};
  return make(std::move(n));
}

Expr embed_lookup(const Expr& table, std::vector<std::size_t> indices) {
  require_rank2(table, "embed_lookup");
  for (std::size_t i : indices) {
    if (i >= table.shape()[0]) throw ShapeError("embed_lookup index " + std::to_string(i) + " out of range");
  }
  Node n;
  n.op = Op::embed_lookup;
  n.shape = {indices.size(), table.shape()[1]};
  n.children = {table};
  n.indices = std::move(indices);
  return make(std::move(n));
}

Expr scale(const Expr& a, double factor) { return mul(a, broadcast(constant(factor), a.shape())); }
Expr add_scalar(const Expr& a, double offset) { return add(a, broadcast(constant(offset), a.shape())); }
Expr neg(const Expr& a) { return scale(a, -1.0); }

Tensor evaluate(const Expr& root, const Bindings& bindings) {
  Forward fw = run_forward(root, bindings);
  return std::move(fw.values.back());
}

ValueAndGradient value_and_gradient(const Expr& root, const Bindings& bindings,
                                    const std::set<std::string>& wrt) {
  if (!root.shape().empty()) {
    throw EvalError("gradient requires a scalar root, got " + shape_string(root.shape()));
  }
  for (const auto& id : wrt) {
    if (!bindings.contains(id)) throw EvalError("gradient w.r.t. unbound parameter '" + id + "'");
  }
  Forward fw = run_forward(root, bindings);
  const std::size_t count = fw.order.nodes.size();

  std::vector<char> needs(count, 0);
  for (std::size_t i = 0; i < count; ++i) {
    const Node* n = fw.order.nodes[i];
    if (n->op == Op::parameter) {
      needs[i] = wrt.contains(n->param_id);
    } else if (n->op != Op::constant && n->op != Op::stop_gradient) {
      for (const Expr& c : n->children) needs[i] |= needs[fw.order.index.at(c.node())];
    }
  }

  std::vector<Tensor> adj(count);
  adj[count - 1] = Tensor::scalar(1.0);
  for (std::size_t i = count; i-- > 0;) {
    if (!needs[i] || adj[i].size() == 0) continue;
    backward_node(*fw.order.nodes[i], i, adj[i], fw, needs, adj);
  }

  ValueAndGradient out;
  out.value = fw.values.back()[0];
  for (const auto& id : wrt) out.grads[id] = Tensor(bindings.at(id).shape(), 0.0);
  for (std::size_t i = 0; i < count; ++i) {
    const Node* n = fw.order.nodes[i];
    if (n->op == Op::parameter && needs[i] && adj[i].size() > 0) {
      accumulate(out.grads[n->param_id], n->shape, adj[i]);
    }
  }
  return out;
}

Gradients gradient(const Expr& root, const Bindings& bindings, const std::set<std::string>& wrt) {
  return value_and_gradient(root, bindings, wrt).grads;
}

double finite_difference_check(const Expr& root, const Bindings& bindings, const Gradients& analytic,
                               double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_difference_check: step must be positive");
  Bindings probe = bindings;
  double worst = 0.0;
  for (const auto& [id, grad] : analytic) {
    Tensor& x = probe.at(id);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double saved = x[i];
      x[i] = saved + step;
      const double up = evaluate(root, probe).item();
      x[i] = saved - step;
      const double down = evaluate(root, probe).item();
      x[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double err = std::abs(grad[i] - numeric) / std::max(1.0, std::abs(grad[i]));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

double finite_difference_check(const Expr& root, const Bindings& bindings, const std::set<std::string>& wrt,
                               double step) {
  return finite_difference_check(root, bindings, gradient(root, bindings, wrt), step);
}

std::map<std::string, Shape> collect_parameters(const Expr& root) {
  std::map<std::string, Shape> out;
  Order order = topo_order(root);
  for (const Node* n : order.nodes) {
    if (n->op == Op::parameter) out.emplace(n->param_id, n->shape);
  }
  return out;
}

}  // namespace cdsd::diff
