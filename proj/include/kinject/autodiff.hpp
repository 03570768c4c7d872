#pragma once

// Reverse-mode differentiation over dense double matrices.
//
// Every primitive records its backward rule as ordinary tape operations, so
// the gradients returned by Tape::grad are themselves differentiable. Taking
// a gradient of a scalar built from another gradient (the input-gradient
// penalty used during training) is therefore a second call to grad.
//
// A Tape is single threaded. Build one per minibatch and throw it away.

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kinject/error.hpp"

namespace kinject::ad {

using Matrix = Eigen::MatrixXd;
using Bindings = std::map<std::string, Matrix>;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid as long as its tape.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  std::size_t id() const { return id_; }
  Tape& tape() const { return *tape_; }

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double scalar() const;
  /// The k-th parent of this node.
  Var input(std::size_t k) const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

using ForwardFn = std::function<Matrix(const std::vector<const Matrix*>&)>;
/// Returns one adjoint per parent; entries whose `needs` flag is false may be
/// left invalid.
using BackwardFn = std::function<std::vector<Var>(
    const Var& self, const Var& grad, const std::vector<bool>& needs)>;
/// Plain-matrix vector-Jacobian product for primitives without a
/// differentiable backward rule.
using VjpFn = std::function<std::vector<Matrix>(
    const std::vector<const Matrix*>& inputs, const Matrix& output,
    const Matrix& grad)>;

enum class NodeKind { constant, variable, op };

struct Node {
  std::string op;
  NodeKind kind = NodeKind::op;
  std::string name;
  std::vector<std::size_t> parents;
  Matrix value;
  ForwardFn forward;
  BackwardFn backward;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value) {
    check_finite(value, nodes_.size(), "constant");
    Node n;
    n.op = "constant";
    n.kind = NodeKind::constant;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  Var constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

  /// A differentiable leaf. Unnamed leaves are named "v<id>".
  Var variable(Matrix value, std::string name = {}) {
    check_finite(value, nodes_.size(), "variable");
    Node n;
    n.op = "variable";
    n.kind = NodeKind::variable;
    n.name = name.empty() ? "v" + std::to_string(nodes_.size()) : std::move(name);
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  /// Records a primitive. The forward function is evaluated immediately.
  Var apply(std::string op, const std::vector<Var>& inputs, ForwardFn forward,
            BackwardFn backward) {
    Node n;
    n.op = std::move(op);
    n.parents.reserve(inputs.size());
    std::vector<const Matrix*> args;
    args.reserve(inputs.size());
    for (const Var& v : inputs) {
      if (!v.valid() || &v.tape() != this)
        throw ContractError("operand of '" + n.op + "' belongs to another tape");
      n.parents.push_back(v.id());
      args.push_back(&nodes_[v.id()].value);
    }
    n.value = forward(args);
    check_finite(n.value, nodes_.size(), n.op);
    n.forward = std::move(forward);
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  /// Records a primitive whose backward rule is only available as plain
  /// matrices. First-order gradients through it work; differentiating those
  /// gradients again raises CapabilityError naming the primitive.
  Var apply_first_order(const std::string& op, const std::vector<Var>& inputs,
                        ForwardFn forward, VjpFn vjp) {
    BackwardFn backward = [op, vjp](const Var& self, const Var& grad,
                                    const std::vector<bool>& needs) {
      Tape& t = self.tape();
      const Node& node = t.node(self.id());
      std::vector<Var> deps;
      for (std::size_t p : node.parents) deps.push_back(Var(&t, p));
      deps.push_back(self);
      deps.push_back(grad);
      const std::size_t arity = node.parents.size();
      std::vector<Var> out(arity);
      for (std::size_t k = 0; k < arity; ++k) {
        if (!needs[k]) continue;
        out[k] = t.apply(
            op + "'", deps,
            [vjp, k, arity](const std::vector<const Matrix*>& v) {
              std::vector<const Matrix*> in(v.begin(), v.begin() + arity);
              return vjp(in, *v[arity], *v[arity + 1])[k];
            },
            [op](const Var&, const Var&, const std::vector<bool>&)
                -> std::vector<Var> { throw CapabilityError(op); });
      }
      return out;
    };
    return apply(op, inputs, std::move(forward), std::move(backward));
  }

  const Node& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }

  /// Differentiable reverse sweep. Returns d(root)/d(w) for each w in `wrt`
  /// as tape nodes; leaves that do not influence root get zeros.
  std::vector<Var> grad(const Var& root, std::span<const Var> wrt) {
    if (!root.valid() || &root.tape() != this)
      throw ContractError("grad: root belongs to another tape");
    if (root.rows() != 1 || root.cols() != 1)
      throw ContractError("grad: root must be a scalar, got " +
                          std::to_string(root.rows()) + "x" +
                          std::to_string(root.cols()));
    const std::size_t top = root.id();

    std::vector<char> live(top + 1, 0);
    live[top] = 1;
    for (std::size_t id = top + 1; id-- > 0;) {
      if (!live[id]) continue;
      for (std::size_t p : nodes_[id].parents) live[p] = 1;
    }

    std::vector<char> reaches(top + 1, 0);
    for (const Var& w : wrt) {
      if (!w.valid() || &w.tape() != this)
        throw ContractError("grad: wrt leaf belongs to another tape");
      if (w.id() <= top) reaches[w.id()] = 1;
    }
    for (std::size_t id = 0; id <= top; ++id) {
      if (reaches[id]) continue;
      for (std::size_t p : nodes_[id].parents)
        if (reaches[p]) {
          reaches[id] = 1;
          break;
        }
    }

    std::vector<Var> adjoint(top + 1);
    if (reaches[top]) adjoint[top] = constant(1.0);
    for (std::size_t id = top + 1; id-- > 0;) {
      if (!live[id] || !reaches[id] || !adjoint[id].valid()) continue;
      const std::vector<std::size_t> parents = nodes_[id].parents;
      if (parents.empty()) continue;
      std::vector<bool> needs(parents.size());
      for (std::size_t k = 0; k < parents.size(); ++k)
        needs[k] = reaches[parents[k]] != 0;
      std::vector<Var> partial =
          nodes_[id].backward(Var(this, id), adjoint[id], needs);
      for (std::size_t k = 0; k < parents.size(); ++k) {
        if (!needs[k] || !partial[k].valid()) continue;
        Var& slot = adjoint[parents[k]];
        slot = slot.valid() ? accumulate(slot, partial[k]) : partial[k];
      }
    }

    std::vector<Var> out;
    out.reserve(wrt.size());
    for (const Var& w : wrt) {
      if (w.id() <= top && adjoint[w.id()].valid())
        out.push_back(adjoint[w.id()]);
      else
        out.push_back(constant(Matrix::Zero(w.rows(), w.cols())));
    }
    return out;
  }

  std::vector<Var> grad(const Var& root, std::initializer_list<Var> wrt) {
    return grad(root, std::span<const Var>(wrt.begin(), wrt.size()));
  }

  /// Replays the recorded graph up to `root` with new leaf values. Every
  /// variable leaf must be bound by name; the tape itself is not modified.
  Matrix evaluate(const Var& root, const Bindings& bindings) const {
    if (!root.valid() || &root.tape() != this)
      throw ContractError("evaluate: root belongs to another tape");
    const std::size_t top = root.id();
    std::vector<char> live(top + 1, 0);
    live[top] = 1;
    for (std::size_t id = top + 1; id-- > 0;) {
      if (!live[id]) continue;
      for (std::size_t p : nodes_[id].parents) live[p] = 1;
    }
    std::vector<Matrix> values(top + 1);
    for (std::size_t id = 0; id <= top; ++id) {
      if (!live[id]) continue;
      const Node& n = nodes_[id];
      switch (n.kind) {
        case NodeKind::constant:
          values[id] = n.value;
          break;
        case NodeKind::variable: {
          auto it = bindings.find(n.name);
          if (it == bindings.end())
            throw ConfigurationError("unbound leaf '" + n.name + "'");
          if (it->second.rows() != n.value.rows() ||
              it->second.cols() != n.value.cols())
            throw ContractError("binding for '" + n.name + "' has wrong shape");
          values[id] = it->second;
          break;
        }
        case NodeKind::op: {
          std::vector<const Matrix*> args;
          for (std::size_t p : n.parents) args.push_back(&values[p]);
          values[id] = n.forward(args);
          break;
        }
      }
      check_finite(values[id], id, n.op);
    }
    return values[top];
  }

 private:
  static void check_finite(const Matrix& m, std::size_t id,
                           const std::string& op) {
    if (!m.allFinite())
      throw NumericError("non-finite value produced by '" + op + "' at node " +
                             std::to_string(id),
                         id);
  }

  Var accumulate(const Var& a, const Var& b);

  std::deque<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->node(id_).value; }

inline double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1)
    throw ContractError("scalar() on a non-scalar node");
  return v(0, 0);
}

inline Var Var::input(std::size_t k) const {
  return Var(tape_, tape_->node(id_).parents.at(k));
}

// ---------------------------------------------------------------------------
// Primitives

namespace detail {

using Args = std::vector<const Matrix*>;
using Needs = std::vector<bool>;

inline void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ContractError(std::string(op) + ": shape mismatch " +
                        std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " +
                        std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()));
}

}  // namespace detail

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator*(const Var& a, const Var& b);
Var operator*(const Var& a, double c);
Var operator*(double c, const Var& a);
Var operator+(const Var& a, double c);
Var operator+(double c, const Var& a);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var sum(const Var& a);
Var colsum(const Var& a);
Var broadcast(const Var& scalar, Eigen::Index rows, Eigen::Index cols);
Var broadcast_rows(const Var& row, Eigen::Index rows);
Var square(const Var& a);
Var reciprocal(const Var& a);

inline Var operator+(const Var& a, const Var& b) {
  detail::require_same_shape("add", a, b);
  return a.tape().apply(
      "add", {a, b},
      [](const detail::Args& v) { return Matrix(*v[0] + *v[1]); },
      [](const Var&, const Var& g, const detail::Needs&) {
        return std::vector<Var>{g, g};
      });
}

inline Var operator-(const Var& a, const Var& b) {
  detail::require_same_shape("sub", a, b);
  return a.tape().apply(
      "sub", {a, b},
      [](const detail::Args& v) { return Matrix(*v[0] - *v[1]); },
      [](const Var&, const Var& g, const detail::Needs& needs) {
        std::vector<Var> out{g, Var()};
        if (needs[1]) out[1] = -g;
        return out;
      });
}

inline Var operator-(const Var& a) { return a * -1.0; }

/// Elementwise product.
inline Var operator*(const Var& a, const Var& b) {
  detail::require_same_shape("mul", a, b);
  return a.tape().apply(
      "mul", {a, b},
      [](const detail::Args& v) { return Matrix(v[0]->cwiseProduct(*v[1])); },
      [](const Var& self, const Var& g, const detail::Needs& needs) {
        std::vector<Var> out(2);
        if (needs[0]) out[0] = g * self.input(1);
        if (needs[1]) out[1] = g * self.input(0);
        return out;
      });
}

inline Var operator*(const Var& a, double c) {
  return a.tape().apply(
      "scale", {a}, [c](const detail::Args& v) { return Matrix(*v[0] * c); },
      [c](const Var&, const Var& g, const detail::Needs&) {
        return std::vector<Var>{g * c};
      });
}

inline Var operator*(double c, const Var& a) { return a * c; }

inline Var operator+(const Var& a, double c) {
  return a.tape().apply(
      "add_scalar", {a},
      [c](const detail::Args& v) { return Matrix(v[0]->array() + c); },
      [](const Var&, const Var& g, const detail::Needs&) {
        return std::vector<Var>{g};
      });
}

inline Var operator+(double c, const Var& a) { return a + c; }

inline Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows())
    throw ContractError("matmul: inner dimensions " + std::to_string(a.cols()) +
                        " and " + std::to_string(b.rows()) + " differ");
  return a.tape().apply(
      "matmul", {a, b},
      [](const detail::Args& v) { return Matrix(*v[0] * *v[1]); },
      [](const Var& self, const Var& g, const detail::Needs& needs) {
        std::vector<Var> out(2);
        if (needs[0]) out[0] = matmul(g, transpose(self.input(1)));
        if (needs[1]) out[1] = matmul(transpose(self.input(0)), g);
        return out;
      });
}

inline Var transpose(const Var& a) {
  return a.tape().apply(
      "transpose", {a},
      [](const detail::Args& v) { return Matrix(v[0]->transpose()); },
      [](const Var&, const Var& g, const detail::Needs&) {
        return std::vector<Var>{transpose(g)};
      });
}

/// Adds a 1 x m row to every row of an n x m matrix.
inline Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw ContractError("add_row: row must be 1x" + std::to_string(a.cols()));
  return a.tape().apply(
      "add_row", {a, row},
      [](const detail::Args& v) {
        return Matrix(v[0]->rowwise() + v[1]->row(0));
      },
      [](const Var&, const Var& g, const detail::Needs& needs) {
        std::vector<Var> out(2);
        if (needs[0]) out[0] = g;
        if (needs[1]) out[1] = colsum(g);
        return out;
      });
}

/// Sum of all entries, as a 1x1 node.
inline Var sum(const Var& a) {
  const Eigen::Index r = a.rows(), c = a.cols();
  return a.tape().apply(
      "sum", {a},
      [](const detail::Args& v) { return Matrix::Constant(1, 1, v[0]->sum()); },
      [r, c](const Var&, const Var& g, const detail::Needs&) {
        return std::vector<Var>{broadcast(g, r, c)};
      });
}

inline Var mean(const Var& a) {
  return sum(a) * (1.0 / static_cast<double>(a.rows() * a.cols()));
}

/// Column sums, n x m -> 1 x m.
inline Var colsum(const Var& a) {
  const Eigen::Index r = a.rows();
  return a.tape().apply(
      "colsum", {a},
      [](const detail::Args& v) { return Matrix(v[0]->colwise().sum()); },
      [r](const Var&, const Var& g, const detail::Needs&) {
        return std::vector<Var>{broadcast_rows(g, r)};
      });
}

inline Var broadcast(const Var& scalar, Eigen::Index rows, Eigen::Index cols) {
  if (scalar.rows() != 1 || scalar.cols() != 1)
    throw ContractError("broadcast: operand must be 1x1");
  return scalar.tape().apply(
      "broadcast", {scalar},
      [rows, cols](const detail::Args& v) {
        return Matrix::Constant(rows, cols, (*v[0])(0, 0));
      },
      [](const Var&, const Var& g, const detail::Needs&) {
        return std::vector<Var>{sum(g)};
      });
}

/// Stacks a 1 x m row `rows` times.
inline Var broadcast_rows(const Var& row, Eigen::Index rows) {
  if (row.rows() != 1) throw ContractError("broadcast_rows: operand must be a row");
  return row.tape().apply(
      "broadcast_rows", {row},
      [rows](const detail::Args& v) {
        return Matrix(v[0]->replicate(rows, 1));
      },
      [](const Var&, const Var& g, const detail::Needs&) {
        return std::vector<Var>{colsum(g)};
      });
}

inline Var square(const Var& a) {
  return a.tape().apply(
      "square", {a},
      [](const detail::Args& v) { return Matrix(v[0]->array().square()); },
      [](const Var& self, const Var& g, const detail::Needs&) {
        return std::vector<Var>{g * (self.input(0) * 2.0)};
      });
}

inline Var reciprocal(const Var& a) {
  return a.tape().apply(
      "reciprocal", {a},
      [](const detail::Args& v) { return Matrix(v[0]->array().inverse()); },
      [](const Var& self, const Var& g, const detail::Needs&) {
        return std::vector<Var>{g * (square(self) * -1.0)};
      });
}

inline Var tanh(const Var& a) {
  return a.tape().apply(
      "tanh", {a},
      [](const detail::Args& v) { return Matrix(v[0]->array().tanh()); },
      [](const Var& self, const Var& g, const detail::Needs&) {
        return std::vector<Var>{g * (1.0 + square(self) * -1.0)};
      });
}

inline Var sigmoid(const Var& a) {
  return a.tape().apply(
      "sigmoid", {a},
      [](const detail::Args& v) {
        return Matrix((1.0 + (-v[0]->array()).exp()).inverse());
      },
      [](const Var& self, const Var& g, const detail::Needs&) {
        return std::vector<Var>{g * (self * (1.0 + self * -1.0))};
      });
}

inline Var exp(const Var& a) {
  return a.tape().apply(
      "exp", {a},
      [](const detail::Args& v) { return Matrix(v[0]->array().exp()); },
      [](const Var& self, const Var& g, const detail::Needs&) {
        return std::vector<Var>{g * self};
      });
}

inline Var log(const Var& a) {
  return a.tape().apply(
      "log", {a},
      [](const detail::Args& v) { return Matrix(v[0]->array().log()); },
      [](const Var& self, const Var& g, const detail::Needs&) {
        return std::vector<Var>{g * reciprocal(self.input(0))};
      });
}

/// max(0, a). The derivative mask is recorded as a constant, so the second
/// derivative is 0 everywhere, including at the kink.
inline Var relu(const Var& a) {
  return a.tape().apply(
      "relu", {a},
      [](const detail::Args& v) { return Matrix(v[0]->cwiseMax(0.0)); },
      [](const Var& self, const Var& g, const detail::Needs&) {
        const Matrix& x = self.input(0).value();
        Matrix mask = (x.array() > 0.0).cast<double>().matrix();
        return std::vector<Var>{g * self.tape().constant(std::move(mask))};
      });
}

inline Var max0(const Var& a) { return relu(a); }

/// Clamps into [lo, hi]; zero derivative where clamped.
inline Var clamp(const Var& a, double lo, double hi) {
  return a.tape().apply(
      "clamp", {a},
      [lo, hi](const detail::Args& v) {
        return Matrix(v[0]->cwiseMax(lo).cwiseMin(hi));
      },
      [lo, hi](const Var& self, const Var& g, const detail::Needs&) {
        const Matrix& x = self.input(0).value();
        Matrix mask = ((x.array() > lo) && (x.array() < hi)).cast<double>().matrix();
        return std::vector<Var>{g * self.tape().constant(std::move(mask))};
      });
}

inline Var Tape::accumulate(const Var& a, const Var& b) { return a + b; }

// ---------------------------------------------------------------------------
// Convenience entry points

/// Replays `root` under new leaf bindings.
inline Matrix forward_eval(const Var& root, const Bindings& bindings) {
  return root.tape().evaluate(root, bindings);
}

/// Plain-matrix gradients of a scalar root.
inline std::vector<Matrix> grad(const Var& root, std::span<const Var> wrt) {
  std::vector<Var> g = root.tape().grad(root, wrt);
  std::vector<Matrix> out;
  out.reserve(g.size());
  for (const Var& v : g) out.push_back(v.value());
  return out;
}

/// Gradient w.r.t. `wrt` of the scalar returned by `build(tape)`, where the
/// builder typically calls Tape::grad itself.
template <class Builder>
std::vector<Matrix> grad_of_grad(Tape& tape, Builder&& build,
                                 std::span<const Var> wrt) {
  Var root = std::forward<Builder>(build)(tape);
  return grad(root, wrt);
}

}  // namespace kinject::ad
