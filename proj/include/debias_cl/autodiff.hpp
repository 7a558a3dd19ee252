#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "debias_cl/tensor.hpp"

namespace debias_cl {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Append-only record of one forward computation. Parents always precede
// children, so a reverse sweep over node order is a valid topological order.
// One tape per training step; drop it after the optimizer update.
class Tape {
 public:
  // Accumulates contributions into the gradients of the node's parents. A
  // parent that does not require gradients is passed as nullptr.
  using BackwardFn = std::function<void(const Tensor& out_grad, std::span<Tensor* const> parent_grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value) { return push(std::move(value), true, {}, nullptr); }

  Var constant(Tensor value) { return push(std::move(value), false, {}, nullptr); }

  Var record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward) {
    bool needs = false;
    for (std::size_t p : parents) needs = needs || nodes_.at(p).requires_grad;
    if (!needs) return push(std::move(value), false, {}, nullptr);
    return push(std::move(value), true, std::move(parents), std::move(backward));
  }

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const Tensor& grad(const Var& v) const { return nodes_.at(v.id()).grad; }
  bool requires_grad(const Var& v) const { return nodes_.at(v.id()).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from a one-element root. Every gradient is reset first, so
  // repeating backward on the same graph reproduces identical results and
  // leaves not reachable from the root end with zero gradient.
  void backward(const Var& root) {
    if (root.tape() != this) throw Error("backward: root belongs to a different tape");
    Node& r = nodes_.at(root.id());
    if (r.value.numel() != 1) throw DimensionError("backward: root must be a scalar, got " + shape_string(r.value.shape()));
    for (Node& n : nodes_) n.grad = Tensor(n.value.shape(), 0.0);
    r.grad[0] = 1.0;
    std::vector<Tensor*> parent_grads;
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward) continue;
      parent_grads.clear();
      for (std::size_t p : n.parents) parent_grads.push_back(nodes_[p].requires_grad ? &nodes_[p].grad : nullptr);
      n.backward(n.grad, parent_grads);
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::size_t> parents;
    BackwardFn backward;
  };

  Var push(Tensor value, bool requires_grad, std::vector<std::size_t> parents, BackwardFn backward) {
    nodes_.push_back(Node{std::move(value), Tensor(), requires_grad, std::move(parents), std::move(backward)});
    return Var(this, nodes_.size() - 1);
  }

  // deque keeps value references stable while the tape grows.
  std::deque<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

namespace detail {

inline Tape& same_tape(const Var& a, const Var& b, const char* op) {
  if (a.tape() == nullptr || a.tape() != b.tape()) throw Error(std::string(op) + ": operands on different tapes");
  return *a.tape();
}

inline void accumulate(Tensor* dst, const Tensor& src) {
  if (!dst) return;
  for (std::size_t i = 0; i < src.numel(); ++i) (*dst)[i] += src[i];
}

// Gradient of a broadcast operand: either elementwise or summed into a scalar.
inline void accumulate_broadcast(Tensor* dst, const Tensor& contribution) {
  if (!dst) return;
  if (dst->is_scalar() && contribution.numel() != 1) {
    double s = 0.0;
    for (double v : contribution.data()) s += v;
    (*dst)[0] += s;
  } else {
    accumulate(dst, contribution);
  }
}

}  // namespace detail

// Taped operations. Each computes its value with the Tensor overload and
// records the vector-Jacobian product.

inline Var matmul(const Var& a, const Var& b) {
  Tape& tape = detail::same_tape(a, b, "matmul");
  Tensor out = matmul(a.value(), b.value());
  const Tape* tp = &tape;
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {ia, ib}, [tp, ia, ib](const Tensor& g, std::span<Tensor* const> pg) {
    if (pg[0]) detail::accumulate(pg[0], matmul(g, transpose(tp->value(ib))));
    if (pg[1]) detail::accumulate(pg[1], matmul(transpose(tp->value(ia)), g));
  });
}

inline Var transpose(const Var& a) {
  return a.tape()->record(transpose(a.value()), {a.id()}, [](const Tensor& g, std::span<Tensor* const> pg) {
    detail::accumulate(pg[0], transpose(g));
  });
}

inline Var add(const Var& a, const Var& b) {
  Tape& tape = detail::same_tape(a, b, "add");
  return tape.record(add(a.value(), b.value()), {a.id(), b.id()}, [](const Tensor& g, std::span<Tensor* const> pg) {
    detail::accumulate_broadcast(pg[0], g);
    detail::accumulate_broadcast(pg[1], g);
  });
}

inline Var sub(const Var& a, const Var& b) {
  Tape& tape = detail::same_tape(a, b, "sub");
  return tape.record(sub(a.value(), b.value()), {a.id(), b.id()}, [](const Tensor& g, std::span<Tensor* const> pg) {
    detail::accumulate_broadcast(pg[0], g);
    detail::accumulate_broadcast(pg[1], scale(g, -1.0));
  });
}

inline Var mul(const Var& a, const Var& b) {
  Tape& tape = detail::same_tape(a, b, "mul");
  const Tape* tp = &tape;
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(mul(a.value(), b.value()), {ia, ib}, [tp, ia, ib](const Tensor& g, std::span<Tensor* const> pg) {
    if (pg[0]) detail::accumulate_broadcast(pg[0], mul(g, tp->value(ib)));
    if (pg[1]) detail::accumulate_broadcast(pg[1], mul(g, tp->value(ia)));
  });
}

inline Var scale(const Var& a, double s) {
  return a.tape()->record(scale(a.value(), s), {a.id()}, [s](const Tensor& g, std::span<Tensor* const> pg) {
    detail::accumulate(pg[0], scale(g, s));
  });
}

inline Var add_scalar(const Var& a, double s) {
  return a.tape()->record(add_scalar(a.value(), s), {a.id()},
                          [](const Tensor& g, std::span<Tensor* const> pg) { detail::accumulate(pg[0], g); });
}

inline Var tanh(const Var& a) {
  Tensor y = tanh(a.value());
  Tensor saved = y;
  return a.tape()->record(std::move(y), {a.id()},
                          [saved = std::move(saved)](const Tensor& g, std::span<Tensor* const> pg) {
                            if (!pg[0]) return;
                            for (std::size_t i = 0; i < g.numel(); ++i)
                              (*pg[0])[i] += g[i] * (1.0 - saved[i] * saved[i]);
                          });
}

inline Var relu(const Var& a) {
  const Tape* tp = a.tape();
  const std::size_t ia = a.id();
  return a.tape()->record(relu(a.value()), {ia}, [tp, ia](const Tensor& g, std::span<Tensor* const> pg) {
    if (!pg[0]) return;
    const Tensor& x = tp->value(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) (*pg[0])[i] += x[i] > 0.0 ? g[i] : 0.0;
  });
}

inline Var exp(const Var& a) {
  Tensor y = exp(a.value());
  Tensor saved = y;
  return a.tape()->record(std::move(y), {a.id()},
                          [saved = std::move(saved)](const Tensor& g, std::span<Tensor* const> pg) {
                            if (pg[0]) detail::accumulate(pg[0], mul(g, saved));
                          });
}

inline Var log(const Var& a) {
  const Tape* tp = a.tape();
  const std::size_t ia = a.id();
  return a.tape()->record(log(a.value()), {ia}, [tp, ia](const Tensor& g, std::span<Tensor* const> pg) {
    if (!pg[0]) return;
    const Tensor& x = tp->value(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) (*pg[0])[i] += g[i] / x[i];
  });
}

inline Var square(const Var& a) {
  const Tape* tp = a.tape();
  const std::size_t ia = a.id();
  return a.tape()->record(square(a.value()), {ia}, [tp, ia](const Tensor& g, std::span<Tensor* const> pg) {
    if (!pg[0]) return;
    const Tensor& x = tp->value(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) (*pg[0])[i] += 2.0 * x[i] * g[i];
  });
}

inline Var sum(const Var& a) {
  return a.tape()->record(sum(a.value()), {a.id()}, [](const Tensor& g, std::span<Tensor* const> pg) {
    if (!pg[0]) return;
    for (double& v : pg[0]->data()) v += g[0];
  });
}

inline Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().numel());
  return a.tape()->record(mean(a.value()), {a.id()}, [n](const Tensor& g, std::span<Tensor* const> pg) {
    if (!pg[0]) return;
    const double share = g[0] / n;
    for (double& v : pg[0]->data()) v += share;
  });
}

inline Var row_sum(const Var& a) {
  return a.tape()->record(row_sum(a.value()), {a.id()}, [](const Tensor& g, std::span<Tensor* const> pg) {
    if (!pg[0]) return;
    Tensor& ga = *pg[0];
    for (std::size_t i = 0; i < ga.rows(); ++i)
      for (double& v : ga.row_span(i)) v += g[i];
  });
}

inline Var diagonal(const Var& a) {
  return a.tape()->record(diagonal(a.value()), {a.id()}, [](const Tensor& g, std::span<Tensor* const> pg) {
    if (!pg[0]) return;
    for (std::size_t i = 0; i < g.numel(); ++i) (*pg[0])(i, i) += g[i];
  });
}

inline Var add_row_vector(const Var& a, const Var& bias) {
  Tape& tape = detail::same_tape(a, bias, "add_row_vector");
  return tape.record(add_row_vector(a.value(), bias.value()), {a.id(), bias.id()},
                     [](const Tensor& g, std::span<Tensor* const> pg) {
                       detail::accumulate(pg[0], g);
                       if (!pg[1]) return;
                       for (std::size_t i = 0; i < g.rows(); ++i)
                         for (std::size_t j = 0; j < g.cols(); ++j) (*pg[1])[j] += g(i, j);
                     });
}

// d/da (a / |a|) applied to g: (g - y (y.g)) / |a|, row by row.
inline Var rowwise_l2_normalize(const Var& a, double epsilon = kNormalizeEpsilon) {
  Tensor y = rowwise_l2_normalize(a.value(), epsilon);
  Tensor norms = row_norms(a.value());
  Tensor saved = y;
  return a.tape()->record(
      std::move(y), {a.id()},
      [saved = std::move(saved), norms = std::move(norms)](const Tensor& g, std::span<Tensor* const> pg) {
        if (!pg[0]) return;
        Tensor& ga = *pg[0];
        for (std::size_t i = 0; i < g.rows(); ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < g.cols(); ++j) dot += saved(i, j) * g(i, j);
          for (std::size_t j = 0; j < g.cols(); ++j) ga(i, j) += (g(i, j) - saved(i, j) * dot) / norms[i];
        }
      });
}

// d/da log_softmax applied to g: g - softmax * rowsum(g).
inline Var log_softmax_rows(const Var& a) {
  Tensor y = log_softmax_rows(a.value());
  Tensor saved = y;
  return a.tape()->record(std::move(y), {a.id()},
                          [saved = std::move(saved)](const Tensor& g, std::span<Tensor* const> pg) {
                            if (!pg[0]) return;
                            Tensor& ga = *pg[0];
                            for (std::size_t i = 0; i < g.rows(); ++i) {
                              double gs = 0.0;
                              for (std::size_t j = 0; j < g.cols(); ++j) gs += g(i, j);
                              for (std::size_t j = 0; j < g.cols(); ++j)
                                ga(i, j) += g(i, j) - std::exp(saved(i, j)) * gs;
                            }
                          });
}

// Brings a plain value into the same representation as `like`: a Tensor stays
// a Tensor, and next to a Var it becomes a constant on that Var's tape.
inline Tensor lift(const Tensor& /*like*/, Tensor value) { return value; }
inline Var lift(const Var& like, Tensor value) { return like.tape()->constant(std::move(value)); }

inline const Tensor& value_of(const Tensor& t) { return t; }
inline const Tensor& value_of(const Var& v) { return v.value(); }

}  // namespace debias_cl
