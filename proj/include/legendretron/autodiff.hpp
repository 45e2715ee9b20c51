#pragma once

// Reverse-mode differentiation on an append-only tape.
//
// Nodes are scalar primitives (affine combinations, sums of products,
// softplus, sigmoid, exp, log, reciprocal). Tape::gradient records the
// adjoint computation itself as new nodes, so a gradient can be used inside
// a larger computation and differentiated again. Tape::gradient_values is
// the plain numeric reverse sweep used for the final loss.
//
// A tape is confined to one thread. Vars are cheap handles (tape, index).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace legendretron::ad {

enum class Op : std::uint8_t {
  kLeaf,
  kConst,
  kAffine,    // shift + sum_k coef_k * arg_k
  kDot,       // shift + sum_k a_k * b_k, args stored as interleaved pairs
  kSoftplus,  // log(1 + exp(a))
  kSigmoid,   // 1 / (1 + exp(-a))
  kExp,
  kLog,
  kRecip,
};

class Tape;

class Var {
 public:
  Var() = default;

  Tape* tape() const { return tape_; }
  std::uint32_t id() const { return id_; }
  double value() const;
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Gradient of a scalar with respect to a list of variables. `reached[i]`
/// is false when the scalar does not depend structurally on variable i
/// (its value is then exactly zero), which is distinct from a numeric zero.
struct ParamGradient {
  std::vector<double> values;
  std::vector<bool> reached;

  std::size_t size() const { return values.size(); }
  bool structurally_zero(std::size_t i) const { return !reached[i]; }
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t size() const { return nodes_.size(); }

  void clear() {
    nodes_.clear();
    args_.clear();
    coefs_.clear();
  }

  void reserve(std::size_t nodes) {
    nodes_.reserve(nodes);
    args_.reserve(nodes * 2);
  }

  double value(std::uint32_t id) const { return nodes_[id].value; }
  Op op(std::uint32_t id) const { return nodes_[id].op; }

  Var leaf(double v) { return push({Op::kLeaf, 0, 0, 0, v, 0.0}); }
  Var constant(double v) { return push({Op::kConst, 0, 0, 0, v, 0.0}); }

  Var affine(double shift, std::span<const double> coefs, std::span<const Var> args) {
    if (coefs.size() != args.size()) throw std::invalid_argument("Tape::affine: size mismatch");
    Node n{Op::kAffine, static_cast<std::uint32_t>(args_.size()),
           static_cast<std::uint32_t>(args.size()), static_cast<std::uint32_t>(coefs_.size()), 0.0,
           shift};
    double v = shift;
    for (std::size_t k = 0; k < args.size(); ++k) {
      check(args[k]);
      args_.push_back(args[k].id());
      coefs_.push_back(coefs[k]);
      v += coefs[k] * nodes_[args[k].id()].value;
    }
    n.value = v;
    return push(n);
  }

  Var affine(double shift, std::initializer_list<double> coefs, std::initializer_list<Var> args) {
    return affine(shift, std::span<const double>(coefs.begin(), coefs.size()),
                  std::span<const Var>(args.begin(), args.size()));
  }

  /// shift + sum_k a_k * b_k.
  Var dot(std::span<const Var> a, std::span<const Var> b, double shift = 0.0) {
    if (a.size() != b.size()) throw std::invalid_argument("Tape::dot: size mismatch");
    Node n{Op::kDot, static_cast<std::uint32_t>(args_.size()),
           static_cast<std::uint32_t>(a.size()), 0, 0.0, shift};
    double v = shift;
    for (std::size_t k = 0; k < a.size(); ++k) {
      check(a[k]);
      check(b[k]);
      args_.push_back(a[k].id());
      args_.push_back(b[k].id());
      v += nodes_[a[k].id()].value * nodes_[b[k].id()].value;
    }
    n.value = v;
    return push(n);
  }

  Var mul(Var a, Var b) {
    const Var as[1] = {a};
    const Var bs[1] = {b};
    return dot(as, bs);
  }

  Var softplus(Var a) {
    const double x = value_of(a);
    return unary(Op::kSoftplus, a, x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)));
  }
  Var sigmoid(Var a) {
    const double x = value_of(a);
    const double v = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    return unary(Op::kSigmoid, a, v);
  }
  Var exp(Var a) { return unary(Op::kExp, a, std::exp(value_of(a))); }
  Var log(Var a) { return unary(Op::kLog, a, std::log(value_of(a))); }
  Var recip(Var a) { return unary(Op::kRecip, a, 1.0 / value_of(a)); }

  /// Gradient of `out` with respect to `wrt`, recorded on this tape so the
  /// result can itself be differentiated. Variables in `wrt` are treated as
  /// independent inputs: paths from `out` that pass through one of them stop
  /// there, even if that variable is itself computed from another.
  std::vector<Var> gradient(Var out, std::span<const Var> wrt) {
    check(out);
    for (const Var& w : wrt) check(w);
    std::vector<Var> result(wrt.size());
    if (wrt.empty()) return result;

    std::uint32_t lo = out.id();
    for (const Var& w : wrt) lo = std::min(lo, w.id());
    const std::uint32_t hi = out.id();
    const std::size_t span_len = hi - lo + 1;

    std::vector<char> is_input(span_len, 0);
    for (const Var& w : wrt) {
      if (w.id() <= hi) is_input[w.id() - lo] = 1;
    }

    // dep[i]: node lo+i depends on some input inside [lo, hi].
    std::vector<char> dep(span_len, 0);
    for (std::uint32_t i = lo; i <= hi; ++i) {
      if (is_input[i - lo]) {
        dep[i - lo] = 1;
        continue;
      }
      const Node& n = nodes_[i];
      const std::uint32_t count = n.op == Op::kDot ? 2 * n.count : n.count;
      for (std::uint32_t k = 0; k < count; ++k) {
        const std::uint32_t a = args_[n.begin + k];
        if (a >= lo && dep[a - lo]) {
          dep[i - lo] = 1;
          break;
        }
      }
    }

    constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
    std::vector<std::uint32_t> adj(span_len, kNone);

    auto accumulate = [&](std::uint32_t target, double coef, Var term) {
      std::uint32_t& slot = adj[target - lo];
      if (slot == kNone) {
        slot = coef == 1.0 ? term.id() : affine(0.0, {coef}, {term}).id();
      } else {
        slot = affine(0.0, {1.0, coef}, {Var(this, slot), term}).id();
      }
    };
    auto wanted = [&](std::uint32_t a) { return a >= lo && dep[a - lo]; };

    if (dep[hi - lo]) {
      adj[hi - lo] = constant(1.0).id();
      for (std::uint32_t i = hi + 1; i-- > lo;) {
        const std::uint32_t slot = adj[i - lo];
        if (slot == kNone || is_input[i - lo]) continue;
        const Node n = nodes_[i];
        const Var g(this, slot);
        const Var self(this, i);
        switch (n.op) {
          case Op::kLeaf:
          case Op::kConst:
            break;
          case Op::kAffine:
            for (std::uint32_t k = 0; k < n.count; ++k) {
              const std::uint32_t a = args_[n.begin + k];
              if (wanted(a)) accumulate(a, coefs_[n.coef_begin + k], g);
            }
            break;
          case Op::kDot:
            for (std::uint32_t k = 0; k < n.count; ++k) {
              const std::uint32_t a = args_[n.begin + 2 * k];
              const std::uint32_t b = args_[n.begin + 2 * k + 1];
              if (wanted(a)) accumulate(a, 1.0, mul(Var(this, b), g));
              if (wanted(b)) accumulate(b, 1.0, mul(Var(this, a), g));
            }
            break;
          case Op::kSoftplus: {
            const std::uint32_t a = args_[n.begin];
            if (wanted(a)) accumulate(a, 1.0, mul(sigmoid(Var(this, a)), g));
            break;
          }
          case Op::kSigmoid: {
            const std::uint32_t a = args_[n.begin];
            if (wanted(a)) {
              const Var one_minus = affine(1.0, {-1.0}, {self});
              accumulate(a, 1.0, mul(mul(self, one_minus), g));
            }
            break;
          }
          case Op::kExp: {
            const std::uint32_t a = args_[n.begin];
            if (wanted(a)) accumulate(a, 1.0, mul(self, g));
            break;
          }
          case Op::kLog: {
            const std::uint32_t a = args_[n.begin];
            if (wanted(a)) accumulate(a, 1.0, mul(recip(Var(this, a)), g));
            break;
          }
          case Op::kRecip: {
            const std::uint32_t a = args_[n.begin];
            if (wanted(a)) accumulate(a, -1.0, mul(mul(self, self), g));
            break;
          }
          default:
            throw std::logic_error("Tape::gradient: unsupported primitive");
        }
      }
    }

    for (std::size_t k = 0; k < wrt.size(); ++k) {
      const std::uint32_t id = wrt[k].id();
      const std::uint32_t slot = id <= hi ? adj[id - lo] : kNone;
      result[k] = slot == kNone ? constant(0.0) : Var(this, slot);
    }
    return result;
  }

  /// Numeric gradient of `out` with respect to `wrt` (no recording).
  ParamGradient gradient_values(Var out, std::span<const Var> wrt) const {
    check(out);
    for (const Var& w : wrt) check(w);
    ParamGradient result{std::vector<double>(wrt.size(), 0.0), std::vector<bool>(wrt.size(), false)};
    if (wrt.empty()) return result;

    std::uint32_t lo = out.id();
    for (const Var& w : wrt) lo = std::min(lo, w.id());
    const std::uint32_t hi = out.id();
    const std::size_t span_len = hi - lo + 1;

    std::vector<char> is_input(span_len, 0);
    for (const Var& w : wrt) {
      if (w.id() <= hi) is_input[w.id() - lo] = 1;
    }
    std::vector<double> adj(span_len, 0.0);
    std::vector<char> touched(span_len, 0);
    adj[hi - lo] = 1.0;
    touched[hi - lo] = 1;

    auto add = [&](std::uint32_t a, double v) {
      if (a < lo) return;
      adj[a - lo] += v;
      touched[a - lo] = 1;
    };

    for (std::uint32_t i = hi + 1; i-- > lo;) {
      if (!touched[i - lo] || is_input[i - lo]) continue;
      const double g = adj[i - lo];
      const Node& n = nodes_[i];
      switch (n.op) {
        case Op::kLeaf:
        case Op::kConst:
          break;
        case Op::kAffine:
          for (std::uint32_t k = 0; k < n.count; ++k) {
            add(args_[n.begin + k], coefs_[n.coef_begin + k] * g);
          }
          break;
        case Op::kDot:
          for (std::uint32_t k = 0; k < n.count; ++k) {
            const std::uint32_t a = args_[n.begin + 2 * k];
            const std::uint32_t b = args_[n.begin + 2 * k + 1];
            add(a, nodes_[b].value * g);
            add(b, nodes_[a].value * g);
          }
          break;
        case Op::kSoftplus: {
          const std::uint32_t a = args_[n.begin];
          const double x = nodes_[a].value;
          const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
          add(a, s * g);
          break;
        }
        case Op::kSigmoid:
          add(args_[n.begin], n.value * (1.0 - n.value) * g);
          break;
        case Op::kExp:
          add(args_[n.begin], n.value * g);
          break;
        case Op::kLog:
          add(args_[n.begin], g / nodes_[args_[n.begin]].value);
          break;
        case Op::kRecip:
          add(args_[n.begin], -n.value * n.value * g);
          break;
        default:
          throw std::logic_error("Tape::gradient_values: unsupported primitive");
      }
    }

    for (std::size_t k = 0; k < wrt.size(); ++k) {
      const std::uint32_t id = wrt[k].id();
      if (id <= hi && touched[id - lo]) {
        result.values[k] = adj[id - lo];
        result.reached[k] = true;
      }
    }
    return result;
  }

 private:
  struct Node {
    Op op;
    std::uint32_t begin;       // first entry in args_
    std::uint32_t count;       // number of operands (pairs for kDot)
    std::uint32_t coef_begin;  // first entry in coefs_ (kAffine only)
    double value;
    double shift;
  };

  Var push(const Node& n) {
    if (nodes_.size() >= std::numeric_limits<std::uint32_t>::max() - 1) {
      throw std::length_error("Tape: too many nodes");
    }
    nodes_.push_back(n);
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  Var unary(Op op, Var a, double v) {
    check(a);
    Node n{op, static_cast<std::uint32_t>(args_.size()), 1, 0, v, 0.0};
    args_.push_back(a.id());
    return push(n);
  }

  double value_of(Var a) const {
    check(a);
    return nodes_[a.id()].value;
  }

  void check(Var v) const {
    if (v.tape() != this || v.id() >= nodes_.size()) {
      throw std::invalid_argument("Tape: variable does not belong to this tape");
    }
  }

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> args_;
  std::vector<double> coefs_;
};

inline double Var::value() const { return tape_->value(id_); }

// Arithmetic on Vars. Each operator appends one node.

inline Var operator+(Var a, Var b) { return a.tape()->affine(0.0, {1.0, 1.0}, {a, b}); }
inline Var operator-(Var a, Var b) { return a.tape()->affine(0.0, {1.0, -1.0}, {a, b}); }
inline Var operator-(Var a) { return a.tape()->affine(0.0, {-1.0}, {a}); }
inline Var operator*(Var a, Var b) { return a.tape()->mul(a, b); }
inline Var operator/(Var a, Var b) { return a.tape()->mul(a, a.tape()->recip(b)); }
inline Var operator+(Var a, double c) { return a.tape()->affine(c, {1.0}, {a}); }
inline Var operator+(double c, Var a) { return a + c; }
inline Var operator-(Var a, double c) { return a.tape()->affine(-c, {1.0}, {a}); }
inline Var operator-(double c, Var a) { return a.tape()->affine(c, {-1.0}, {a}); }
inline Var operator*(Var a, double c) { return a.tape()->affine(0.0, {c}, {a}); }
inline Var operator*(double c, Var a) { return a * c; }
inline Var operator/(Var a, double c) { return a * (1.0 / c); }

inline Var softplus(Var a) { return a.tape()->softplus(a); }
inline Var sigmoid(Var a) { return a.tape()->sigmoid(a); }
inline Var exp(Var a) { return a.tape()->exp(a); }
inline Var log(Var a) { return a.tape()->log(a); }

/// Gradient of a scalar function recorded on `tape` at the variables `x`.
/// The result lives on the same tape and can be differentiated further.
template <class F>
std::vector<Var> grad_input(Tape& tape, F&& f, std::span<const Var> x) {
  const Var y = f(x);
  return tape.gradient(y, x);
}

/// Numeric gradient of a scalar function at a point. `f` receives Vars on a
/// scratch tape.
template <class F>
std::vector<double> grad_input(F&& f, std::span<const double> x) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(x.size());
  for (double v : x) vars.push_back(tape.leaf(v));
  const Var y = f(std::span<const Var>(vars));
  return tape.gradient_values(y, vars).values;
}

/// Gradient of a recorded loss with respect to a parameter set.
inline ParamGradient grad_params(const Tape& tape, Var loss, std::span<const Var> params) {
  return tape.gradient_values(loss, params);
}

}  // namespace legendretron::ad
