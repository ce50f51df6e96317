#ifndef LUK_FORMULA_HPP
#define LUK_FORMULA_HPP

// Formula AST and exact Lukasiewicz semantics on [0,1].

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "luk/error.hpp"

namespace luk {

enum class Op {
  Const0,
  Const1,
  Var,        // propositional variable
  Atom,       // predicate applied to argument names
  Not,
  StrongAnd,  // x * y = max{0, x+y-1}
  WeakAnd,    // x ^ y = min{x, y}
  StrongOr,   // x + y = min{1, x+y}
  WeakOr,     // x | y = max{x, y}
  Implies,    // x -> y = min{1, 1-x+y}
  ForAll,
  Exists,
};

inline bool is_nary(Op op) {
  return op == Op::StrongAnd || op == Op::WeakAnd || op == Op::StrongOr || op == Op::WeakOr;
}

inline bool is_leaf(Op op) {
  return op == Op::Const0 || op == Op::Const1 || op == Op::Var || op == Op::Atom;
}

inline bool is_quantifier(Op op) { return op == Op::ForAll || op == Op::Exists; }

inline const char* op_symbol(Op op) {
  switch (op) {
    case Op::Const0: return "0";
    case Op::Const1: return "1";
    case Op::Not: return "~";
    case Op::StrongAnd: return "*";
    case Op::WeakAnd: return "^";
    case Op::StrongOr: return "+";
    case Op::WeakOr: return "|";
    case Op::Implies: return "->";
    case Op::ForAll: return "forall";
    case Op::Exists: return "exists";
    default: return "";
  }
}

inline const char* op_name(Op op) {
  switch (op) {
    case Op::Const0: return "constant 0";
    case Op::Const1: return "constant 1";
    case Op::Var: return "variable";
    case Op::Atom: return "atom";
    case Op::Not: return "negation";
    case Op::StrongAnd: return "strong conjunction";
    case Op::WeakAnd: return "weak conjunction";
    case Op::StrongOr: return "strong disjunction";
    case Op::WeakOr: return "weak disjunction";
    case Op::Implies: return "implication";
    case Op::ForAll: return "universal quantifier";
    case Op::Exists: return "existential quantifier";
  }
  return "";
}

/// Immutable formula tree with shared subterms. Copies are cheap.
///
/// N-ary connectives are stored flat: building StrongAnd over a child that is
/// itself a StrongAnd splices the grandchildren in, so (a*b)*c and a*(b*c)
/// produce the same node a*b*c.
class Formula {
 public:
  Formula() : Formula(Op::Const0) {}

  static Formula zero() { return Formula(Op::Const0); }
  static Formula one() { return Formula(Op::Const1); }
  static Formula constant(bool value) { return value ? one() : zero(); }

  static Formula var(std::string name) {
    Formula f(Op::Var);
    f.node_->name = std::move(name);
    return f;
  }

  static Formula atom(std::string predicate, std::vector<std::string> args) {
    Formula f(Op::Atom);
    f.node_->name = std::move(predicate);
    f.node_->args = std::move(args);
    return f;
  }

  static Formula negation(Formula operand) {
    Formula f(Op::Not);
    f.node_->children.push_back(std::move(operand));
    return f;
  }

  static Formula implies(Formula lhs, Formula rhs) {
    Formula f(Op::Implies);
    f.node_->children = {std::move(lhs), std::move(rhs)};
    return f;
  }

  /// Builds an n-ary connective, flattening same-op children. One child
  /// returns that child unchanged.
  static Formula nary(Op op, const std::vector<Formula>& operands) {
    if (!is_nary(op)) throw std::invalid_argument("nary: not an associative connective");
    if (operands.empty()) throw std::invalid_argument("nary: no operands");
    if (operands.size() == 1) return operands.front();
    Formula f(op);
    for (const auto& c : operands) {
      if (c.op() == op) {
        for (const auto& g : c.children()) f.node_->children.push_back(g);
      } else {
        f.node_->children.push_back(c);
      }
    }
    return f;
  }

  static Formula binary(Op op, Formula lhs, Formula rhs) {
    if (op == Op::Implies) return implies(std::move(lhs), std::move(rhs));
    return nary(op, {std::move(lhs), std::move(rhs)});
  }

  static Formula forall(std::string variable, Formula body) {
    return quantified(Op::ForAll, std::move(variable), std::move(body));
  }

  static Formula exists(std::string variable, Formula body) {
    return quantified(Op::Exists, std::move(variable), std::move(body));
  }

  static Formula quantified(Op op, std::string variable, Formula body) {
    Formula f(op);
    f.node_->name = std::move(variable);
    f.node_->children.push_back(std::move(body));
    return f;
  }

  Op op() const { return node_->op; }
  /// Variable name, predicate name, or bound variable of a quantifier.
  const std::string& name() const { return node_->name; }
  const std::vector<std::string>& args() const { return node_->args; }
  const std::vector<Formula>& children() const { return node_->children; }
  const Formula& child(std::size_t i) const { return node_->children.at(i); }
  const void* identity() const { return node_.get(); }

  bool is_literal() const {
    if (op() == Op::Var || op() == Op::Atom) return true;
    return op() == Op::Not && (child(0).op() == Op::Var || child(0).op() == Op::Atom);
  }

  /// Lookup key of a leaf: the variable name, or "p(a,b)" for an atom.
  std::string key() const {
    if (op() == Op::Var) return name();
    if (op() == Op::Atom) return atom_key(name(), args());
    throw std::logic_error("key() on a non-leaf formula");
  }

  static std::string atom_key(const std::string& predicate, const std::vector<std::string>& args) {
    std::string out = predicate;
    out += '(';
    for (std::size_t i = 0; i < args.size(); ++i) {
      if (i) out += ',';
      out += args[i];
    }
    out += ')';
    return out;
  }

  friend bool operator==(const Formula& a, const Formula& b) {
    if (a.node_ == b.node_) return true;
    if (a.op() != b.op() || a.name() != b.name() || a.args() != b.args()) return false;
    if (a.children().size() != b.children().size()) return false;
    for (std::size_t i = 0; i < a.children().size(); ++i)
      if (!(a.children()[i] == b.children()[i])) return false;
    return true;
  }
  friend bool operator!=(const Formula& a, const Formula& b) { return !(a == b); }

 private:
  struct Node {
    Op op;
    std::string name;
    std::vector<std::string> args;
    std::vector<Formula> children;
  };

  explicit Formula(Op op) : node_(std::make_shared<Node>()) { node_->op = op; }

  std::shared_ptr<Node> node_;
};

/// Variable -> truth value map; every stored value lies in [0,1].
class Assignment {
 public:
  Assignment() = default;
  Assignment(std::initializer_list<std::pair<const std::string, double>> values) {
    for (const auto& [k, v] : values) set(k, v);
  }

  void set(const std::string& variable, double value) {
    if (!(value >= 0.0 && value <= 1.0))
      throw DomainError("value " + std::to_string(value) + " for '" + variable + "' outside [0,1]");
    values_[variable] = value;
  }

  double at(const std::string& variable) const {
    auto it = values_.find(variable);
    if (it == values_.end()) throw UnboundVariable(variable);
    return it->second;
  }

  bool contains(const std::string& variable) const { return values_.count(variable) != 0; }
  std::size_t size() const { return values_.size(); }
  const std::map<std::string, double>& values() const { return values_; }

 private:
  std::map<std::string, double> values_;
};

namespace detail {

inline void collect_variables(const Formula& f, std::set<std::string>& out) {
  switch (f.op()) {
    case Op::Var:
    case Op::Atom: out.insert(f.key()); return;
    case Op::Const0:
    case Op::Const1: return;
    default:
      for (const auto& c : f.children()) collect_variables(c, out);
  }
}

inline bool contains_op(const Formula& f, bool (*pred)(Op)) {
  if (pred(f.op())) return true;
  for (const auto& c : f.children())
    if (contains_op(c, pred)) return true;
  return false;
}

}  // namespace detail

/// Sorted leaf keys of a formula (ground atoms included by key).
inline std::vector<std::string> variables(const Formula& f) {
  std::set<std::string> s;
  detail::collect_variables(f, s);
  return {s.begin(), s.end()};
}

inline bool has_quantifiers(const Formula& f) { return detail::contains_op(f, is_quantifier); }

inline bool is_propositional(const Formula& f) { return !has_quantifiers(f); }

inline std::size_t leaf_count(const Formula& f) {
  if (is_leaf(f.op())) return 1;
  std::size_t n = 0;
  for (const auto& c : f.children()) n += leaf_count(c);
  return n;
}

inline double strong_and(double x, double y) { return std::max(0.0, x + y - 1.0); }
inline double weak_and(double x, double y) { return std::min(x, y); }
inline double strong_or(double x, double y) { return std::min(1.0, x + y); }
inline double weak_or(double x, double y) { return std::max(x, y); }
inline double implication(double x, double y) { return std::min(1.0, 1.0 - x + y); }

/// Formula compiled to a postfix program over an indexed variable vector.
/// Use it when one formula is evaluated at many points.
class CompiledFormula {
 public:
  explicit CompiledFormula(const Formula& f) : CompiledFormula(f, luk::variables(f)) {}

  CompiledFormula(const Formula& f, std::vector<std::string> order) : order_(std::move(order)) {
    if (has_quantifiers(f)) throw std::invalid_argument("cannot evaluate a quantified formula; ground it first");
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < order_.size(); ++i) index.emplace(order_[i], i);
    emit(f, index);
  }

  const std::vector<std::string>& variables() const { return order_; }

  double operator()(std::span<const double> x) const {
    if (x.size() != order_.size()) throw std::invalid_argument("CompiledFormula: point dimension mismatch");
    std::vector<double> stack;
    stack.reserve(program_.size());
    for (const auto& ins : program_) {
      switch (ins.op) {
        case Op::Const0: stack.push_back(0.0); break;
        case Op::Const1: stack.push_back(1.0); break;
        case Op::Var: stack.push_back(x[ins.arg]); break;
        case Op::Not: stack.back() = 1.0 - stack.back(); break;
        default: {
          double acc = stack[stack.size() - ins.arg];
          for (std::size_t k = stack.size() - ins.arg + 1; k < stack.size(); ++k) acc = apply(ins.op, acc, stack[k]);
          stack.resize(stack.size() - ins.arg);
          stack.push_back(acc);
        }
      }
    }
    return stack.back();
  }

  /// Value and one subgradient (exact gradient wherever the function is
  /// differentiable; ties at kinks break toward the first operand).
  double value_and_gradient(std::span<const double> x, std::span<double> grad) const {
    const std::size_t n = order_.size();
    if (x.size() != n || grad.size() != n) throw std::invalid_argument("value_and_gradient: dimension mismatch");
    struct Dual {
      double v;
      std::vector<double> d;
    };
    std::vector<Dual> stack;
    for (const auto& ins : program_) {
      switch (ins.op) {
        case Op::Const0: stack.push_back({0.0, std::vector<double>(n, 0.0)}); break;
        case Op::Const1: stack.push_back({1.0, std::vector<double>(n, 0.0)}); break;
        case Op::Var: {
          Dual d{x[ins.arg], std::vector<double>(n, 0.0)};
          d.d[ins.arg] = 1.0;
          stack.push_back(std::move(d));
          break;
        }
        case Op::Not: {
          auto& t = stack.back();
          t.v = 1.0 - t.v;
          for (auto& g : t.d) g = -g;
          break;
        }
        default: {
          const std::size_t first = stack.size() - ins.arg;
          Dual acc = std::move(stack[first]);
          for (std::size_t k = first + 1; k < stack.size(); ++k) combine(ins.op, acc, stack[k]);
          stack.resize(first);
          stack.push_back(std::move(acc));
        }
      }
    }
    std::copy(stack.back().d.begin(), stack.back().d.end(), grad.begin());
    return stack.back().v;
  }

 private:
  struct Instruction {
    Op op;
    std::size_t arg;  // variable index, or operand count
  };

  static double apply(Op op, double a, double b) {
    switch (op) {
      case Op::StrongAnd: return strong_and(a, b);
      case Op::WeakAnd: return weak_and(a, b);
      case Op::StrongOr: return strong_or(a, b);
      case Op::WeakOr: return weak_or(a, b);
      case Op::Implies: return implication(a, b);
      default: throw std::logic_error("apply: not a binary connective");
    }
  }

  template <class Dual>
  static void combine(Op op, Dual& acc, const Dual& rhs) {
    const double a = acc.v, b = rhs.v;
    auto sum = [&](double sb) {
      for (std::size_t i = 0; i < acc.d.size(); ++i) acc.d[i] += sb * rhs.d[i];
    };
    auto take_rhs = [&] { acc.d = rhs.d; };
    auto zero = [&] { std::fill(acc.d.begin(), acc.d.end(), 0.0); };
    switch (op) {
      case Op::StrongAnd:
        if (a + b - 1.0 > 0.0) sum(1.0); else zero();
        acc.v = strong_and(a, b);
        break;
      case Op::StrongOr:
        if (a + b < 1.0) sum(1.0); else zero();
        acc.v = strong_or(a, b);
        break;
      case Op::WeakAnd:
        if (b < a) take_rhs();
        acc.v = weak_and(a, b);
        break;
      case Op::WeakOr:
        if (b > a) take_rhs();
        acc.v = weak_or(a, b);
        break;
      case Op::Implies:
        if (1.0 - a + b < 1.0) {
          for (std::size_t i = 0; i < acc.d.size(); ++i) acc.d[i] = rhs.d[i] - acc.d[i];
        } else {
          zero();
        }
        acc.v = implication(a, b);
        break;
      default: throw std::logic_error("combine: not a binary connective");
    }
  }

  void emit(const Formula& f, const std::unordered_map<std::string, std::size_t>& index) {
    switch (f.op()) {
      case Op::Const0:
      case Op::Const1: program_.push_back({f.op(), 0}); return;
      case Op::Var:
      case Op::Atom: {
        auto it = index.find(f.key());
        if (it == index.end()) throw UnboundVariable(f.key());
        program_.push_back({Op::Var, it->second});
        return;
      }
      case Op::Not:
        emit(f.child(0), index);
        program_.push_back({Op::Not, 0});
        return;
      default:
        for (const auto& c : f.children()) emit(c, index);
        program_.push_back({f.op(), f.children().size()});
    }
  }

  std::vector<std::string> order_;
  std::vector<Instruction> program_;
};

/// Truth value of a propositional formula under an assignment.
inline double evaluate(const Formula& f, const Assignment& a) {
  switch (f.op()) {
    case Op::Const0: return 0.0;
    case Op::Const1: return 1.0;
    case Op::Var:
    case Op::Atom: return a.at(f.key());
    case Op::Not: return 1.0 - evaluate(f.child(0), a);
    case Op::Implies: return implication(evaluate(f.child(0), a), evaluate(f.child(1), a));
    case Op::ForAll:
    case Op::Exists: throw std::invalid_argument("cannot evaluate a quantified formula; ground it first");
    default: {
      double acc = evaluate(f.child(0), a);
      for (std::size_t i = 1; i < f.children().size(); ++i) {
        const double v = evaluate(f.child(i), a);
        switch (f.op()) {
          case Op::StrongAnd: acc = strong_and(acc, v); break;
          case Op::WeakAnd: acc = weak_and(acc, v); break;
          case Op::StrongOr: acc = strong_or(acc, v); break;
          default: acc = weak_or(acc, v); break;
        }
      }
      return acc;
    }
  }
}

/// Calls fn(point) for every point of the uniform grid with `steps` values per
/// axis over [0,1]^n.
template <class Fn>
void for_each_grid_point(std::size_t n, std::size_t steps, Fn&& fn) {
  if (steps == 0) throw std::invalid_argument("grid steps must be positive");
  std::vector<std::size_t> idx(n, 0);
  std::vector<double> point(n, 0.0);
  auto coord = [steps](std::size_t k) { return steps == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(steps - 1); };
  for (std::size_t i = 0; i < n; ++i) point[i] = coord(0);
  while (true) {
    fn(std::span<const double>(point));
    std::size_t axis = 0;
    while (axis < n && ++idx[axis] == steps) {
      idx[axis] = 0;
      point[axis] = coord(0);
      ++axis;
    }
    if (axis == n) return;
    point[axis] = coord(idx[axis]);
  }
}

/// True iff f and g agree within 1e-12 on every point of the uniform grid.
inline bool equivalent_on_grid(const Formula& f, const Formula& g, std::size_t steps) {
  auto vf = variables(f);
  auto vg = variables(g);
  if (vf != vg) throw VariableMismatch("formulas range over different variable sets");
  const CompiledFormula cf(f, vf), cg(g, vf);
  bool equal = true;
  for_each_grid_point(vf.size(), steps, [&](std::span<const double> x) {
    if (equal && std::abs(cf(x) - cg(x)) > 1e-12) equal = false;
  });
  return equal;
}

}  // namespace luk

#endif  // LUK_FORMULA_HPP
