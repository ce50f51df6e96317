#ifndef LUK_NORMALIZE_HPP
#define LUK_NORMALIZE_HPP

// Negation normal form, fragment classification, and CNF fuzzification.

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "luk/error.hpp"
#include "luk/formula.hpp"

namespace luk {

enum class FragmentLabel { Concave, Convex, Both, Neither };

inline const char* to_string(FragmentLabel label) {
  switch (label) {
    case FragmentLabel::Concave: return "concave";
    case FragmentLabel::Convex: return "convex";
    case FragmentLabel::Both: return "both";
    case FragmentLabel::Neither: return "neither";
  }
  return "?";
}

namespace detail {

inline Op dual(Op op) {
  switch (op) {
    case Op::StrongAnd: return Op::StrongOr;
    case Op::StrongOr: return Op::StrongAnd;
    case Op::WeakAnd: return Op::WeakOr;
    case Op::WeakOr: return Op::WeakAnd;
    case Op::ForAll: return Op::Exists;
    case Op::Exists: return Op::ForAll;
    case Op::Const0: return Op::Const1;
    case Op::Const1: return Op::Const0;
    default: return op;
  }
}

inline Formula nnf(const Formula& f, bool negated) {
  switch (f.op()) {
    case Op::Const0:
    case Op::Const1: return Formula::constant((f.op() == Op::Const1) != negated);
    case Op::Var:
    case Op::Atom: return negated ? Formula::negation(f) : f;
    case Op::Not: return nnf(f.child(0), !negated);
    case Op::Implies:
      // a -> b == ~a + b
      if (negated) return Formula::nary(Op::StrongAnd, {nnf(f.child(0), false), nnf(f.child(1), true)});
      return Formula::nary(Op::StrongOr, {nnf(f.child(0), true), nnf(f.child(1), false)});
    case Op::ForAll:
    case Op::Exists:
      return Formula::quantified(negated ? dual(f.op()) : f.op(), f.name(), nnf(f.child(0), negated));
    default: {
      std::vector<Formula> kids;
      kids.reserve(f.children().size());
      for (const auto& c : f.children()) kids.push_back(nnf(c, negated));
      return Formula::nary(negated ? dual(f.op()) : f.op(), kids);
    }
  }
}

}  // namespace detail

/// Eliminates implications and pushes negations onto literals. The result is
/// semantically identical to the input.
inline Formula normalize(const Formula& f) { return detail::nnf(f, false); }

inline bool is_normalized(const Formula& f) {
  switch (f.op()) {
    case Op::Implies: return false;
    case Op::Not: return f.is_literal();
    default:
      for (const auto& c : f.children())
        if (!is_normalized(c)) return false;
      return true;
  }
}

namespace detail {

inline FragmentLabel combine_label(Op op, const std::vector<FragmentLabel>& kids) {
  // Quantifiers expand to weak connectives over finite domains.
  const bool concave_op = op == Op::WeakAnd || op == Op::StrongOr || op == Op::ForAll;
  const bool convex_op = op == Op::StrongAnd || op == Op::WeakOr || op == Op::Exists;
  bool all_concave = true, all_convex = true;
  for (auto k : kids) {
    all_concave = all_concave && (k == FragmentLabel::Concave || k == FragmentLabel::Both);
    all_convex = all_convex && (k == FragmentLabel::Convex || k == FragmentLabel::Both);
  }
  if (concave_op && all_concave) return FragmentLabel::Concave;
  if (convex_op && all_convex) return FragmentLabel::Convex;
  return FragmentLabel::Neither;
}

inline FragmentLabel syntactic_label(const Formula& f) {
  if (is_leaf(f.op()) || f.is_literal()) return FragmentLabel::Both;
  std::vector<FragmentLabel> kids;
  for (const auto& c : f.children()) kids.push_back(syntactic_label(c));
  return combine_label(f.op(), kids);
}

inline bool is_negation_of(const Formula& a, const Formula& b) {
  return (a.op() == Op::Not && a.child(0) == b) || (b.op() == Op::Not && b.child(0) == a);
}

inline bool contains_child(const Formula& parent, const Formula& x) {
  for (const auto& c : parent.children())
    if (c == x) return true;
  return false;
}

inline Formula negate_normalized(const Formula& f) { return nnf(f, true); }

// One bottom-up pass of sound identities. Returns the rewritten formula.
inline Formula simplify_once(const Formula& f) {
  if (is_leaf(f.op()) || f.op() == Op::Not) return f;
  if (is_quantifier(f.op())) return Formula::quantified(f.op(), f.name(), simplify_once(f.child(0)));
  if (f.op() == Op::Implies) return f;

  std::vector<Formula> kids;
  for (const auto& c : f.children()) kids.push_back(simplify_once(c));
  const Op op = f.op();
  const bool conj = op == Op::StrongAnd || op == Op::WeakAnd;
  const Op absorbing = conj ? Op::Const0 : Op::Const1;
  const Op neutral = conj ? Op::Const1 : Op::Const0;

  // Constant laws.
  std::vector<Formula> kept;
  for (const auto& k : kids) {
    if (k.op() == absorbing) return Formula(k);
    if (k.op() != neutral) kept.push_back(k);
  }
  if (kept.empty()) return Formula::constant(neutral == Op::Const1);

  // Idempotence (weak connectives only).
  if (op == Op::WeakAnd || op == Op::WeakOr) {
    std::vector<Formula> unique;
    for (const auto& k : kept) {
      bool dup = false;
      for (const auto& u : unique) dup = dup || (u == k);
      if (!dup) unique.push_back(k);
    }
    kept = std::move(unique);
  }

  // Complementary operands under strong connectives: x * ~x = 0, x + ~x = 1.
  if (op == Op::StrongAnd || op == Op::StrongOr) {
    for (std::size_t i = 0; i < kept.size(); ++i)
      for (std::size_t j = i + 1; j < kept.size(); ++j)
        if (is_negation_of(kept[i], kept[j])) return Formula::constant(op == Op::StrongOr);
  }

  // Absorption: a ^ (a | b) = a, a ^ (a + b) = a, a | (a ^ b) = a, a | (a * b) = a.
  if (op == Op::WeakAnd || op == Op::WeakOr) {
    const Op weak_partner = op == Op::WeakAnd ? Op::WeakOr : Op::WeakAnd;
    const Op strong_partner = op == Op::WeakAnd ? Op::StrongOr : Op::StrongAnd;
    std::vector<Formula> survivors;
    for (std::size_t i = 0; i < kept.size(); ++i) {
      const Formula& k = kept[i];
      bool absorbed = false;
      if (k.op() == weak_partner || k.op() == strong_partner) {
        for (std::size_t j = 0; j < kept.size() && !absorbed; ++j)
          if (j != i && contains_child(k, kept[j])) absorbed = true;
      }
      if (!absorbed) survivors.push_back(k);
    }
    kept = std::move(survivors);
  }

  // MV definitions of the weak connectives:
  //   a * (~a + b) = a ^ b      a + (~a * b) = a | b
  if (op == Op::StrongAnd || op == Op::StrongOr) {
    const Op inner = op == Op::StrongAnd ? Op::StrongOr : Op::StrongAnd;
    const Op weak = op == Op::StrongAnd ? Op::WeakAnd : Op::WeakOr;
    for (std::size_t i = 0; i < kept.size(); ++i) {
      if (kept[i].op() != inner) continue;
      for (std::size_t j = 0; j < kept.size(); ++j) {
        if (j == i) continue;
        const Formula neg = negate_normalized(kept[j]);
        const auto& grand = kept[i].children();
        for (std::size_t g = 0; g < grand.size(); ++g) {
          if (!(grand[g] == neg)) continue;
          std::vector<Formula> rest;
          for (std::size_t r = 0; r < grand.size(); ++r)
            if (r != g) rest.push_back(grand[r]);
          Formula merged = Formula::nary(weak, {kept[j], Formula::nary(inner, rest)});
          std::vector<Formula> out;
          for (std::size_t r = 0; r < kept.size(); ++r)
            if (r != i && r != j) out.push_back(kept[r]);
          out.push_back(merged);
          return Formula::nary(op, out);
        }
      }
    }
  }

  return Formula::nary(op, kept);
}

}  // namespace detail

/// Applies sound identities (constant laws, idempotence, complements,
/// absorption, MV definitions of the weak connectives) to a fixpoint.
/// Input and output are normalized and equivalent.
inline Formula simplify(const Formula& f) {
  Formula cur = f;
  for (int pass = 0; pass < 64; ++pass) {
    Formula nxt = detail::simplify_once(cur);
    if (nxt == cur) return cur;
    cur = std::move(nxt);
  }
  return cur;
}

/// Result of placing a formula in a fragment: the label and the (possibly
/// rewritten) normalized formula that is syntactically in that fragment.
struct Classified {
  FragmentLabel label;
  Formula formula;
};

/// Syntactic membership on a normalized formula, with the identity library
/// of simplify() as fallback before answering Neither.
inline Classified classify_with_witness(const Formula& f) {
  if (!is_normalized(f)) throw FragmentError("classify expects a normalized formula");
  FragmentLabel label = detail::syntactic_label(f);
  if (label != FragmentLabel::Neither) return {label, f};
  Formula rewritten = simplify(f);
  label = detail::syntactic_label(rewritten);
  if (label != FragmentLabel::Neither) return {label, rewritten};
  return {FragmentLabel::Neither, f};
}

inline FragmentLabel classify(const Formula& f) { return classify_with_witness(f).label; }

/// Describes where a Neither formula leaves both fragments, e.g.
/// "strong conjunction (*) over strong disjunction (+) at root.1".
inline std::string explain_neither(const Formula& f, const std::string& path = "root") {
  if (is_leaf(f.op()) || f.is_literal()) return "";
  std::vector<FragmentLabel> kids;
  for (std::size_t i = 0; i < f.children().size(); ++i) {
    std::string inner = explain_neither(f.child(i), path + "." + std::to_string(i));
    if (!inner.empty()) return inner;
    kids.push_back(detail::syntactic_label(f.child(i)));
  }
  if (f.op() == Op::Implies || f.op() == Op::Not)
    return std::string(op_name(f.op())) + " at " + path + " (formula is not normalized)";
  if (detail::combine_label(f.op(), kids) != FragmentLabel::Neither) return "";
  for (std::size_t i = 0; i < f.children().size(); ++i) {
    const FragmentLabel k = kids[i];
    if (k == FragmentLabel::Both) continue;
    const Op c = f.child(i).op();
    const bool parent_concave = f.op() == Op::WeakAnd || f.op() == Op::StrongOr || f.op() == Op::ForAll;
    if ((parent_concave && k != FragmentLabel::Concave) || (!parent_concave && k != FragmentLabel::Convex))
      return std::string(op_name(f.op())) + " (" + op_symbol(f.op()) + ") over " + op_name(c) + " (" +
             op_symbol(c) + ") at " + path + "." + std::to_string(i);
  }
  return std::string(op_name(f.op())) + " at " + path;
}

struct Literal {
  std::string variable;
  bool positive = true;
};

using Clause = std::vector<Literal>;

/// How boolean (and, or) map onto Lukasiewicz connectives.
enum class CnfTranslation {
  Concave,     // (^, +): weak conjunction of strong disjunctions
  Convex,      // (*, |): strong conjunction of weak disjunctions
  StrongPair,  // (*, +): t-norm / t-conorm, generally in neither fragment
};

/// Fuzzifies a boolean CNF. Literal names become propositional variables, or
/// atoms when they contain '(' (as in "A(x)").
inline Formula fuzzify_cnf(const std::vector<Clause>& clauses, CnfTranslation target) {
  if (clauses.empty()) throw std::invalid_argument("fuzzify_cnf: empty clause set");
  const Op conj = target == CnfTranslation::Concave ? Op::WeakAnd : Op::StrongAnd;
  const Op disj = target == CnfTranslation::Convex ? Op::WeakOr : Op::StrongOr;
  auto leaf = [](const std::string& name) {
    const auto open = name.find('(');
    if (open == std::string::npos || name.back() != ')') return Formula::var(name);
    std::vector<std::string> args;
    std::string cur;
    for (std::size_t i = open + 1; i + 1 < name.size(); ++i) {
      if (name[i] == ',') {
        args.push_back(cur);
        cur.clear();
      } else if (name[i] != ' ') {
        cur += name[i];
      }
    }
    if (!cur.empty()) args.push_back(cur);
    return Formula::atom(name.substr(0, open), args);
  };
  std::vector<Formula> conjuncts;
  for (const auto& clause : clauses) {
    if (clause.empty()) throw std::invalid_argument("fuzzify_cnf: empty clause");
    std::vector<Formula> lits;
    for (const auto& l : clause) {
      Formula v = leaf(l.variable);
      lits.push_back(l.positive ? v : Formula::negation(v));
    }
    conjuncts.push_back(Formula::nary(disj, lits));
  }
  return Formula::nary(conj, conjuncts);
}

}  // namespace luk

#endif  // LUK_NORMALIZE_HPP
