#ifndef LUK_MCNAUGHTON_HPP
#define LUK_MCNAUGHTON_HPP

// Exact min-of-affine / max-of-affine forms for fragment formulas.
//
// A concave-fragment formula is a weak conjunction of strong disjunctions
// once strong disjunction is distributed over weak conjunction; every strong
// disjunction of literals is one affine piece capped at 1. Convex formulas
// are compiled through their negation.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "luk/error.hpp"
#include "luk/formula.hpp"
#include "luk/normalize.hpp"

namespace luk {

struct AffinePiece {
  std::vector<std::int64_t> coefficients;
  std::int64_t intercept = 0;

  double value(std::span<const double> x) const {
    double v = static_cast<double>(intercept);
    for (std::size_t i = 0; i < coefficients.size(); ++i)
      if (coefficients[i] != 0) v += static_cast<double>(coefficients[i]) * x[i];
    return v;
  }

  bool is_constant() const {
    return std::all_of(coefficients.begin(), coefficients.end(), [](std::int64_t c) { return c == 0; });
  }

  friend bool operator==(const AffinePiece&, const AffinePiece&) = default;
};

enum class EnvelopeKind { MinOfAffine, MaxOfAffine };

struct PiecewiseLinearForm {
  EnvelopeKind kind = EnvelopeKind::MinOfAffine;
  std::vector<std::string> variables;
  std::vector<AffinePiece> pieces;

  double evaluate(std::span<const double> x) const {
    if (x.size() != variables.size()) throw std::invalid_argument("envelope: point dimension mismatch");
    if (pieces.empty()) throw std::logic_error("envelope: no pieces");
    double v = pieces.front().value(x);
    for (std::size_t i = 1; i < pieces.size(); ++i) {
      const double p = pieces[i].value(x);
      v = kind == EnvelopeKind::MinOfAffine ? std::min(v, p) : std::max(v, p);
    }
    return v;
  }

  double evaluate(const Assignment& a) const {
    std::vector<double> x;
    for (const auto& v : variables) x.push_back(a.at(v));
    return evaluate(x);
  }

  /// The implicit cap (min) or floor (max) piece: zero row, intercept 1 or 0.
  AffinePiece bound_piece() const {
    return {std::vector<std::int64_t>(variables.size(), 0), kind == EnvelopeKind::MinOfAffine ? 1 : 0};
  }

  bool is_bound_piece(const AffinePiece& p) const { return p == bound_piece(); }

  std::int64_t max_abs_coefficient() const {
    std::int64_t m = 0;
    for (const auto& p : pieces)
      for (auto c : p.coefficients) m = std::max(m, c < 0 ? -c : c);
    return m;
  }
};

namespace detail {

inline std::int64_t checked_add(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_add_overflow(a, b, &r)) throw OverflowError("integer coefficient overflow");
  return r;
}

inline std::int64_t checked_neg(std::int64_t a) {
  if (a == std::numeric_limits<std::int64_t>::min()) throw OverflowError("integer coefficient overflow");
  return -a;
}

// max over the unit cube of (a - b)
inline std::int64_t max_difference(const AffinePiece& a, const AffinePiece& b) {
  std::int64_t acc = checked_add(a.intercept, checked_neg(b.intercept));
  for (std::size_t k = 0; k < a.coefficients.size(); ++k) {
    const std::int64_t d = checked_add(a.coefficients[k], checked_neg(b.coefficients[k]));
    if (d > 0) acc = checked_add(acc, d);
  }
  return acc;
}

// Keeps pieces that are not dominated by another one. `dominates(j, i)` means
// piece j makes piece i redundant. Pieces listed in `keep` always survive.
inline std::vector<AffinePiece> prune_pieces(std::vector<AffinePiece> pieces, EnvelopeKind kind,
                                             const AffinePiece* keep) {
  std::vector<AffinePiece> unique;
  for (auto& p : pieces)
    if (std::find(unique.begin(), unique.end(), p) == unique.end()) unique.push_back(std::move(p));
  std::vector<AffinePiece> out;
  for (std::size_t i = 0; i < unique.size(); ++i) {
    if (keep && unique[i] == *keep) {
      out.push_back(unique[i]);
      continue;
    }
    bool dominated = false;
    for (std::size_t j = 0; j < unique.size() && !dominated; ++j) {
      if (i == j) continue;
      // Min: j <= i everywhere. Max: j >= i everywhere.
      dominated = kind == EnvelopeKind::MinOfAffine ? max_difference(unique[j], unique[i]) <= 0
                                                     : max_difference(unique[i], unique[j]) <= 0;
    }
    if (!dominated) out.push_back(unique[i]);
  }
  return out;
}

// Non-cap pieces of a concave-fragment formula; the envelope is
// min{1, pieces...}. An empty list stands for the constant 1.
class ConcaveCompiler {
 public:
  explicit ConcaveCompiler(const std::vector<std::string>& order) : n_(order.size()) {
    for (std::size_t i = 0; i < order.size(); ++i) index_.emplace(order[i], i);
    cap_ = {std::vector<std::int64_t>(n_, 0), 1};
  }

  const std::vector<AffinePiece>& pieces(const Formula& f) {
    auto it = memo_.find(f.identity());
    if (it != memo_.end()) return it->second.second;
    std::vector<AffinePiece> out = build(f);
    // hold a reference to f so the memo key stays unique
    auto [pos, _] = memo_.emplace(f.identity(), std::make_pair(f, std::move(out)));
    return pos->second.second;
  }

 private:
  std::size_t var_index(const Formula& leaf) const {
    auto it = index_.find(leaf.key());
    if (it == index_.end()) throw UnboundVariable(leaf.key());
    return it->second;
  }

  std::vector<AffinePiece> prune(std::vector<AffinePiece> ps) const {
    // Pieces dominated by the cap are redundant too.
    ps.push_back(cap_);
    auto out = prune_pieces(std::move(ps), EnvelopeKind::MinOfAffine, &cap_);
    out.erase(std::remove(out.begin(), out.end(), cap_), out.end());
    return out;
  }

  std::vector<AffinePiece> build(const Formula& f) {
    switch (f.op()) {
      case Op::Const1: return {};
      case Op::Const0: return {AffinePiece{std::vector<std::int64_t>(n_, 0), 0}};
      case Op::Var:
      case Op::Atom: {
        AffinePiece p{std::vector<std::int64_t>(n_, 0), 0};
        p.coefficients[var_index(f)] = 1;
        return {p};
      }
      case Op::Not: {
        if (!f.is_literal()) throw FragmentError("compile expects a normalized formula");
        AffinePiece p{std::vector<std::int64_t>(n_, 0), 1};
        p.coefficients[var_index(f.child(0))] = -1;
        return {p};
      }
      case Op::WeakAnd: {
        std::vector<AffinePiece> all;
        for (const auto& c : f.children()) {
          const auto& ps = pieces(c);
          all.insert(all.end(), ps.begin(), ps.end());
        }
        return prune(std::move(all));
      }
      case Op::StrongOr: {
        // min{1, min_i a_i + min_j b_j} = min{1, min_ij (a_i + b_j)}: every
        // piece is nonnegative on the cube, so sums involving the cap are >= 1.
        std::vector<AffinePiece> acc = pieces(f.child(0));
        for (std::size_t k = 1; k < f.children().size(); ++k) {
          const auto& rhs = pieces(f.child(k));
          std::vector<AffinePiece> next;
          next.reserve(acc.size() * rhs.size());
          for (const auto& a : acc)
            for (const auto& b : rhs) {
              AffinePiece s{std::vector<std::int64_t>(n_, 0), checked_add(a.intercept, b.intercept)};
              for (std::size_t i = 0; i < n_; ++i) s.coefficients[i] = checked_add(a.coefficients[i], b.coefficients[i]);
              next.push_back(std::move(s));
            }
          acc = prune(std::move(next));
        }
        return acc;
      }
      default:
        throw FragmentError(std::string("compile: ") + op_name(f.op()) + " is not a concave-fragment connective");
    }
  }

  std::size_t n_;
  std::unordered_map<std::string, std::size_t> index_;
  AffinePiece cap_;
  std::unordered_map<const void*, std::pair<Formula, std::vector<AffinePiece>>> memo_;
};

}  // namespace detail

/// Removes pieces dominated by another piece on [0,1]^n, decided exactly at
/// the cube vertex maximizing the coefficient difference. Identical pieces are
/// merged. The cap (min) or floor (max) piece is never removed.
inline PiecewiseLinearForm prune_dominated(const PiecewiseLinearForm& p) {
  PiecewiseLinearForm out = p;
  const AffinePiece bound = p.bound_piece();
  const bool has_bound = std::find(p.pieces.begin(), p.pieces.end(), bound) != p.pieces.end();
  out.pieces = detail::prune_pieces(p.pieces, p.kind, has_bound ? &bound : nullptr);
  return out;
}

/// 1 - min{a_i} = max{1 - a_i}: flips the kind, maps (M, q) to (-M, 1-q).
inline PiecewiseLinearForm negate_form(const PiecewiseLinearForm& p) {
  PiecewiseLinearForm out;
  out.kind = p.kind == EnvelopeKind::MinOfAffine ? EnvelopeKind::MaxOfAffine : EnvelopeKind::MinOfAffine;
  out.variables = p.variables;
  for (const auto& piece : p.pieces) {
    AffinePiece q{{}, detail::checked_add(1, detail::checked_neg(piece.intercept))};
    for (auto c : piece.coefficients) q.coefficients.push_back(detail::checked_neg(c));
    out.pieces.push_back(std::move(q));
  }
  return out;
}

/// Compiles a fragment formula into its exact envelope. `label` must be the
/// formula's fragment (a Both formula compiles under either label). The
/// variable order defaults to the sorted leaf keys.
inline PiecewiseLinearForm compile(const Formula& f, FragmentLabel label, std::vector<std::string> order = {}) {
  if (label != FragmentLabel::Concave && label != FragmentLabel::Convex)
    throw FragmentError(std::string("compile: cannot compile under label '") + to_string(label) + "'");
  const Formula nf = normalize(f);
  const Classified c = classify_with_witness(nf);
  if (c.label == FragmentLabel::Neither)
    throw FragmentError("compile: formula is in neither fragment (" + explain_neither(nf) + ")");
  if (c.label != FragmentLabel::Both && c.label != label)
    throw FragmentError(std::string("compile: formula is ") + to_string(c.label) + ", requested " + to_string(label));
  if (order.empty()) order = variables(f);
  for (const auto& v : variables(f))
    if (std::find(order.begin(), order.end(), v) == order.end()) throw UnboundVariable(v);

  if (label == FragmentLabel::Convex) {
    // f = 1 - g with g = ~f concave.
    const Formula g = normalize(Formula::negation(c.formula));
    return negate_form(compile(g, FragmentLabel::Concave, order));
  }
  detail::ConcaveCompiler cc(order);
  PiecewiseLinearForm out;
  out.kind = EnvelopeKind::MinOfAffine;
  out.variables = order;
  out.pieces.push_back(out.bound_piece());
  for (const auto& p : cc.pieces(c.formula)) out.pieces.push_back(p);
  return prune_dominated(out);
}

/// Rebuilds a concave-fragment formula from a min-of-affine form: each piece
/// sum_j a_j x_j + b becomes a strong disjunction of a_j copies of x_j,
/// |a_j| copies of ~x_j for negative a_j, and q copies of 1, where
/// q = b - sum_{a_j<0} |a_j| is the piece minimum over the cube.
inline Formula affine_to_formula(const PiecewiseLinearForm& p) {
  if (p.kind != EnvelopeKind::MinOfAffine) throw std::invalid_argument("affine_to_formula expects a min-of-affine form");
  auto leaf = [&](std::size_t j) {
    const std::string& name = p.variables[j];
    const auto open = name.find('(');
    if (open == std::string::npos || name.back() != ')') return Formula::var(name);
    std::vector<std::string> args;
    std::string cur;
    for (std::size_t i = open + 1; i + 1 < name.size(); ++i) {
      if (name[i] == ',') {
        args.push_back(cur);
        cur.clear();
      } else {
        cur += name[i];
      }
    }
    if (!cur.empty()) args.push_back(cur);
    return Formula::atom(name.substr(0, open), args);
  };
  std::vector<Formula> conjuncts;
  for (const auto& piece : p.pieces) {
    if (piece.coefficients.size() != p.variables.size()) throw std::invalid_argument("piece width mismatch");
    std::int64_t q = piece.intercept;
    for (auto a : piece.coefficients)
      if (a < 0) q = detail::checked_add(q, a);
    if (q < 0) throw DomainError("invalid envelope: piece minimum " + std::to_string(q) + " < 0 on the cube");
    if (q >= 1) continue;  // piece >= 1 everywhere, absorbed by the cap
    std::vector<Formula> terms;
    for (std::size_t j = 0; j < piece.coefficients.size(); ++j) {
      const std::int64_t a = piece.coefficients[j];
      const Formula lit = a > 0 ? leaf(j) : Formula::negation(leaf(j));
      for (std::int64_t k = 0; k < (a < 0 ? -a : a); ++k) terms.push_back(lit);
    }
    conjuncts.push_back(terms.empty() ? Formula::zero() : Formula::nary(Op::StrongOr, terms));
  }
  if (conjuncts.empty()) return Formula::one();
  return Formula::nary(Op::WeakAnd, conjuncts);
}

/// "x-y+z+1"-style rendering of one piece.
inline std::string piece_to_string(const AffinePiece& piece, const std::vector<std::string>& vars) {
  std::string terms;
  bool first_negative = false;
  for (std::size_t j = 0; j < piece.coefficients.size(); ++j) {
    const std::int64_t a = piece.coefficients[j];
    if (a == 0) continue;
    if (terms.empty()) first_negative = a < 0;
    if (a < 0) terms += '-';
    else if (!terms.empty()) terms += '+';
    const std::int64_t m = a < 0 ? -a : a;
    if (m != 1) terms += std::to_string(m) + "*";
    terms += vars[j];
  }
  if (terms.empty()) return std::to_string(piece.intercept);
  if (piece.intercept == 0) return terms;
  if (first_negative && piece.intercept > 0) return std::to_string(piece.intercept) + terms;
  return terms + (piece.intercept > 0 ? "+" : "-") + std::to_string(piece.intercept < 0 ? -piece.intercept : piece.intercept);
}

inline std::string to_string(const PiecewiseLinearForm& p) {
  std::string out = p.kind == EnvelopeKind::MinOfAffine ? "min{" : "max{";
  for (std::size_t i = 0; i < p.pieces.size(); ++i) {
    if (i) out += ", ";
    out += piece_to_string(p.pieces[i], p.variables);
  }
  return out + "}";
}

inline nlohmann::json to_json(const PiecewiseLinearForm& p) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& piece : p.pieces) rows.push_back({{"M", piece.coefficients}, {"q", piece.intercept}});
  return {{"kind", p.kind == EnvelopeKind::MinOfAffine ? "min" : "max"},
          {"variables", p.variables},
          {"pieces", std::move(rows)},
          {"text", to_string(p)}};
}

inline PiecewiseLinearForm form_from_json(const nlohmann::json& j) {
  PiecewiseLinearForm p;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "min") p.kind = EnvelopeKind::MinOfAffine;
  else if (kind == "max") p.kind = EnvelopeKind::MaxOfAffine;
  else throw std::invalid_argument("unknown envelope kind '" + kind + "'");
  p.variables = j.at("variables").get<std::vector<std::string>>();
  for (const auto& row : j.at("pieces")) {
    for (const auto& c : row.at("M"))
      if (!c.is_number_integer()) throw std::invalid_argument("non-integer coefficient in form");
    if (!row.at("q").is_number_integer()) throw std::invalid_argument("non-integer intercept in form");
    AffinePiece piece{row.at("M").get<std::vector<std::int64_t>>(), row.at("q").get<std::int64_t>()};
    if (piece.coefficients.size() != p.variables.size()) throw std::invalid_argument("piece width mismatch");
    p.pieces.push_back(std::move(piece));
  }
  if (p.pieces.empty()) throw std::invalid_argument("form without pieces");
  return p;
}

}  // namespace luk

#endif  // LUK_MCNAUGHTON_HPP
