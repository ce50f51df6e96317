#ifndef LUK_TESTS_SUPPORT_HPP
#define LUK_TESTS_SUPPORT_HPP

// Shared generators and independent oracles for the test binaries.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "luk/formula.hpp"
#include "luk/normalize.hpp"
#include "luk/parser.hpp"
#include "luk/qp.hpp"

namespace luk::testing {

// --- formulas ------------------------------------------------------------------

inline std::vector<std::string> var_names(std::size_t n) {
  std::vector<std::string> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back("v" + std::to_string(i));
  return v;
}

/// Random formula whose binary connectives are drawn from `ops`; leaves are
/// literals over `nvars` variables, occasionally constants.
inline Formula random_formula(std::mt19937_64& rng, const std::vector<Op>& ops, std::size_t nvars, int depth) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (depth == 0 || u(rng) < 0.25) {
    if (u(rng) < 0.08) return u(rng) < 0.5 ? Formula::zero() : Formula::one();
    Formula v = Formula::var("v" + std::to_string(std::uniform_int_distribution<std::size_t>(0, nvars - 1)(rng)));
    return u(rng) < 0.4 ? Formula::negation(v) : v;
  }
  const Op op = ops[std::uniform_int_distribution<std::size_t>(0, ops.size() - 1)(rng)];
  if (op == Op::Not) return Formula::negation(random_formula(rng, ops, nvars, depth - 1));
  Formula l = random_formula(rng, ops, nvars, depth - 1);
  Formula r = random_formula(rng, ops, nvars, depth - 1);
  return Formula::binary(op, l, r);
}

inline Formula random_concave(std::mt19937_64& rng, std::size_t nvars, int depth) {
  return random_formula(rng, {Op::WeakAnd, Op::StrongOr}, nvars, depth);
}

inline Formula random_convex(std::mt19937_64& rng, std::size_t nvars, int depth) {
  return random_formula(rng, {Op::StrongAnd, Op::WeakOr}, nvars, depth);
}

inline Formula random_any(std::mt19937_64& rng, std::size_t nvars, int depth) {
  return random_formula(rng, {Op::StrongAnd, Op::WeakAnd, Op::StrongOr, Op::WeakOr, Op::Implies, Op::Not}, nvars,
                        depth);
}

/// Worked examples that must land in a fragment, as source text.
inline std::vector<std::string> worked_examples() {
  return {"((x ^ y) + ~y + z) ^ ~z",
          "(x1 + ~x2) ^ (x1 + x2)",
          "x ^ (x -> y)",
          "(x1 * x2 * x3) -> y",
          "(x * ~y) | (~x * y)",
          "(~a + ~b + c) ^ (~a + ~b + d)",
          "(~a | ~b | c) * (~a | ~b | d)",
          "(x -> y) ^ (y -> x)",
          "~x + y",
          "x"};
}

/// The generated corpus: `per_kind` concave and `per_kind` convex formulas
/// with at most 6 variables and depth at most 5, each in its fragment.
inline std::vector<Formula> fragment_corpus(std::uint64_t seed, std::size_t per_kind) {
  std::mt19937_64 rng(seed);
  std::vector<Formula> out;
  for (int kind = 0; kind < 2; ++kind) {
    std::size_t made = 0;
    while (made < per_kind) {
      const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
      const int depth = std::uniform_int_distribution<int>(1, 5)(rng);
      Formula f = kind == 0 ? random_concave(rng, n, depth) : random_convex(rng, n, depth);
      if (variables(f).empty()) continue;
      out.push_back(f);
      ++made;
    }
  }
  for (const auto& s : worked_examples()) out.push_back(parse_formula(s));
  return out;
}

inline std::vector<double> random_point(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(n);
  for (auto& v : x) v = u(rng);
  return x;
}

inline Assignment to_assignment(const std::vector<std::string>& vars, const std::vector<double>& x) {
  Assignment a;
  for (std::size_t i = 0; i < vars.size(); ++i) a.set(vars[i], x[i]);
  return a;
}

// --- QP ------------------------------------------------------------------------

/// Random strictly convex QP with a feasible interior point: Q = BᵀB + 0.1 I,
/// rows A z <= A z0 + s with s >= 0, some variables boxed around z0.
inline QPProblem random_qp(std::mt19937_64& rng, Eigen::Index n, Eigen::Index m) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  QPProblem p(n, m);
  MatrixXd B(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) B(i, j) = g(rng);
  p.Q = B.transpose() * B + 0.1 * MatrixXd::Identity(n, n);
  VectorXd z0(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    p.c[i] = 3.0 * g(rng);
    z0[i] = g(rng);
    if (u(rng) < 0.6) p.l[i] = z0[i] - 0.2 - u(rng);
    if (u(rng) < 0.6) p.u[i] = z0[i] + 0.2 + u(rng);
  }
  for (Eigen::Index r = 0; r < m; ++r) {
    for (Eigen::Index i = 0; i < n; ++i) p.A(r, i) = g(rng);
    p.b[r] = p.A.row(r).dot(z0) + 0.5 * u(rng);
  }
  return p;
}

struct OracleSolution {
  VectorXd z;
  double objective = 0.0;
};

/// Exhaustive active-set oracle for strictly convex QPs: tries every set of at
/// most n active constraints (rows and finite bounds, never both bounds of one
/// variable), solves the equality-constrained KKT system, and returns the
/// point that is primal feasible with nonnegative multipliers.
inline std::optional<OracleSolution> active_set_oracle(const QPProblem& p, double tol = 1e-9) {
  const Eigen::Index n = p.num_variables();
  struct Con {
    VectorXd a;
    double b;
    Eigen::Index var;  // -1 for a row
  };
  std::vector<Con> cons;
  for (Eigen::Index r = 0; r < p.num_rows(); ++r) cons.push_back({p.A.row(r).transpose(), p.b[r], -1});
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::isfinite(p.u[i])) cons.push_back({VectorXd::Unit(n, i), p.u[i], i});
    if (std::isfinite(p.l[i])) cons.push_back({-VectorXd::Unit(n, i), -p.l[i], i});
  }
  const std::size_t K = cons.size();
  std::optional<OracleSolution> found;
  std::vector<std::size_t> chosen;
  auto try_set = [&]() -> bool {
    const auto k = static_cast<Eigen::Index>(chosen.size());
    MatrixXd KKT = MatrixXd::Zero(n + k, n + k);
    VectorXd rhs(n + k);
    KKT.topLeftCorner(n, n) = p.Q;
    rhs.head(n) = -p.c;
    for (Eigen::Index j = 0; j < k; ++j) {
      KKT.block(0, n + j, n, 1) = cons[chosen[j]].a;
      KKT.block(n + j, 0, 1, n) = cons[chosen[j]].a.transpose();
      rhs[n + j] = cons[chosen[j]].b;
    }
    Eigen::FullPivLU<MatrixXd> lu(KKT);
    if (lu.rank() < n + k) return false;
    const VectorXd sol = lu.solve(rhs);
    const VectorXd z = sol.head(n);
    for (Eigen::Index j = 0; j < k; ++j)
      if (sol[n + j] < -tol) return false;
    for (const auto& c : cons)
      if (c.a.dot(z) > c.b + tol) return false;
    found = OracleSolution{z, p.objective(z)};
    return true;
  };
  // Small active sets first.
  for (Eigen::Index size = 0; size <= n && !found; ++size) {
    std::function<bool(std::size_t, Eigen::Index)> exact = [&](std::size_t start, Eigen::Index left) -> bool {
      if (left == 0) return try_set();
      for (std::size_t i = start; i < K; ++i) {
        if (cons[i].var >= 0) {
          bool clash = false;
          for (std::size_t c : chosen) clash |= cons[c].var == cons[i].var;
          if (clash) continue;
        }
        chosen.push_back(i);
        const bool done = exact(i + 1, left - 1);
        chosen.pop_back();
        if (done) return true;
      }
      return false;
    };
    exact(0, size);
  }
  return found;
}

/// Minimum of a function over a uniform grid of [lo, hi]^2.
template <class Fn>
std::pair<Eigen::Vector2d, double> grid_minimum_2d(Fn&& f, double lo, double hi, double step) {
  Eigen::Vector2d best(lo, lo);
  double bv = std::numeric_limits<double>::infinity();
  const int N = static_cast<int>(std::round((hi - lo) / step));
  for (int i = 0; i <= N; ++i)
    for (int j = 0; j <= N; ++j) {
      const Eigen::Vector2d x(lo + i * step, lo + j * step);
      const double v = f(x);
      if (v < bv) {
        bv = v;
        best = x;
      }
    }
  return {best, bv};
}

}  // namespace luk::testing

#endif  // LUK_TESTS_SUPPORT_HPP
