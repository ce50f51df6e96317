#ifndef LUK_QP_HPP
#define LUK_QP_HPP

// Convex QP:  minimize ½zᵀQz + cᵀz  s.t.  Az ≤ b,  l ≤ z ≤ u.
//
// Primal-dual interior point (Mehrotra predictor-corrector). Inequality rows
// get slacks s = b - Az; finite bounds are kept strictly feasible so that
// z - l and u - z act as their own slacks. Variables whose Q column is
// diagonal and that never share a row are eliminated from the normal
// equations by a Schur complement (penalty slacks in the learning problems).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "luk/error.hpp"

namespace luk {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct QPProblem {
  MatrixXd Q;
  VectorXd c;
  MatrixXd A;
  VectorXd b;
  VectorXd l;
  VectorXd u;

  QPProblem() = default;

  /// Zero problem with n variables, m rows and no bounds.
  QPProblem(Eigen::Index n, Eigen::Index m)
      : Q(MatrixXd::Zero(n, n)),
        c(VectorXd::Zero(n)),
        A(MatrixXd::Zero(m, n)),
        b(VectorXd::Zero(m)),
        l(VectorXd::Constant(n, -kInf)),
        u(VectorXd::Constant(n, kInf)) {}

  Eigen::Index num_variables() const { return c.size(); }
  Eigen::Index num_rows() const { return b.size(); }

  double objective(const VectorXd& z) const { return 0.5 * z.dot(Q * z) + c.dot(z); }

  void check_dimensions() const {
    const auto n = c.size();
    if (Q.rows() != n || Q.cols() != n) throw std::invalid_argument("QP: Q must be n x n with n = len(c)");
    if (A.cols() != n && !(A.rows() == 0 && b.size() == 0)) throw std::invalid_argument("QP: A must have n columns");
    if (A.rows() != b.size()) throw std::invalid_argument("QP: A and b row counts differ");
    if (l.size() != n || u.size() != n) throw std::invalid_argument("QP: bound vectors must have length n");
  }
};

struct QPSettings {
  double tol = 1e-6;
  int max_iter = 50000;
  bool check_feasibility = true;  // phase-one check when the iteration stalls
};

enum class QPStatus { Optimal, NotConverged, Infeasible };

inline const char* to_string(QPStatus s) {
  switch (s) {
    case QPStatus::Optimal: return "optimal";
    case QPStatus::NotConverged: return "not_converged";
    case QPStatus::Infeasible: return "infeasible";
  }
  return "?";
}

struct KKTResiduals {
  double stationarity = 0.0;
  double primal = 0.0;
  double complementarity = 0.0;
  double max() const { return std::max({stationarity, primal, complementarity}); }
};

struct QPSolution {
  QPStatus status = QPStatus::NotConverged;
  VectorXd z;
  VectorXd lambda;
  VectorXd eta_lower;
  VectorXd eta_upper;
  double objective = 0.0;
  int iterations = 0;
  KKTResiduals residuals;
  std::vector<double> gap_history;        // average complementarity per iteration, nonincreasing
  std::vector<double> objective_history;  // primal objective per iteration
};

/// Exact KKT residuals of (z, λ, η, η̄) for p.
inline KKTResiduals kkt_residuals(const QPProblem& p, const QPSolution& s) {
  p.check_dimensions();
  const auto n = p.num_variables();
  const auto m = p.num_rows();
  if (s.z.size() != n || s.lambda.size() != m || s.eta_lower.size() != n || s.eta_upper.size() != n)
    throw std::invalid_argument("kkt_residuals: solution dimensions do not match the problem");
  KKTResiduals r;
  VectorXd grad = p.Q * s.z + p.c - s.eta_lower + s.eta_upper;
  if (m > 0) grad += p.A.transpose() * s.lambda;
  r.stationarity = n > 0 ? grad.lpNorm<Eigen::Infinity>() : 0.0;
  VectorXd slack = m > 0 ? VectorXd(p.A * s.z - p.b) : VectorXd();
  for (Eigen::Index i = 0; i < m; ++i) {
    r.primal = std::max(r.primal, slack[i]);
    r.primal = std::max(r.primal, -s.lambda[i]);
    r.complementarity = std::max(r.complementarity, std::abs(s.lambda[i] * slack[i]));
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    r.primal = std::max({r.primal, p.l[j] - s.z[j], s.z[j] - p.u[j]});
    r.primal = std::max({r.primal, -s.eta_lower[j], -s.eta_upper[j]});
    if (std::isfinite(p.l[j])) r.complementarity = std::max(r.complementarity, std::abs(s.eta_lower[j] * (s.z[j] - p.l[j])));
    if (std::isfinite(p.u[j])) r.complementarity = std::max(r.complementarity, std::abs(s.eta_upper[j] * (p.u[j] - s.z[j])));
  }
  if (!std::isfinite(r.stationarity) || !std::isfinite(r.primal) || !std::isfinite(r.complementarity))
    r.stationarity = r.primal = r.complementarity = kInf;
  return r;
}

namespace detail {

struct SparseRow {
  std::vector<int> idx;  // kept-variable columns
  std::vector<double> val;
  int elim = -1;         // position of the eliminated variable in this row, if any
  double elim_coef = 0.0;
};

// Interior-point state on the reduced problem (fixed variables removed).
class InteriorPoint {
 public:
  InteriorPoint(const QPProblem& p, const QPSettings& settings, const QPProblem& full,
                const std::vector<int>& full_index, const VectorXd& fixed_values)
      : p_(p), settings_(settings), full_(full), full_index_(full_index), fixed_values_(fixed_values) {
    n_ = static_cast<int>(p.num_variables());
    m_ = static_cast<int>(p.num_rows());
    partition();
    build_rows();
  }

  QPSolution run() {
    initialize();
    QPSolution best;
    double best_score = kInf;
    int stall = 0;
    int tiny_steps = 0;
    QPSolution out;
    for (int it = 0;; ++it) {
      QPSolution cur = expand(it);
      const double score = cur.residuals.max();
      if (score < best_score) {
        best_score = score;
        best = cur;
        stall = 0;
      } else {
        ++stall;
      }
      if (score <= settings_.tol) {
        cur.status = QPStatus::Optimal;
        finish(cur);
        return cur;
      }
      const double rp = primal_infeasibility();
      if (multiplier_max() > 1e10 && rp > settings_.tol) {
        best.status = QPStatus::Infeasible;
        finish(best);
        return best;
      }
      if (it >= settings_.max_iter || stall >= 15 || (complementarity_count() == 0 && it > 5)) break;
      const double step = iterate();
      if (std::getenv("LUK_QP_TRACE"))
        std::fprintf(stderr, "it %d mu %.3e step %.3e st %.3e pr %.3e co %.3e rp %.3e reg %.1e\n", it, mu_, step,
                     cur.residuals.stationarity, cur.residuals.primal, cur.residuals.complementarity, rp, last_reg_);
      if (step < 1e-10) {
        if (++tiny_steps >= 20) {
          if (rp > settings_.tol) {
            best.status = QPStatus::Infeasible;
            finish(best);
            return best;
          }
          break;
        }
      } else {
        tiny_steps = 0;
      }
    }
    best.status = QPStatus::NotConverged;
    finish(best);
    return best;
  }

 private:
  // --- setup -------------------------------------------------------------

  void partition() {
    // A variable is eliminable when Q has no off-diagonal entries in its
    // column and it shares no row with another eliminable variable.
    std::vector<char> diag_only(n_, 1);
    for (int j = 0; j < n_; ++j)
      for (int k = 0; k < n_; ++k)
        if (k != j && p_.Q(k, j) != 0.0) {
          diag_only[j] = 0;
          break;
        }
    std::vector<std::vector<int>> rows_of(n_);
    for (int i = 0; i < m_; ++i)
      for (int j = 0; j < n_; ++j)
        if (p_.A(i, j) != 0.0) rows_of[j].push_back(i);
    std::vector<char> row_taken(m_, 0);
    elim_.assign(n_, 0);
    for (int j = n_ - 1; j >= 0; --j) {
      if (!diag_only[j]) continue;
      const bool anchored = p_.Q(j, j) > 0.0 || std::isfinite(p_.l[j]) || std::isfinite(p_.u[j]) || !rows_of[j].empty();
      if (!anchored) continue;
      if (rows_of[j].size() > 16) continue;  // keeps the rank-one splitting cheap
      if (std::any_of(rows_of[j].begin(), rows_of[j].end(), [&](int i) { return row_taken[i] != 0; })) continue;
      elim_[j] = 1;
      for (int i : rows_of[j]) row_taken[i] = 1;
    }
    kept_.clear();
    pos_.assign(n_, -1);
    for (int j = 0; j < n_; ++j)
      if (!elim_[j]) {
        pos_[j] = static_cast<int>(kept_.size());
        kept_.push_back(j);
      }
    elim_list_.clear();
    for (int j = 0; j < n_; ++j)
      if (elim_[j]) elim_list_.push_back(j);
    elim_rows_.assign(n_, {});
  }

  void build_rows() {
    rows_.resize(m_);
    for (int i = 0; i < m_; ++i) {
      auto& r = rows_[i];
      for (int j = 0; j < n_; ++j) {
        const double a = p_.A(i, j);
        if (a == 0.0) continue;
        if (elim_[j]) {
          r.elim = j;
          r.elim_coef = a;
          elim_rows_[j].push_back(i);
        } else {
          r.idx.push_back(pos_[j]);
          r.val.push_back(a);
        }
      }
    }
    runs_.clear();
    for (const auto& r : rows_) runs_.push_back(make_runs(r.idx, r.val));
    scratch_.assign(kept_.size(), 0.0);
    scratch_mark_.assign(kept_.size(), 0);
    for (int j = 0; j < n_; ++j) {
      has_l_.push_back(std::isfinite(p_.l[j]));
      has_u_.push_back(std::isfinite(p_.u[j]));
    }
  }

  void initialize() {
    z_ = VectorXd::Zero(n_);
    for (int j = 0; j < n_; ++j) {
      const double lo = p_.l[j], hi = p_.u[j];
      if (has_l_[j] && has_u_[j]) z_[j] = 0.5 * (lo + hi);
      else if (has_l_[j]) z_[j] = std::max(0.0, lo + 1.0);
      else if (has_u_[j]) z_[j] = std::min(0.0, hi - 1.0);
    }
    s_ = VectorXd::Ones(m_);
    if (m_ > 0) s_ = (p_.b - p_.A * z_).cwiseMax(1.0);
    lam_ = VectorXd::Ones(m_);
    eta_ = VectorXd::Zero(n_);
    etu_ = VectorXd::Zero(n_);
    for (int j = 0; j < n_; ++j) {
      if (has_l_[j]) eta_[j] = 1.0;
      if (has_u_[j]) etu_[j] = 1.0;
    }
    mu_ = average_complementarity(s_, lam_, z_, eta_, etu_);
  }

  // --- helpers -----------------------------------------------------------

  int complementarity_count() const {
    int k = m_;
    for (int j = 0; j < n_; ++j) k += has_l_[j] + has_u_[j];
    return k;
  }

  double average_complementarity(const VectorXd& s, const VectorXd& lam, const VectorXd& z, const VectorXd& eta,
                                 const VectorXd& etu) const {
    const int k = complementarity_count();
    if (k == 0) return 0.0;
    double sum = m_ > 0 ? s.dot(lam) : 0.0;
    for (int j = 0; j < n_; ++j) {
      if (has_l_[j]) sum += (z[j] - p_.l[j]) * eta[j];
      if (has_u_[j]) sum += (p_.u[j] - z[j]) * etu[j];
    }
    return sum / k;
  }

  double primal_infeasibility() const {
    if (m_ == 0) return 0.0;
    return (p_.A * z_ + s_ - p_.b).lpNorm<Eigen::Infinity>();
  }

  double multiplier_max() const {
    double v = 0.0;
    if (m_ > 0) v = lam_.lpNorm<Eigen::Infinity>();
    if (n_ > 0) v = std::max({v, eta_.lpNorm<Eigen::Infinity>(), etu_.lpNorm<Eigen::Infinity>()});
    return v;
  }

  VectorXd box_diag() const {
    VectorXd d = VectorXd::Zero(n_);
    for (int j = 0; j < n_; ++j) {
      if (has_l_[j]) d[j] += eta_[j] / (z_[j] - p_.l[j]);
      if (has_u_[j]) d[j] += etu_[j] / (p_.u[j] - z_[j]);
    }
    return d;
  }

  // --- normal equations ----------------------------------------------------

  // Sparse vector stored as maximal runs of consecutive indices, so that
  // outer products become dense column updates.
  struct Runs {
    std::vector<int> start, len, off;
    std::vector<double> val;
  };

  static Runs make_runs(const std::vector<int>& idx, const std::vector<double>& val) {
    Runs r;
    r.val = val;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (k > 0 && idx[k] == idx[k - 1] + 1) {
        ++r.len.back();
      } else {
        r.start.push_back(idx[k]);
        r.len.push_back(1);
        r.off.push_back(static_cast<int>(k));
      }
    }
    return r;
  }

  // Lower triangle of N += c v vᵀ.
  static void rank1(MatrixXd& N, const Runs& v, double c) {
    if (c == 0.0) return;
    const std::size_t nr = v.start.size();
    for (std::size_t bq = 0; bq < nr; ++bq)
      for (int t = 0; t < v.len[bq]; ++t) {
        const int col = v.start[bq] + t;
        const double cq = c * v.val[v.off[bq] + t];
        if (cq == 0.0) continue;
        for (std::size_t ar = bq; ar < nr; ++ar) {
          const int skip = ar == bq ? t : 0;
          const int cnt = v.len[ar] - skip;
          N.col(col).segment(v.start[ar] + skip, cnt) +=
              cq * Eigen::Map<const VectorXd>(v.val.data() + v.off[ar] + skip, cnt);
        }
      }
  }

  void factor(const VectorXd& w, const VectorXd& dbox) {
    const int nk = static_cast<int>(kept_.size());
    w_ = w;
    dbox_ = dbox;
    delim_.assign(n_, 0.0);
    for (int e : elim_list_) {
      double d = p_.Q(e, e) + dbox[e];
      for (int i : elim_rows_[e]) d += w[i] * rows_[i].elim_coef * rows_[i].elim_coef;
      delim_[e] = d;
    }
    MatrixXd N(nk, nk);
    for (int b = 0; b < nk; ++b)
      for (int a = b; a < nk; ++a) N(a, b) = p_.Q(kept_[a], kept_[b]);
    for (int a = 0; a < nk; ++a) N(a, a) += dbox[kept_[a]];
    for (int i = 0; i < m_; ++i)
      if (rows_[i].elim < 0) rank1(N, runs_[i], w[i]);
    // Rows sharing an eliminated variable e contribute A_Gᵀ C A_G with
    // C = W - W a aᵀ W / (d0 + aᵀ W a). Written as W^½ (P + ρ ûûᵀ) W^½,
    // u = W^½ a, ρ = d0 / (d0 + |u|²), P the projector orthogonal to û, it
    // splits into nonnegative rank-one terms without cancellation.
    for (int e : elim_list_) {
      const auto& rs = elim_rows_[e];
      const auto k = static_cast<Eigen::Index>(rs.size());
      if (k == 0) continue;
      const double d0 = p_.Q(e, e) + dbox[e];
      VectorXd sw(k), uvec(k);
      for (Eigen::Index x = 0; x < k; ++x) {
        sw[x] = std::sqrt(w[rs[x]]);
        uvec[x] = sw[x] * rows_[rs[x]].elim_coef;
      }
      const double u2 = uvec.squaredNorm();
      const double rho = d0 + u2 > 0.0 ? d0 / (d0 + u2) : 1.0;
      if (k == 1) {
        rank1(N, runs_[rs[0]], w[rs[0]] * rho);
        continue;
      }
      MatrixXd V = MatrixXd::Identity(k, k);
      if (u2 > 0.0) {
        Eigen::HouseholderQR<MatrixXd> qr(uvec / std::sqrt(u2));
        V = qr.householderQ() * MatrixXd::Identity(k, k);  // first column is ±û
      }
      for (Eigen::Index t = 0; t < k; ++t) {
        const double weight = (t == 0 && u2 > 0.0) ? rho : 1.0;
        std::vector<int> idx;
        for (Eigen::Index x = 0; x < k; ++x) {
          const double f = sw[x] * V(x, t);
          const auto& row = rows_[rs[x]];
          for (std::size_t q = 0; q < row.idx.size(); ++q) {
            if (scratch_mark_[row.idx[q]] == 0) {
              scratch_mark_[row.idx[q]] = 1;
              idx.push_back(row.idx[q]);
            }
            scratch_[row.idx[q]] += f * row.val[q];
          }
        }
        std::sort(idx.begin(), idx.end());
        std::vector<double> val;
        val.reserve(idx.size());
        for (int q : idx) {
          val.push_back(scratch_[q]);
          scratch_[q] = 0.0;
          scratch_mark_[q] = 0;
        }
        rank1(N, make_runs(idx, val), weight);
      }
    }
    double scale = 1.0;
    for (int a = 0; a < nk; ++a) scale = std::max(scale, std::abs(N(a, a)));
    double reg = 0.0;
    for (int attempt = 0; attempt < 12; ++attempt) {
      MatrixXd M = N;
      if (reg > 0.0) M.diagonal().array() += reg;
      llt_.compute(M.selfadjointView<Eigen::Lower>());
      if (llt_.info() == Eigen::Success) {
        last_reg_ = reg;
        return;
      }
      reg = reg == 0.0 ? 1e-14 * scale : reg * 100.0;
    }
    throw SolverError("QP: normal equations could not be factored");
  }

  // y = N x with the unreduced normal matrix.
  VectorXd apply_normal(const VectorXd& x) const {
    VectorXd y = p_.Q * x + dbox_.cwiseProduct(x);
    if (m_ > 0) {
      VectorXd ax = p_.A * x;
      y += p_.A.transpose() * w_.cwiseProduct(ax);
    }
    return y;
  }

  VectorXd solve_reduced(const VectorXd& r) const {
    const int nk = static_cast<int>(kept_.size());
    VectorXd rk(nk);
    for (int a = 0; a < nk; ++a) rk[a] = r[kept_[a]];
    for (int e : elim_list_) {
      if (delim_[e] <= 0.0) continue;
      const double f = r[e] / delim_[e];
      for (int i : elim_rows_[e]) {
        const auto& row = rows_[i];
        const double g = w_[i] * row.elim_coef * f;
        for (std::size_t k = 0; k < row.idx.size(); ++k) rk[row.idx[k]] -= g * row.val[k];
      }
    }
    VectorXd xk = nk > 0 ? VectorXd(llt_.solve(rk)) : VectorXd();
    VectorXd x(n_);
    for (int a = 0; a < nk; ++a) x[kept_[a]] = xk[a];
    for (int e : elim_list_) {
      double v = r[e];
      for (int i : elim_rows_[e]) {
        const auto& row = rows_[i];
        double dot = 0.0;
        for (std::size_t k = 0; k < row.idx.size(); ++k) dot += row.val[k] * xk[row.idx[k]];
        v -= w_[i] * row.elim_coef * dot;
      }
      x[e] = delim_[e] > 0.0 ? v / delim_[e] : 0.0;
    }
    return x;
  }

  // Solve with iterative refinement against the unreduced operator.
  VectorXd solve_normal(const VectorXd& r) const {
    VectorXd x = solve_reduced(r);
    VectorXd res = r - apply_normal(x);
    double prev = res.lpNorm<Eigen::Infinity>();
    for (int k = 0; k < 5 && prev > 1e-14 * (1.0 + r.lpNorm<Eigen::Infinity>()); ++k) {
      VectorXd cand = x + solve_reduced(res);
      VectorXd cres = r - apply_normal(cand);
      const double now = cres.lpNorm<Eigen::Infinity>();
      if (!(now < prev)) break;
      x = std::move(cand);
      res = std::move(cres);
      prev = now;
    }
    return x;
  }

  struct Direction {
    VectorXd dz, ds, dlam, deta, detu;
  };

  // Newton direction for complementarity targets rc_s = sλ - target etc.
  Direction direction(const VectorXd& rd, const VectorXd& rp, const VectorXd& rcs, const VectorXd& rct,
                      const VectorXd& rcu) const {
    VectorXd rhs = -rd;
    VectorXd tmp(m_);
    for (int i = 0; i < m_; ++i) tmp[i] = (-rcs[i] + lam_[i] * rp[i]) / s_[i];
    if (m_ > 0) rhs -= p_.A.transpose() * tmp;
    for (int j = 0; j < n_; ++j) {
      if (has_l_[j]) rhs[j] -= rct[j] / (z_[j] - p_.l[j]);
      if (has_u_[j]) rhs[j] += rcu[j] / (p_.u[j] - z_[j]);
    }
    Direction d;
    d.dz = solve_normal(rhs);
    d.ds = VectorXd(m_);
    d.dlam = VectorXd(m_);
    if (m_ > 0) {
      VectorXd adz = p_.A * d.dz;
      d.ds = -rp - adz;
      for (int i = 0; i < m_; ++i) d.dlam[i] = (-rcs[i] + lam_[i] * rp[i] + lam_[i] * adz[i]) / s_[i];
    }
    d.deta = VectorXd::Zero(n_);
    d.detu = VectorXd::Zero(n_);
    for (int j = 0; j < n_; ++j) {
      if (has_l_[j]) d.deta[j] = (-rct[j] - eta_[j] * d.dz[j]) / (z_[j] - p_.l[j]);
      if (has_u_[j]) d.detu[j] = (-rcu[j] + etu_[j] * d.dz[j]) / (p_.u[j] - z_[j]);
    }
    return d;
  }

  static double max_step(const VectorXd& v, const VectorXd& dv) {
    double a = 1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i)
      if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
    return a;
  }

  double step_to_boundary(const Direction& d) const {
    double a = std::min(max_step(s_, d.ds), max_step(lam_, d.dlam));
    for (int j = 0; j < n_; ++j) {
      if (has_l_[j]) {
        if (d.dz[j] < 0.0) a = std::min(a, -(z_[j] - p_.l[j]) / d.dz[j]);
        if (d.deta[j] < 0.0) a = std::min(a, -eta_[j] / d.deta[j]);
      }
      if (has_u_[j]) {
        if (d.dz[j] > 0.0) a = std::min(a, (p_.u[j] - z_[j]) / d.dz[j]);
        if (d.detu[j] < 0.0) a = std::min(a, -etu_[j] / d.detu[j]);
      }
    }
    return a;
  }

  double mu_after(const Direction& d, double a) const {
    return average_complementarity(s_ + a * d.ds, lam_ + a * d.dlam, z_ + a * d.dz, eta_ + a * d.deta,
                                   etu_ + a * d.detu);
  }

  // One predictor-corrector step; returns the step length taken.
  double iterate() {
    VectorXd rd = p_.Q * z_ + p_.c - eta_ + etu_;
    VectorXd rp = VectorXd::Zero(m_);
    if (m_ > 0) {
      rd += p_.A.transpose() * lam_;
      rp = p_.A * z_ + s_ - p_.b;
    }
    if (complementarity_count() == 0) {
      // Unconstrained: a single Newton step on a quadratic.
      factor(VectorXd::Zero(m_), VectorXd::Zero(n_));
      z_ += solve_normal(-rd);
      return 1.0;
    }
    VectorXd w(m_);
    for (int i = 0; i < m_; ++i) w[i] = lam_[i] / s_[i];
    factor(w, box_diag());

    VectorXd rcs = s_.cwiseProduct(lam_);
    VectorXd rct = VectorXd::Zero(n_), rcu = VectorXd::Zero(n_);
    for (int j = 0; j < n_; ++j) {
      if (has_l_[j]) rct[j] = (z_[j] - p_.l[j]) * eta_[j];
      if (has_u_[j]) rcu[j] = (p_.u[j] - z_[j]) * etu_[j];
    }
    const Direction aff = direction(rd, rp, rcs, rct, rcu);
    const double a_aff = step_to_boundary(aff);
    const double mu_aff = mu_after(aff, a_aff);
    const double sigma = mu_ > 0.0 ? std::clamp(std::pow(mu_aff / mu_, 3.0), 0.0, 1.0) : 0.0;
    const double target = sigma * mu_;

    VectorXd rcs2 = rcs + aff.ds.cwiseProduct(aff.dlam);
    rcs2.array() -= target;
    VectorXd rct2 = rct, rcu2 = rcu;
    for (int j = 0; j < n_; ++j) {
      if (has_l_[j]) rct2[j] += aff.dz[j] * aff.deta[j] - target;
      if (has_u_[j]) rcu2[j] += -aff.dz[j] * aff.detu[j] - target;
    }
    Direction d = direction(rd, rp, rcs2, rct2, rcu2);
    double a = take_step(d);
    if (a < 0.0) {
      // Corrector failed to reduce μ: fall back to a plain centered direction.
      VectorXd rcs3 = rcs.array() - 0.1 * mu_;
      VectorXd rct3 = rct, rcu3 = rcu;
      for (int j = 0; j < n_; ++j) {
        if (has_l_[j]) rct3[j] -= 0.1 * mu_;
        if (has_u_[j]) rcu3[j] -= 0.1 * mu_;
      }
      d = direction(rd, rp, rcs3, rct3, rcu3);
      a = take_step(d);
    }
    return std::max(a, 0.0);
  }

  // Fraction-to-boundary step, halved until μ does not increase. Returns -1
  // if no acceptable length was found.
  double take_step(const Direction& d) {
    double a = std::min(1.0, 0.995 * step_to_boundary(d));
    for (int k = 0; k < 40; ++k, a *= 0.5) {
      const double mu_new = mu_after(d, a);
      if (mu_new <= mu_) {
        z_ += a * d.dz;
        s_ += a * d.ds;
        lam_ += a * d.dlam;
        eta_ += a * d.deta;
        etu_ += a * d.detu;
        mu_ = mu_new;
        return a;
      }
    }
    return -1.0;
  }

  // --- reporting -----------------------------------------------------------

  QPSolution expand(int iterations) {
    const auto nf = full_.num_variables();
    QPSolution out;
    out.z = fixed_values_;
    out.eta_lower = VectorXd::Zero(nf);
    out.eta_upper = VectorXd::Zero(nf);
    for (int j = 0; j < n_; ++j) {
      out.z[full_index_[j]] = z_[j];
      out.eta_lower[full_index_[j]] = eta_[j];
      out.eta_upper[full_index_[j]] = etu_[j];
    }
    out.lambda = lam_;
    if (static_cast<int>(full_index_.size()) != nf) {
      // Multipliers of fixed variables from stationarity.
      VectorXd g = full_.Q * out.z + full_.c;
      if (m_ > 0) g += full_.A.transpose() * out.lambda;
      std::vector<char> free(nf, 0);
      for (int j : full_index_) free[j] = 1;
      for (Eigen::Index j = 0; j < nf; ++j)
        if (!free[j]) {
          out.eta_lower[j] = std::max(0.0, g[j]);
          out.eta_upper[j] = std::max(0.0, -g[j]);
        }
    }
    out.iterations = iterations;
    out.objective = full_.objective(out.z);
    out.residuals = kkt_residuals(full_, out);
    history_gap_.push_back(mu_);
    history_obj_.push_back(out.objective);
    return out;
  }

  void finish(QPSolution& s) const {
    s.gap_history = history_gap_;
    s.objective_history = history_obj_;
    s.iterations = static_cast<int>(history_gap_.size()) - 1;
  }

  const QPProblem& p_;
  QPSettings settings_;
  const QPProblem& full_;
  std::vector<int> full_index_;
  VectorXd fixed_values_;
  int n_ = 0, m_ = 0;

  std::vector<char> elim_;
  std::vector<int> kept_, pos_, elim_list_;
  std::vector<std::vector<int>> elim_rows_;
  std::vector<SparseRow> rows_;
  std::vector<Runs> runs_;
  std::vector<double> scratch_;
  std::vector<char> scratch_mark_;
  std::vector<char> has_l_, has_u_;

  VectorXd z_, s_, lam_, eta_, etu_;
  double mu_ = 0.0;
  double last_reg_ = 0.0;

  VectorXd w_, dbox_;
  std::vector<double> delim_;
  Eigen::LLT<MatrixXd> llt_;

  std::vector<double> history_gap_, history_obj_;
};

inline void check_psd(const MatrixXd& Q) {
  const auto n = Q.rows();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < i; ++j)
      if (std::abs(Q(i, j) - Q(j, i)) > 1e-10) throw std::invalid_argument("QP: Q is not symmetric");
  // Diagonal-only columns are checked directly, the coupled block by a
  // Cholesky attempt with a 1e-8 shift.
  std::vector<Eigen::Index> coupled;
  for (Eigen::Index j = 0; j < n; ++j) {
    bool off = false;
    for (Eigen::Index k = 0; k < n && !off; ++k) off = k != j && Q(k, j) != 0.0;
    if (off) coupled.push_back(j);
    else if (Q(j, j) < -1e-8) throw SolverError("QP: Q is not positive semidefinite");
  }
  if (coupled.empty()) return;
  const auto k = static_cast<Eigen::Index>(coupled.size());
  MatrixXd B(k, k);
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index b = 0; b < k; ++b) B(a, b) = Q(coupled[a], coupled[b]);
  B.diagonal().array() += 1e-8;
  Eigen::LLT<MatrixXd> llt(B);
  if (llt.info() != Eigen::Success) throw SolverError("QP: Q is not positive semidefinite");
}

// Active-set polish: the interior point approaches a degenerate bound only
// like sqrt(tol). Guess the active set from distance < max(multiplier, cut),
// solve the equality KKT system on it and keep the best candidate whose exact
// residuals beat the interior point's.
inline std::optional<QPSolution> polish_with(const QPProblem& p, const QPSolution& s, double cut) {
  const auto n = p.num_variables();
  const auto m = p.num_rows();
  VectorXd z = s.z;
  std::vector<int> side(n, 0);  // 1 at lower bound, 2 at upper bound
  std::vector<Eigen::Index> F, act;
  for (Eigen::Index j = 0; j < n; ++j) {
    const bool lo = std::isfinite(p.l[j]) && z[j] - p.l[j] < std::max(s.eta_lower[j], cut);
    const bool hi = std::isfinite(p.u[j]) && p.u[j] - z[j] < std::max(s.eta_upper[j], cut);
    if (p.l[j] == p.u[j] || (lo && (!hi || z[j] - p.l[j] <= p.u[j] - z[j]))) side[j] = 1, z[j] = p.l[j];
    else if (hi) side[j] = 2, z[j] = p.u[j];
    else F.push_back(j);
  }
  if (m > 0) {
    const VectorXd slack = p.b - p.A * s.z;
    for (Eigen::Index i = 0; i < m; ++i)
      if (slack[i] < std::max(s.lambda[i], cut)) act.push_back(i);
  }
  if (static_cast<Eigen::Index>(F.size() + act.size()) > 600) return std::nullopt;
  VectorXd lam = VectorXd::Zero(m);
  for (Eigen::Index i : act) lam[i] = std::max(0.0, s.lambda[i]);
  QPSolution c = s;
  // Dependent active rows can split their multiplier with a wrong sign; the
  // most negative one leaves the active set and the system is re-solved.
  for (int drop = 0; drop <= 20; ++drop) {
    const auto k = static_cast<Eigen::Index>(F.size());
    const auto a = static_cast<Eigen::Index>(act.size());
    if (k + a > 0) {
      MatrixXd K = MatrixXd::Zero(k + a, k + a);
      for (Eigen::Index r = 0; r < k; ++r)
        for (Eigen::Index q = 0; q < k; ++q) K(r, q) = p.Q(F[r], F[q]);
      for (Eigen::Index r = 0; r < a; ++r)
        for (Eigen::Index q = 0; q < k; ++q) K(k + r, q) = K(q, k + r) = p.A(act[r], F[q]);
      constexpr double delta = 1e-10;
      K.diagonal().head(k).array() += delta;
      K.diagonal().tail(a).array() -= delta;
      const Eigen::LDLT<MatrixXd> ldlt(K);
      if (ldlt.info() != Eigen::Success) return std::nullopt;
      for (int refine = 0; refine < 4; ++refine) {
        VectorXd g = p.Q * z + p.c;
        if (m > 0) g += p.A.transpose() * lam;
        VectorXd r(k + a);
        for (Eigen::Index i = 0; i < k; ++i) r[i] = g[F[i]];
        for (Eigen::Index i = 0; i < a; ++i) r[k + i] = p.A.row(act[i]).dot(z) - p.b[act[i]];
        const VectorXd d = ldlt.solve(-r);
        if (!d.allFinite()) return std::nullopt;
        for (Eigen::Index i = 0; i < k; ++i) z[F[i]] += d[i];
        for (Eigen::Index i = 0; i < a; ++i) lam[act[i]] += d[k + i];
      }
    }
    VectorXd g = p.Q * z + p.c;
    if (m > 0) g += p.A.transpose() * lam;
    c.z = z;
    c.lambda = lam;
    c.eta_lower = VectorXd::Zero(n);
    c.eta_upper = VectorXd::Zero(n);
    double worst = 0.0;
    Eigen::Index worst_var = -1, worst_row = -1;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (p.l[j] == p.u[j]) {
        c.eta_lower[j] = std::max(0.0, g[j]);
        c.eta_upper[j] = std::max(0.0, -g[j]);
        continue;
      }
      const double eta = side[j] == 1 ? g[j] : side[j] == 2 ? -g[j] : 0.0;
      (side[j] == 2 ? c.eta_upper : c.eta_lower)[j] = eta;
      if (eta < worst) worst = eta, worst_var = j, worst_row = -1;
    }
    for (std::size_t r = 0; r < act.size(); ++r)
      if (lam[act[r]] < worst) worst = lam[act[r]], worst_row = static_cast<Eigen::Index>(r), worst_var = -1;
    if (worst >= -1e-12) break;
    if (worst_row >= 0) {
      lam[act[worst_row]] = 0.0;
      act.erase(act.begin() + worst_row);
    } else {
      side[worst_var] = 0;
      F.push_back(worst_var);
      std::sort(F.begin(), F.end());
    }
  }
  c.residuals = kkt_residuals(p, c);
  c.objective = p.objective(c.z);
  return c;
}

inline void polish(const QPProblem& p, QPSolution& s, double tol) {
  QPSolution best = s;
  for (double cut : {0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2}) {
    auto c = polish_with(p, s, cut);
    if (c && c->residuals.max() < best.residuals.max()) best = std::move(*c);
    if (best.residuals.max() <= std::min(1e-10, 1e-3 * tol)) break;
  }
  s = std::move(best);
}

}  // namespace detail

namespace detail {
inline bool rows_infeasible(const QPProblem& p, const QPSettings& settings);
}

/// Solves p. Deterministic: the start point and every step depend only on
/// the input data.
inline QPSolution solve(const QPProblem& p, const QPSettings& settings = {}) {
  p.check_dimensions();
  if (!(settings.tol > 0.0)) throw std::invalid_argument("QP: tolerance must be positive");
  if (settings.max_iter < 0) throw std::invalid_argument("QP: max_iter must be nonnegative");
  const auto n = p.num_variables();
  const auto m = p.num_rows();
  for (Eigen::Index j = 0; j < n; ++j)
    if (std::isnan(p.l[j]) || std::isnan(p.u[j])) throw std::invalid_argument("QP: NaN bound");
  detail::check_psd(p.Q);

  for (Eigen::Index j = 0; j < n; ++j)
    if (p.l[j] > p.u[j]) {
      QPSolution s;
      s.status = QPStatus::Infeasible;
      s.z = p.l.cwiseMax(-1e300).cwiseMin(1e300);
      s.lambda = VectorXd::Zero(m);
      s.eta_lower = VectorXd::Zero(n);
      s.eta_upper = VectorXd::Zero(n);
      s.objective = p.objective(s.z);
      s.residuals = kkt_residuals(p, s);
      return s;
    }

  // Eliminate fixed variables.
  std::vector<int> free_idx;
  VectorXd fixed = VectorXd::Zero(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (p.l[j] == p.u[j]) fixed[j] = p.l[j];
    else free_idx.push_back(static_cast<int>(j));
  }
  auto finish = [&](QPSolution s) {
    if (s.status == QPStatus::Optimal) detail::polish(p, s, settings.tol);
    if (s.status == QPStatus::NotConverged && m > 0 && settings.check_feasibility && detail::rows_infeasible(p, settings))
      s.status = QPStatus::Infeasible;
    return s;
  };
  if (static_cast<Eigen::Index>(free_idx.size()) == n) {
    detail::InteriorPoint ip(p, settings, p, free_idx, fixed);
    return finish(ip.run());
  }
  const auto nr = static_cast<Eigen::Index>(free_idx.size());
  QPProblem r(nr, m);
  for (Eigen::Index a = 0; a < nr; ++a) {
    const int ja = free_idx[a];
    r.c[a] = p.c[ja] + p.Q.row(ja).dot(fixed);
    r.l[a] = p.l[ja];
    r.u[a] = p.u[ja];
    for (Eigen::Index b = 0; b < nr; ++b) r.Q(a, b) = p.Q(ja, free_idx[b]);
    for (Eigen::Index i = 0; i < m; ++i) r.A(i, a) = p.A(i, ja);
  }
  r.b = m > 0 ? VectorXd(p.b - p.A * fixed) : VectorXd();
  detail::InteriorPoint ip(r, settings, p, free_idx, fixed);
  return finish(ip.run());
}

namespace detail {

// Phase one: min ½‖t‖² s.t. Az − t ≤ b, l ≤ z ≤ u, t ≥ 0 is always feasible;
// a positive optimum means the rows and the box have no common point.
inline bool rows_infeasible(const QPProblem& p, const QPSettings& settings) {
  const auto n = p.num_variables();
  const auto m = p.num_rows();
  QPProblem f(n + m, m);
  f.Q.bottomRightCorner(m, m).setIdentity();
  f.A.leftCols(n) = p.A;
  f.A.rightCols(m) = -MatrixXd::Identity(m, m);
  f.b = p.b;
  f.l.head(n) = p.l;
  f.u.head(n) = p.u;
  f.l.tail(m).setZero();
  QPSettings s = settings;
  s.check_feasibility = false;
  const QPSolution r = solve(f, s);
  return r.status == QPStatus::Optimal && r.z.tail(m).maxCoeff() > 10.0 * settings.tol;
}

}  // namespace detail

// --- serialization -----------------------------------------------------------

namespace detail {

inline nlohmann::json number_to_json(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline double number_from_json(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "+inf") return kInf;
    if (s == "-inf") return -kInf;
  }
  throw std::invalid_argument("expected a number or \"inf\"/\"-inf\"");
}

inline nlohmann::json vector_to_json(const VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number_to_json(v[i]));
  return a;
}

inline VectorXd vector_from_json(const nlohmann::json& j) {
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = number_from_json(j[i]);
  return v;
}

inline nlohmann::json matrix_to_json(const MatrixXd& M) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) rows.push_back(vector_to_json(M.row(i).transpose()));
  return rows;
}

inline MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index cols) {
  MatrixXd M(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (static_cast<Eigen::Index>(j[i].size()) != cols) throw std::invalid_argument("ragged matrix row");
    for (Eigen::Index k = 0; k < cols; ++k) M(static_cast<Eigen::Index>(i), k) = number_from_json(j[i][k]);
  }
  return M;
}

}  // namespace detail

inline nlohmann::json to_json(const QPProblem& p) {
  return {{"Q", detail::matrix_to_json(p.Q)}, {"c", detail::vector_to_json(p.c)},
          {"A", detail::matrix_to_json(p.A)}, {"b", detail::vector_to_json(p.b)},
          {"l", detail::vector_to_json(p.l)}, {"u", detail::vector_to_json(p.u)}};
}

inline QPProblem problem_from_json(const nlohmann::json& j) {
  QPProblem p;
  p.c = detail::vector_from_json(j.at("c"));
  const auto n = p.c.size();
  p.Q = detail::matrix_from_json(j.at("Q"), n);
  p.A = detail::matrix_from_json(j.at("A"), n);
  p.b = detail::vector_from_json(j.at("b"));
  p.l = j.contains("l") ? detail::vector_from_json(j.at("l")) : VectorXd::Constant(n, -kInf);
  p.u = j.contains("u") ? detail::vector_from_json(j.at("u")) : VectorXd::Constant(n, kInf);
  p.check_dimensions();
  return p;
}

inline nlohmann::json to_json(const QPSolution& s) {
  return {{"status", to_string(s.status)},
          {"z", detail::vector_to_json(s.z)},
          {"lambda", detail::vector_to_json(s.lambda)},
          {"eta_lower", detail::vector_to_json(s.eta_lower)},
          {"eta_upper", detail::vector_to_json(s.eta_upper)},
          {"objective", detail::number_to_json(s.objective)},
          {"iterations", s.iterations},
          {"residuals",
           {{"stationarity", detail::number_to_json(s.residuals.stationarity)},
            {"primal", detail::number_to_json(s.residuals.primal)},
            {"complementarity", detail::number_to_json(s.residuals.complementarity)}}}};
}

}  // namespace luk

#endif  // LUK_QP_HPP
