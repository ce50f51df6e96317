#ifndef LUK_COLLECTIVE_HPP
#define LUK_COLLECTIVE_HPP

// Collective classification: move prior grounding values as little as
// possible (squared distance) while paying C1 per unit of rule violation.
//   min |pbar - phat|^2 + C1 sum_h w_h xi_h   s.t. penalty rows, 0 <= pbar <= 1, xi >= 0

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "luk/constraints.hpp"
#include "luk/error.hpp"
#include "luk/grounder.hpp"
#include "luk/qp.hpp"

namespace luk {

/// Priors aligned with the grounding map order. Raw model scores outside
/// [0,1] are accepted.
struct PriorTable {
  std::vector<double> values;

  static PriorTable zeros(const GroundingMap& map) { return {std::vector<double>(map.size(), 0.0)}; }
};

/// Manifold relation R(x1,x2) = exp(-|x1-x2|^2 / sigma^2) among the
/// groundings of one unary-site predicate, listed in grounding order.
struct ManifoldRelation {
  std::string predicate;
  double sigma = 1.0;
  MatrixXd R;

  static ManifoldRelation from_points(std::string predicate, const std::vector<std::vector<double>>& points,
                                      double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("manifold: sigma must be positive");
    ManifoldRelation rel{std::move(predicate), sigma, MatrixXd(points.size(), points.size())};
    for (std::size_t a = 0; a < points.size(); ++a)
      for (std::size_t b = 0; b <= a; ++b) {
        if (points[a].size() != points[b].size()) throw std::invalid_argument("manifold: point dimension mismatch");
        double d2 = 0.0;
        for (std::size_t k = 0; k < points[a].size(); ++k) d2 += (points[a][k] - points[b][k]) * (points[a][k] - points[b][k]);
        rel.R(a, b) = rel.R(b, a) = std::exp(-d2 / (sigma * sigma));
      }
    return rel;
  }
};

inline constexpr double kManifoldCutoff = 0.01;

/// Two rows per retained pair (s < t):
///   R + p_s - p_t - 1 <= xi,   R - p_s + p_t - 1 <= xi,
/// i.e. max{0, R + p_s - p_t - 1, R - p_s + p_t - 1} <= xi. Pairs with
/// R below the cutoff are skipped.
inline SoftConstraintSet manifold_rows(const ManifoldRelation& rel, const GroundingMap& map, double weight = 1.0,
                                       double cutoff = kManifoldCutoff) {
  const auto* block = map.block(rel.predicate);
  if (!block) throw GroundingError("manifold: unknown predicate '" + rel.predicate + "'");
  if (static_cast<std::size_t>(rel.R.rows()) != block->tuples.size() || rel.R.rows() != rel.R.cols())
    throw std::invalid_argument("manifold: relation size does not match the predicate's groundings");
  SoftConstraintSet out;
  for (Eigen::Index s = 0; s < rel.R.rows(); ++s)
    for (Eigen::Index t = s + 1; t < rel.R.cols(); ++t) {
      const double r = rel.R(s, t);
      if (r < cutoff) continue;
      const std::size_t ps = block->offset + static_cast<std::size_t>(s);
      const std::size_t pt = block->offset + static_cast<std::size_t>(t);
      const std::size_t slack = out.add_slack("manifold:" + map.key_of(ps) + "~" + map.key_of(pt), weight);
      out.rows.push_back({{{ps, 1.0}, {pt, -1.0}}, r - 1.0, slack});
      out.rows.push_back({{{ps, -1.0}, {pt, 1.0}}, r - 1.0, slack});
    }
  return out;
}

/// Decision vector (pbar, xi): Q = 2I on pbar, c = -2 phat, slack cost C1 * weight.
inline QPProblem assemble_collective(const PriorTable& priors, const SoftConstraintSet& constraints, double C1) {
  if (!(C1 > 0.0)) throw std::invalid_argument("C1 must be positive");
  const auto U = static_cast<Eigen::Index>(priors.values.size());
  const auto H = static_cast<Eigen::Index>(constraints.num_slacks());
  const auto m = static_cast<Eigen::Index>(constraints.rows.size());
  QPProblem qp(U + H, m);
  for (Eigen::Index k = 0; k < U; ++k) {
    if (!std::isfinite(priors.values[k])) throw DomainError("prior values must be finite");
    qp.Q(k, k) = 2.0;
    qp.c[k] = -2.0 * priors.values[k];
    qp.l[k] = 0.0;
    qp.u[k] = 1.0;
  }
  for (Eigen::Index h = 0; h < H; ++h) {
    qp.c[U + h] = C1 * constraints.slack_weight[h];
    qp.l[U + h] = 0.0;
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& r = constraints.rows[i];
    for (const auto& [k, a] : r.terms) {
      if (static_cast<Eigen::Index>(k) >= U) throw std::invalid_argument("constraint references grounding outside the prior table");
      qp.A(i, static_cast<Eigen::Index>(k)) += a;
    }
    if (static_cast<Eigen::Index>(r.slack) >= H) throw std::invalid_argument("constraint references an unknown slack");
    qp.A(i, U + static_cast<Eigen::Index>(r.slack)) = -1.0;
    qp.b[i] = -r.constant;
  }
  return qp;
}

struct CollectiveResult {
  std::vector<double> values;
  std::vector<double> slacks;
  QPSolution solution;
};

inline CollectiveResult solve_collective(const PriorTable& priors, const SoftConstraintSet& constraints, double C1,
                                         const QPSettings& settings = {}) {
  const QPProblem qp = assemble_collective(priors, constraints, C1);
  CollectiveResult r;
  r.solution = solve(qp, settings);
  const std::size_t U = priors.values.size();
  for (std::size_t k = 0; k < U; ++k) r.values.push_back(r.solution.z[static_cast<Eigen::Index>(k)]);
  for (std::size_t h = 0; h < constraints.num_slacks(); ++h)
    r.slacks.push_back(r.solution.z[static_cast<Eigen::Index>(U + h)]);
  return r;
}

// --- priors file --------------------------------------------------------------
//
// {"priors": [{"predicate": "p", "tuple": ["a"], "value": 0.7}, ...]}
// Groundings not listed default to 0.

inline PriorTable priors_from_json(const nlohmann::json& j, const GroundingMap& map) {
  if (!j.is_object() || !j.contains("priors") || !j.at("priors").is_array())
    throw std::invalid_argument("priors file must be an object with a \"priors\" array");
  PriorTable t = PriorTable::zeros(map);
  std::size_t k = 0;
  for (const auto& e : j.at("priors")) {
    ++k;
    const std::string where = "priors entry " + std::to_string(k) + ": ";
    if (!e.is_object() || !e.contains("predicate") || !e.contains("value"))
      throw std::invalid_argument(where + "needs \"predicate\" and \"value\"");
    if (!e.at("value").is_number()) throw std::invalid_argument(where + "value must be a number");
    const auto name = e.at("predicate").get<std::string>();
    const auto* block = map.block(name);
    if (!block) throw std::invalid_argument(where + "unknown predicate '" + name + "'");
    const auto tuple = e.value("tuple", std::vector<std::string>{});
    // Propositional variables are keyed by bare name.
    const std::string key = block->arg_domains.empty() && tuple.empty() && map.contains(name)
                                ? name
                                : Formula::atom_key(name, tuple);
    if (!map.contains(key)) throw std::invalid_argument(where + "unknown grounding '" + key + "'");
    t.values[map.index_of(key)] = e.at("value").get<double>();
  }
  return t;
}

inline nlohmann::json to_json(const CollectiveResult& r, const GroundingMap& map, const SoftConstraintSet& constraints) {
  nlohmann::json values = nlohmann::json::array();
  for (std::size_t k = 0; k < r.values.size(); ++k) {
    const auto& block = map.block_of(k);
    values.push_back({{"predicate", block.predicate}, {"tuple", block.tuples[k - block.offset]}, {"value", r.values[k]}});
  }
  nlohmann::json slacks = nlohmann::json::array();
  for (std::size_t h = 0; h < r.slacks.size(); ++h)
    slacks.push_back({{"constraint", constraints.slack_label[h]}, {"slack", r.slacks[h]}});
  return {{"status", to_string(r.solution.status)}, {"values", values}, {"slacks", slacks}};
}

}  // namespace luk

#endif  // LUK_COLLECTIVE_HPP
