#ifndef LUK_PSL_HPP
#define LUK_PSL_HPP

// Hinge-loss MRF over ground atoms. A rule's potential on one grounding is
// 1 - f(g) = max of affine pieces (f in the concave fragment); the energy
// is sum_j lambda_j sum_g phi_j(g). MAP is a linear program in epigraph form.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "luk/error.hpp"
#include "luk/formula.hpp"
#include "luk/grounder.hpp"
#include "luk/mcnaughton.hpp"
#include "luk/normalize.hpp"
#include "luk/parser.hpp"
#include "luk/qp.hpp"

namespace luk {

struct GroundPotential {
  PiecewiseLinearForm form;          // max-of-affine over the local variables
  std::vector<std::size_t> indices;  // local variable k -> ground atom index

  double value(const std::vector<double>& interpretation) const {
    std::vector<double> x(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) x[k] = interpretation.at(indices[k]);
    return form.evaluate(x);
  }
};

/// Potential of one grounding: 1 - f as a max of affine pieces.
inline GroundPotential compile_potential(const Formula& ground_formula, const GroundingMap& map) {
  const Formula nf = normalize(ground_formula);
  const Classified c = classify_with_witness(nf);
  if (c.label != FragmentLabel::Concave && c.label != FragmentLabel::Both)
    throw FragmentError("rule potentials need concave-fragment rules (" +
                        (c.label == FragmentLabel::Neither ? explain_neither(nf) : std::string("rule is convex")) + ")");
  GroundPotential g;
  const auto order = variables(nf);
  g.form = negate_form(compile(c.formula, FragmentLabel::Concave, order));
  for (const auto& key : order) g.indices.push_back(map.index_of(key));
  return g;
}

inline double potential(const GroundPotential& g, std::span<const double> values) {
  if (values.size() != g.indices.size()) throw std::invalid_argument("potential: grounding length mismatch");
  return g.form.evaluate(values);
}

struct CompiledRule {
  std::string name;
  double weight = 1.0;
  Formula formula;
  std::vector<GroundPotential> groundings;

  /// Phi_j: total potential over the rule's groundings.
  double total(const std::vector<double>& interpretation) const {
    double s = 0.0;
    for (const auto& g : groundings) s += g.value(interpretation);
    return s;
  }
};

struct WeightedRuleSet {
  GroundingMap map;
  std::vector<CompiledRule> rules;

  static WeightedRuleSet build(const SourceKB& kb, GroundOptions options = {}) {
    WeightedRuleSet set;
    set.map = GroundingMap(kb);
    for (const auto& rule : kb.rules) {
      if (detail::contains_op(rule.formula, [](Op op) { return op == Op::Exists; }))
        throw FragmentError("rule '" + rule.name + "': existential quantifiers are not supported in rule templates");
      if (!(rule.weight >= 0.0)) throw DomainError("rule '" + rule.name + "': weight must be nonnegative");
      CompiledRule cr{rule.name, rule.weight, rule.formula, {}};
      for (const auto& inst : ground_instances(rule.formula, kb, options))
        cr.groundings.push_back(compile_potential(inst, set.map));
      set.rules.push_back(std::move(cr));
    }
    return set;
  }

  std::vector<double> weights() const {
    std::vector<double> w;
    for (const auto& r : rules) w.push_back(r.weight);
    return w;
  }

  void set_weights(const std::vector<double>& w) {
    if (w.size() != rules.size()) throw std::invalid_argument("weight vector length mismatch");
    for (std::size_t j = 0; j < w.size(); ++j) {
      if (!(w[j] >= 0.0)) throw DomainError("rule weights must be nonnegative");
      rules[j].weight = w[j];
    }
  }

  double energy(const std::vector<double>& interpretation) const {
    double e = 0.0;
    for (const auto& r : rules) e += r.weight * r.total(interpretation);
    return e;
  }
};

/// Values over all ground atoms; evidence atoms stay fixed during inference.
struct Interpretation {
  std::vector<double> values;
  std::vector<char> evidence;

  static Interpretation empty(const GroundingMap& map) {
    return {std::vector<double>(map.size(), 0.0), std::vector<char>(map.size(), 0)};
  }

  void set(const GroundingMap& map, const std::string& key, double v, bool is_evidence) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("value of '" + key + "' outside [0,1]");
    const std::size_t k = map.index_of(key);
    values[k] = v;
    evidence[k] = is_evidence ? 1 : 0;
  }
};

inline constexpr double kProximalEpsilon = 1e-9;

struct MapResult {
  Interpretation interpretation;
  double energy = 0.0;
  QPSolution solution;
};

/// MAP state: minimizes sum_j lambda_j Phi_j over the non-evidence atoms with
/// a tiny proximal term eps |q - 1/2|^2 that picks a centered optimum.
inline MapResult map_inference(const WeightedRuleSet& rules, const Interpretation& evidence,
                               const QPSettings& settings = {}) {
  const GroundingMap& map = rules.map;
  if (evidence.values.size() != map.size() || evidence.evidence.size() != map.size())
    throw std::invalid_argument("interpretation size does not match the grounding map");
  std::vector<long> qidx(map.size(), -1);
  Eigen::Index nq = 0;
  for (std::size_t k = 0; k < map.size(); ++k)
    if (!evidence.evidence[k]) qidx[k] = nq++;

  struct Row {
    std::vector<std::pair<Eigen::Index, double>> terms;
    double constant;
    Eigen::Index slack;
  };
  std::vector<Row> rows;
  std::vector<double> slack_cost;
  for (const auto& rule : rules.rules) {
    if (!(rule.weight >= 0.0)) throw DomainError("rule '" + rule.name + "': negative weight");
    for (const auto& g : rule.groundings) {
      const auto slack = static_cast<Eigen::Index>(slack_cost.size());
      bool any = false;
      for (const auto& piece : g.form.pieces) {
        Row r{{}, static_cast<double>(piece.intercept), slack};
        for (std::size_t k = 0; k < piece.coefficients.size(); ++k) {
          const double a = static_cast<double>(piece.coefficients[k]);
          if (a == 0.0) continue;
          const std::size_t atom = g.indices[k];
          if (qidx[atom] >= 0) r.terms.emplace_back(qidx[atom], a);
          else r.constant += a * evidence.values[atom];
        }
        if (r.terms.empty() && r.constant <= 0.0) continue;
        rows.push_back(std::move(r));
        any = true;
      }
      if (any) slack_cost.push_back(rule.weight);
    }
  }
  const auto H = static_cast<Eigen::Index>(slack_cost.size());
  QPProblem qp(nq + H, static_cast<Eigen::Index>(rows.size()));
  for (Eigen::Index k = 0; k < nq; ++k) {
    qp.Q(k, k) = 2.0 * kProximalEpsilon;
    qp.c[k] = -kProximalEpsilon;
    qp.l[k] = 0.0;
    qp.u[k] = 1.0;
  }
  for (Eigen::Index h = 0; h < H; ++h) {
    qp.c[nq + h] = slack_cost[static_cast<std::size_t>(h)];
    qp.l[nq + h] = 0.0;
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (const auto& [k, a] : rows[i].terms) qp.A(r, k) += a;
    qp.A(r, nq + rows[i].slack) = -1.0;
    qp.b[r] = -rows[i].constant;
  }
  MapResult out;
  out.solution = solve(qp, settings);
  if (out.solution.status == QPStatus::Infeasible) throw SolverError("MAP inference: solver reported infeasibility");
  out.interpretation = evidence;
  for (std::size_t k = 0; k < map.size(); ++k)
    if (qidx[k] >= 0) out.interpretation.values[k] = std::clamp(out.solution.z[qidx[k]], 0.0, 1.0);
  out.energy = rules.energy(out.interpretation.values);
  return out;
}

/// Phi_j(I*) - Phi_j(I_t) per rule, I* the MAP state under the current
/// weights given the evidence atoms of `training`.
inline std::vector<double> weight_gradient(const WeightedRuleSet& rules, const Interpretation& training,
                                           const QPSettings& settings = {}) {
  const MapResult m = map_inference(rules, training, settings);
  std::vector<double> g;
  for (const auto& r : rules.rules) g.push_back(r.total(m.interpretation.values) - r.total(training.values));
  return g;
}

struct LearnResult {
  std::vector<double> weights;
  std::vector<std::vector<double>> history;  // weights after each step
};

/// Projected gradient ascent lambda <- max(0, lambda + rate * gradient).
inline LearnResult learn_weights(WeightedRuleSet rules, const Interpretation& training, double rate, int iterations,
                                 const QPSettings& settings = {}) {
  if (!(rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (iterations < 0) throw std::invalid_argument("iteration count must be nonnegative");
  LearnResult out;
  std::vector<double> w = rules.weights();
  for (int t = 0; t < iterations; ++t) {
    const auto g = weight_gradient(rules, training, settings);
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = std::max(0.0, w[j] + rate * g[j]);
    rules.set_weights(w);
    out.history.push_back(w);
  }
  out.weights = w;
  return out;
}

// --- files ---------------------------------------------------------------------
//
// {"evidence": {"a": 1.0, "p(x1)": 0.2}, "targets": {"b": 0.6}}
// Evidence atoms are fixed; targets give the training values of query atoms.

inline Interpretation interpretation_from_json(const nlohmann::json& j, const GroundingMap& map) {
  if (!j.is_object()) throw std::invalid_argument("interpretation file must be a JSON object");
  Interpretation in = Interpretation::empty(map);
  for (const char* section : {"evidence", "targets"}) {
    if (!j.contains(section)) continue;
    if (!j.at(section).is_object()) throw std::invalid_argument(std::string("\"") + section + "\" must be an object");
    for (const auto& [key, v] : j.at(section).items()) {
      if (!v.is_number()) throw std::invalid_argument("value of '" + key + "' must be a number");
      in.set(map, key, v.get<double>(), std::string(section) == "evidence");
    }
  }
  return in;
}

inline nlohmann::json to_json(const MapResult& r, const WeightedRuleSet& rules) {
  nlohmann::json values = nlohmann::json::object();
  for (std::size_t k = 0; k < rules.map.size(); ++k) values[rules.map.key_of(k)] = r.interpretation.values[k];
  nlohmann::json potentials = nlohmann::json::object();
  for (const auto& rule : rules.rules) potentials[rule.name] = rule.total(r.interpretation.values);
  return {{"status", to_string(r.solution.status)}, {"energy", r.energy}, {"values", values}, {"potentials", potentials}};
}

}  // namespace luk

#endif  // LUK_PSL_HPP
