#ifndef LUK_CONSTRAINTS_HPP
#define LUK_CONSTRAINTS_HPP

// Linear penalty rows shared by the learners: each row reads
//   sum_k coef_k * pbar[index_k] + constant <= xi[slack]
// with xi >= 0 charged in the objective at slack_weight[slack].
// A concave-fragment rule f contributes the pieces of 1 - f (a max of
// affine functions), one slack per ground instance.

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "luk/error.hpp"
#include "luk/formula.hpp"
#include "luk/grounder.hpp"
#include "luk/mcnaughton.hpp"
#include "luk/normalize.hpp"
#include "luk/parser.hpp"

namespace luk {

struct SoftRow {
  std::vector<std::pair<std::size_t, double>> terms;  // (index into pbar, coefficient)
  double constant = 0.0;
  std::size_t slack = 0;

  double value(const std::vector<double>& pbar) const {
    double v = constant;
    for (const auto& [k, a] : terms) v += a * pbar.at(k);
    return v;
  }
};

struct SoftConstraintSet {
  std::vector<SoftRow> rows;
  std::vector<double> slack_weight;
  std::vector<std::string> slack_label;
  std::vector<std::size_t> slack_rule;  // rule index of each slack
  std::int64_t max_abs_coefficient = 0;

  std::size_t num_slacks() const { return slack_weight.size(); }

  std::size_t add_slack(std::string label, double weight, std::size_t rule = 0) {
    slack_weight.push_back(weight);
    slack_label.push_back(std::move(label));
    slack_rule.push_back(rule);
    return slack_weight.size() - 1;
  }

  void append(const SoftConstraintSet& other) {
    const std::size_t base = num_slacks();
    for (std::size_t s = 0; s < other.num_slacks(); ++s)
      add_slack(other.slack_label[s], other.slack_weight[s], other.slack_rule[s]);
    for (SoftRow r : other.rows) {
      r.slack += base;
      rows.push_back(std::move(r));
    }
    max_abs_coefficient = std::max(max_abs_coefficient, other.max_abs_coefficient);
  }

  /// Smallest feasible slack values for a given pbar: max(0, max row value).
  std::vector<double> violations(const std::vector<double>& pbar) const {
    std::vector<double> xi(num_slacks(), 0.0);
    for (const auto& r : rows) xi[r.slack] = std::max(xi[r.slack], r.value(pbar));
    return xi;
  }
};

/// Rows of 1 - f for one ground concave-fragment formula. Constant pieces
/// that can never be positive are dropped (xi >= 0 covers them).
inline std::vector<SoftRow> penalty_rows(const Formula& ground_formula, const GroundingMap& map, std::size_t slack,
                                         std::int64_t* max_coef = nullptr) {
  const Formula nf = normalize(ground_formula);
  const Classified c = classify_with_witness(nf);
  if (c.label != FragmentLabel::Concave && c.label != FragmentLabel::Both)
    throw FragmentError(std::string("constraint is ") + to_string(c.label) +
                        ", only concave-fragment formulas give convex constraints (" +
                        (c.label == FragmentLabel::Neither ? explain_neither(nf) : std::string("convex")) + ")");
  const std::vector<std::string> order = variables(nf);
  const PiecewiseLinearForm penalty = negate_form(compile(c.formula, FragmentLabel::Concave, order));
  if (max_coef) *max_coef = std::max(*max_coef, penalty.max_abs_coefficient());
  std::vector<std::size_t> index;
  for (const auto& key : order) index.push_back(map.index_of(key));
  std::vector<SoftRow> rows;
  for (const auto& piece : penalty.pieces) {
    SoftRow r;
    r.constant = static_cast<double>(piece.intercept);
    r.slack = slack;
    for (std::size_t k = 0; k < piece.coefficients.size(); ++k)
      if (piece.coefficients[k] != 0) r.terms.emplace_back(index[k], static_cast<double>(piece.coefficients[k]));
    if (r.terms.empty() && r.constant <= 0.0) continue;
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Penalty rows for every rule of kb, one slack per instance of the leading
/// forall prefix. Slack weights are base_weight times the rule weight.
inline SoftConstraintSet compile_constraints(const SourceKB& kb, const GroundingMap& map, double base_weight = 1.0,
                                             GroundOptions options = {}) {
  SoftConstraintSet out;
  for (std::size_t r = 0; r < kb.rules.size(); ++r) {
    const Rule& rule = kb.rules[r];
    const std::vector<Formula> instances = ground_instances(rule.formula, kb, options);
    for (std::size_t g = 0; g < instances.size(); ++g) {
      const std::size_t slack = out.add_slack(rule.name + "#" + std::to_string(g), base_weight * rule.weight, r);
      for (auto& row : penalty_rows(instances[g], map, slack, &out.max_abs_coefficient)) out.rows.push_back(std::move(row));
    }
  }
  return out;
}

}  // namespace luk

#endif  // LUK_CONSTRAINTS_HPP
