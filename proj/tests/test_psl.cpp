#include <gtest/gtest.h>

#include <random>

#include "luk/parser.hpp"
#include "luk/psl.hpp"
#include "support.hpp"

using namespace luk;
namespace lt = luk::testing;

namespace {

constexpr double kTol = 1e-6;

WeightedRuleSet rules_of(const char* text) { return WeightedRuleSet::build(parse_kb(text)); }

const char* kToyKbs[] = {
    "rule r1 [w=1]: ~a + b; rule r2 [w=0.5]: ~b + c",
    "rule r1 [w=2]: a + b; rule r2 [w=1]: ~a; rule r3 [w=0.3]: ~b + a",
    "domain U = {x, y, z}; pred p(U); pred q(U); rule r [w=1.5]: forall v: p(v) -> q(v); rule s [w=0.7]: forall v: ~q(v)",
    "rule r1 [w=1]: (a + b) ^ (~a + c); rule r2 [w=0.4]: ~c; rule r3 [w=0.2]: a",
    "rule r1 [w=3]: ~a + ~b; rule r2 [w=1]: a; rule r3 [w=1]: b + c",
};

}  // namespace

TEST(Potential, ClauseExample) {
  const SourceKB kb = parse_kb("rule r: ~a + b");
  const GroundingMap map(kb);
  const auto g = compile_potential(kb.rules[0].formula, map);
  ASSERT_EQ(g.form.variables, (std::vector<std::string>{"a", "b"}));
  EXPECT_NEAR(potential(g, std::vector<double>{0.9, 0.3}), 0.6, 1e-12);
  EXPECT_THROW(potential(g, std::vector<double>{0.5}), std::invalid_argument);
}

TEST(Potential, SatisfiedClauseIsZero) {
  const SourceKB kb = parse_kb("rule r: ~a + b");
  const GroundingMap map(kb);
  const auto g = compile_potential(kb.rules[0].formula, map);
  EXPECT_EQ(g.value({0.2, 0.9}), 0.0);
}

TEST(Potential, TwoClauseRule) {
  const SourceKB kb = parse_kb("rule r: (x + y) ^ (~x + z)");
  const GroundingMap map(kb);
  const auto g = compile_potential(kb.rules[0].formula, map);
  std::vector<double> v(map.size());
  v[map.index_of("x")] = 1.0;
  v[map.index_of("y")] = 0.0;
  v[map.index_of("z")] = 0.0;
  EXPECT_NEAR(g.value(v), 1.0, 1e-12);
}

TEST(Potential, IsOneMinusEvaluateOnCorpus) {
  std::mt19937_64 rng(81);
  for (const Formula& f : lt::fragment_corpus(82, 100)) {
    const Classified c = classify_with_witness(normalize(f));
    if (c.label == FragmentLabel::Convex) continue;
    const auto vars = variables(f);
    SourceKB kb;
    kb.rules.push_back({"r", 1.0, f});
    const GroundingMap map(kb);
    const auto g = compile_potential(f, map);
    for (int t = 0; t < 200; ++t) {
      const auto x = lt::random_point(rng, map.size());
      Assignment a;
      for (const auto& v : vars) a.set(v, x[map.index_of(v)]);
      EXPECT_NEAR(g.value(x), 1.0 - evaluate(f, a), 1e-12) << to_string(f);
    }
  }
}

TEST(Potential, ConvexOrMixedRulesRejected) {
  EXPECT_THROW(rules_of("rule r: a * b"), FragmentError);
  EXPECT_THROW(rules_of("rule r: a + (b * c)"), FragmentError);
}

TEST(Map, SingleHingeIsSatisfied) {
  const auto rs = rules_of("rule r: a + b");
  const auto m = map_inference(rs, Interpretation::empty(rs.map));
  ASSERT_EQ(m.solution.status, QPStatus::Optimal);
  EXPECT_GE(m.interpretation.values[0] + m.interpretation.values[1], 1.0 - 10 * kTol);
  EXPECT_LE(m.energy, 10 * kTol);
}

TEST(Map, EvidenceForcesConsequent) {
  const auto rs = rules_of("rule r: a -> b");
  Interpretation ev = Interpretation::empty(rs.map);
  ev.set(rs.map, "a", 1.0, true);
  const auto m = map_inference(rs, ev);
  EXPECT_NEAR(m.interpretation.values[rs.map.index_of("b")], 1.0, 1e-5);
  EXPECT_EQ(m.interpretation.values[rs.map.index_of("a")], 1.0);
}

TEST(Map, SatisfiedByEvidenceHasZeroEnergy) {
  const auto rs = rules_of("rule r: a -> b; rule s: c + ~c");
  Interpretation ev = Interpretation::empty(rs.map);
  ev.set(rs.map, "a", 0.0, true);
  const auto m = map_inference(rs, ev);
  EXPECT_LE(m.energy, 10 * kTol);
  // The proximal term centers free atoms that no potential touches.
  EXPECT_NEAR(m.interpretation.values[rs.map.index_of("c")], 0.5, 1e-4);
}

TEST(Map, WeightScaleInvariance) {
  for (const char* text : kToyKbs) {
    auto rs = rules_of(text);
    const auto base = map_inference(rs, Interpretation::empty(rs.map), {.tol = 1e-9});
    for (double s : {0.25, 4.0}) {
      auto scaled = rs;
      auto w = rs.weights();
      for (auto& x : w) x *= s;
      scaled.set_weights(w);
      const auto m = map_inference(scaled, Interpretation::empty(rs.map), {.tol = 1e-9});
      EXPECT_NEAR(m.energy, s * base.energy, 10 * kTol * s) << text;
      // The base optimum is optimal for the scaled weights too.
      EXPECT_NEAR(scaled.energy(base.interpretation.values), m.energy, 10 * kTol * s) << text;
    }
  }
}

TEST(Map, ScalingOneWeightUpDoesNotIncreaseItsPotential) {
  for (const char* text : {kToyKbs[0], kToyKbs[1], kToyKbs[4]}) {
    auto rs = rules_of(text);
    const auto before = map_inference(rs, Interpretation::empty(rs.map), {.tol = 1e-9});
    for (std::size_t j = 0; j < rs.rules.size(); ++j) {
      auto up = rs;
      auto w = rs.weights();
      w[j] *= 3.0;
      up.set_weights(w);
      const auto after = map_inference(up, Interpretation::empty(rs.map), {.tol = 1e-9});
      EXPECT_LE(rs.rules[j].total(after.interpretation.values), rs.rules[j].total(before.interpretation.values) + 1e-5)
          << text << " rule " << j;
    }
  }
}

TEST(Map, NegativeWeightRejected) {
  auto rs = rules_of("rule r: a");
  EXPECT_THROW(rs.set_weights({-1.0}), DomainError);
}

TEST(Map, ExistentialRulesRejected) {
  EXPECT_THROW(rules_of("domain U = {a, b}; pred p(U); rule r: exists x: p(x)"), FragmentError);
}

TEST(Learn, GradientZeroAtMapConsistentData) {
  for (const char* text : kToyKbs) {
    const auto rs = rules_of(text);
    auto training = map_inference(rs, Interpretation::empty(rs.map)).interpretation;
    for (double g : weight_gradient(rs, training)) EXPECT_LE(std::abs(g), 1e-8) << text;
  }
}

TEST(Learn, ViolatedTrainingDataGivesNegativeGradient) {
  const auto rs = rules_of("rule r: a -> b");
  Interpretation t = Interpretation::empty(rs.map);
  t.set(rs.map, "a", 1.0, false);
  t.set(rs.map, "b", 0.0, false);
  const auto g = weight_gradient(rs, t);
  EXPECT_LT(g[0], -0.5);
}

TEST(Learn, AscentReducesMismatch) {
  // b is evidence at 0.2; rule r pulls a down to b, rule s pulls a up.
  const auto rs = rules_of("rule r [w=1]: a -> b; rule s [w=0.5]: a");
  Interpretation t = Interpretation::empty(rs.map);
  t.set(rs.map, "b", 0.2, true);
  t.set(rs.map, "a", 0.9, false);
  const std::size_t ia = rs.map.index_of("a");
  auto map_a = [&](const WeightedRuleSet& w) {
    const double a = map_inference(w, t, {.tol = 1e-9}).interpretation.values[ia];
    // Brute-force check of the one free atom.
    double best = 0.0, bv = 1e300;
    for (int k = 0; k <= 1000; ++k) {
      auto v = t.values;
      v[ia] = k / 1000.0;
      if (w.energy(v) < bv - 1e-12) bv = w.energy(v), best = v[ia];
    }
    EXPECT_NEAR(a, best, 2e-3);
    return a;
  };
  auto mismatch = [&](const WeightedRuleSet& w) {
    auto v = t.values;
    v[ia] = map_a(w);
    double d = 0.0;
    for (const auto& r : w.rules) d += std::abs(r.total(v) - r.total(t.values));
    return d;
  };
  const auto g = weight_gradient(rs, t, {.tol = 1e-9});
  const LearnResult one = learn_weights(rs, t, 0.1, 1, {.tol = 1e-9});
  for (std::size_t j = 0; j < g.size(); ++j) EXPECT_NEAR(one.weights[j], std::max(0.0, rs.weights()[j] + 0.1 * g[j]), 1e-12);
  EXPECT_LT(one.weights[0], 1.0);
  EXPECT_GT(one.weights[1], 0.5);
  const LearnResult many = learn_weights(rs, t, 0.1, 6, {.tol = 1e-9});
  auto stepped = rs;
  stepped.set_weights(many.weights);
  EXPECT_LT(mismatch(stepped), mismatch(rs) - 0.5);
  for (double w : many.weights) EXPECT_GE(w, 0.0);
}

TEST(Learn, BadArgumentsRejected) {
  const auto rs = rules_of("rule r: a");
  EXPECT_THROW(learn_weights(rs, Interpretation::empty(rs.map), 0.0, 1), std::invalid_argument);
  EXPECT_THROW(learn_weights(rs, Interpretation::empty(rs.map), 0.1, -1), std::invalid_argument);
}

TEST(Interpretation, FileParsing) {
  const auto rs = rules_of("rule r: a -> b");
  const auto in = interpretation_from_json(nlohmann::json::parse(R"({"evidence":{"a":1},"targets":{"b":0.4}})"), rs.map);
  EXPECT_EQ(in.evidence[rs.map.index_of("a")], 1);
  EXPECT_EQ(in.evidence[rs.map.index_of("b")], 0);
  EXPECT_EQ(in.values[rs.map.index_of("b")], 0.4);
  EXPECT_THROW(interpretation_from_json(nlohmann::json::parse(R"({"evidence":{"a":1.5}})"), rs.map), DomainError);
  EXPECT_THROW(interpretation_from_json(nlohmann::json::parse(R"({"evidence":{"zz":1}})"), rs.map), GroundingError);
}
