#include <gtest/gtest.h>

#include "luk/grounder.hpp"
#include "luk/normalize.hpp"
#include "luk/parser.hpp"

using namespace luk;

namespace {

const char* kTwoPredicates =
    "domain X = {x1, x2};\n"
    "domain Y = {y1, y2};\n"
    "pred p1(X); pred p2(X, Y);\n"
    "rule phi: forall x: exists y: p1(x) -> p2(x, y)\n";

}  // namespace

TEST(Ground, TwoPredicateExample) {
  const SourceKB kb = parse_kb(kTwoPredicates);
  const GroundResult g = ground(kb.rules[0].formula, kb);
  const Formula expected = parse_formula(
      "((p1(x1) -> p2(x1,y1)) | (p1(x1) -> p2(x1,y2))) ^ ((p1(x2) -> p2(x2,y1)) | (p1(x2) -> p2(x2,y2)))");
  EXPECT_EQ(normalize(g.formula), normalize(expected));
  EXPECT_TRUE(is_propositional(g.formula));
}

TEST(Ground, MapOffsetsAreContiguous) {
  const SourceKB kb = parse_kb(kTwoPredicates);
  const GroundingMap map(kb);
  ASSERT_EQ(map.size(), 6u);
  EXPECT_EQ(map.index_of("p1(x1)"), 0u);
  EXPECT_EQ(map.index_of("p1(x2)"), 1u);
  EXPECT_EQ(map.index_of("p2(x1,y1)"), 2u);
  EXPECT_EQ(map.index_of("p2(x1,y2)"), 3u);
  EXPECT_EQ(map.index_of("p2(x2,y1)"), 4u);
  EXPECT_EQ(map.index_of("p2(x2,y2)"), 5u);
  std::size_t expected_offset = 0;
  for (const auto& b : map.blocks()) {
    EXPECT_EQ(b.offset, expected_offset);
    expected_offset += b.tuples.size();
  }
  for (std::size_t k = 0; k < map.size(); ++k) EXPECT_EQ(map.index_of(map.key_of(k)), k);
  EXPECT_THROW(map.index_of("p3(x1)"), GroundingError);
}

TEST(Ground, SingletonForall) {
  const SourceKB kb = parse_kb("domain U = {a}; pred p(U); rule r: forall x: p(x)");
  EXPECT_EQ(ground(kb.rules[0].formula, kb).formula, Formula::atom("p", {"a"}));
}

TEST(Ground, ExistsBecomesWeakDisjunction) {
  const SourceKB kb = parse_kb("domain U = {a, b}; pred p(U); rule r: exists x: p(x)");
  EXPECT_EQ(ground(kb.rules[0].formula, kb).formula, parse_formula("p(a) | p(b)"));
}

TEST(Ground, LeafCountIsProductOfDomainSizes) {
  const SourceKB kb = parse_kb(
      "domain U = {a, b, c}; domain V = {v1, v2};"
      "pred p(U); pred r(U, V);"
      "rule t: forall x: forall y: p(x) -> r(x, y)");
  const GroundResult g = ground(kb.rules[0].formula, kb);
  // two leaves per body, 3 * 2 bindings.
  EXPECT_EQ(leaf_count(g.formula), 2u * 3u * 2u);
}

TEST(Ground, InnerQuantifiersSeeOuterBindings) {
  const SourceKB kb = parse_kb("domain U = {a, b}; pred r(U, U); rule t: forall x: exists y: r(x, y)");
  const Formula g = ground(kb.rules[0].formula, kb).formula;
  EXPECT_EQ(g, parse_formula("(r(a,a) | r(a,b)) ^ (r(b,a) | r(b,b))"));
}

TEST(Ground, ForallOnlyConcaveBodyStaysConcave) {
  const SourceKB kb = parse_kb(
      "domain U = {a, b, c}; pred p(U); pred q(U);"
      "rule t: forall x: p(x) -> q(x)");
  EXPECT_EQ(classify(normalize(ground(kb.rules[0].formula, kb).formula)), FragmentLabel::Concave);
}

TEST(Ground, MixedQuantifiersMayLeaveTheFragment) {
  const SourceKB kb = parse_kb(kTwoPredicates);
  EXPECT_EQ(classify(normalize(ground(kb.rules[0].formula, kb).formula)), FragmentLabel::Neither);
}

TEST(Ground, EmptyDomainRejected) {
  const SourceKB kb = parse_kb("domain U = {}; pred p(U); rule r: forall x: p(x)");
  EXPECT_THROW(ground(kb.rules[0].formula, kb), GroundingError);
}

TEST(Ground, UnboundVariableRejected) {
  SourceKB kb = parse_kb("domain U = {a}; pred p(U);");
  EXPECT_THROW(ground(Formula::atom("p", {"z"}), kb), UnboundVariable);
}

TEST(Ground, SizeGuard) {
  std::string consts;
  for (int i = 0; i < 20; ++i) consts += (i ? "," : "") + std::string("c") + std::to_string(i);
  const SourceKB kb = parse_kb("domain U = {" + consts +
                               "}; pred r(U, U, U); rule t: forall x: forall y: forall z: r(x, y, z)");
  GroundOptions small;
  small.max_leaves = 1000;
  EXPECT_THROW(ground(kb.rules[0].formula, kb, small), GroundingError);
  EXPECT_THROW(ground_instances(kb.rules[0].formula, kb, small), GroundingError);
  small.override_guard = true;
  EXPECT_EQ(leaf_count(ground(kb.rules[0].formula, kb, small).formula), 8000u);
  EXPECT_EQ(ground_instances(kb.rules[0].formula, kb, small).size(), 8000u);
}

TEST(Ground, InstancesFollowTheForallPrefix) {
  const SourceKB kb = parse_kb(kTwoPredicates);
  const auto inst = ground_instances(kb.rules[0].formula, kb);
  ASSERT_EQ(inst.size(), 2u);
  EXPECT_EQ(inst[0], parse_formula("(p1(x1) -> p2(x1,y1)) | (p1(x1) -> p2(x1,y2))"));
}

TEST(Ground, PropositionalVariablesGetSlots) {
  const SourceKB kb = parse_kb("domain U = {a}; pred p(U); rule r: y + ~x");
  const GroundingMap map(kb);
  ASSERT_EQ(map.size(), 3u);
  EXPECT_EQ(map.index_of("p(a)"), 0u);
  EXPECT_EQ(map.index_of("x"), 1u);
  EXPECT_EQ(map.index_of("y"), 2u);
}

TEST(Ground, MapExportsJson) {
  const SourceKB kb = parse_kb(kTwoPredicates);
  const auto j = GroundingMap(kb).to_json();
  EXPECT_EQ(j.at("size"), 6);
  EXPECT_EQ(j.at("predicates")[1].at("groundings")[3].at("index"), 5);
}
