#include <gtest/gtest.h>

#include <sstream>

#include "luk/experiment.hpp"

using namespace luk;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.step = 1.0;
  c.fractions = {0.2, 1.0};
  c.repetitions = 1;
  c.subgradient_iterations = 200;
  return c;
}

std::string csv_of(const std::vector<ExperimentRow>& rows) {
  std::ostringstream out;
  write_csv(out, rows);
  return out.str();
}

}  // namespace

TEST(ExperimentConfig, DefaultGrid) {
  const ExperimentConfig c;
  const auto g = c.grid();
  ASSERT_EQ(g.size(), 169u);
  EXPECT_EQ(g.front(), (Point{-3.0, -3.0}));
  EXPECT_EQ(g[1], (Point{-3.0, -2.5}));
  EXPECT_EQ(g.back(), (Point{3.0, 3.0}));
  EXPECT_NO_THROW(c.validate());
}

TEST(ExperimentConfig, ClassRectangles) {
  const ExperimentConfig c;
  EXPECT_TRUE(c.D.contains({0.0, 0.0}));
  EXPECT_TRUE(c.D.contains({1.0, -1.0}));
  EXPECT_FALSE(c.D.contains({1.5, 0.0}));
  EXPECT_TRUE(c.C.contains({0.5, 3.0}));
  EXPECT_TRUE(c.A.contains({-3.0, 2.0}));
  EXPECT_FALSE(c.B.contains({0.0, 1.5}));
}

TEST(ExperimentConfig, ValidationErrors) {
  auto bad = [](auto edit) {
    ExperimentConfig c;
    edit(c);
    return c;
  };
  EXPECT_THROW(bad([](ExperimentConfig& c) { c.fractions = {0.0}; }).validate(), DomainError);
  EXPECT_THROW(bad([](ExperimentConfig& c) { c.fractions = {1.5}; }).validate(), DomainError);
  EXPECT_THROW(bad([](ExperimentConfig& c) { c.C.upper = {1.0, 4.0}; }).validate(), DomainError);
  EXPECT_THROW(bad([](ExperimentConfig& c) { c.A.lower = {2.0, -2.0}; }).validate(), DomainError);
  EXPECT_THROW(bad([](ExperimentConfig& c) { c.sigma = 0.0; }).validate(), DomainError);
  EXPECT_THROW(bad([](ExperimentConfig& c) { c.repetitions = -1; }).validate(), DomainError);
  EXPECT_THROW(bad([](ExperimentConfig& c) { c.variants = {3}; }).validate(), DomainError);
  EXPECT_THROW(bad([](ExperimentConfig& c) { c.step = 0.0; }).validate(), DomainError);
}

TEST(ExperimentConfig, JsonRoundTripAndUnknownKeys) {
  ExperimentConfig c = small_config();
  c.seed = 99;
  const auto r = experiment_config_from_json(to_json(c));
  EXPECT_EQ(to_json(r), to_json(c));
  EXPECT_THROW(experiment_config_from_json(nlohmann::json::parse(R"({"sigmaa": 1})")), std::invalid_argument);
  EXPECT_THROW(experiment_config_from_json(nlohmann::json::parse(R"({"classes": {"E": {}}})")), std::invalid_argument);
  EXPECT_THROW(experiment_config_from_json(nlohmann::json::parse(R"({"fractions": "x"})")), std::invalid_argument);
  EXPECT_THROW(experiment_config_from_json(nlohmann::json::parse(R"({"fractions": [0]})")), DomainError);
}

TEST(Experiment, F1Score) {
  EXPECT_DOUBLE_EQ(f1_score({true, true, false, false}, {true, false, true, false}), 0.5);
  EXPECT_DOUBLE_EQ(f1_score({true, false}, {true, false}), 1.0);
  EXPECT_DOUBLE_EQ(f1_score({true, false}, {false, false}), 0.0);
  EXPECT_DOUBLE_EQ(f1_score({false, false}, {false, true}), 0.0);
}

TEST(Experiment, TrainingSetsFollowTheProtocol) {
  const ExperimentConfig c;
  const auto grid = c.grid();
  const auto ts = experiment_training(c, grid, {0, 5, 84});
  ASSERT_EQ(ts.predicates.size(), 4u);
  EXPECT_EQ(ts.predicates[0].supervised.size(), 169u);
  EXPECT_EQ(ts.predicates[1].supervised.size(), 169u);
  EXPECT_EQ(ts.predicates[2].supervised.size(), 3u);
  EXPECT_TRUE(ts.predicates[3].supervised.empty());
  for (const auto& d : ts.predicates) EXPECT_EQ(d.sites(), grid);
  EXPECT_EQ(ts.predicates[2].labels[2], 1);  // grid[84] is the origin
}

TEST(Experiment, ZeroRepetitionsGiveHeaderOnly) {
  ExperimentConfig c = small_config();
  c.repetitions = 0;
  EXPECT_EQ(csv_of(run_experiment(c)), "fraction,rep,variant,class,f1\n");
}

TEST(Experiment, RowsAndDeterminism) {
  const ExperimentConfig c = small_config();
  const auto a = run_experiment(c), b = run_experiment(c);
  ASSERT_EQ(a.size(), 2u * 3u * 2u);
  EXPECT_EQ(csv_of(a), csv_of(b));
  for (const auto& r : a) {
    EXPECT_GE(r.f1, 0.0);
    EXPECT_LE(r.f1, 1.0);
  }
  ExperimentConfig other = c;
  other.seed = 2;
  EXPECT_NE(csv_of(run_experiment(other)), csv_of(a));
}

TEST(Experiment, RunsAreIndependentOfEachOther) {
  ExperimentConfig c = small_config();
  const auto all = run_experiment(c);
  const auto second = run_single(c, 1, 0);
  ASSERT_EQ(second.size(), 6u);
  for (std::size_t k = 0; k < second.size(); ++k) EXPECT_EQ(second[k].f1, all[6 + k].f1);
}

TEST(Experiment, FullSupervisionFitsC) {
  ExperimentConfig c;
  c.fractions = {1.0};
  c.repetitions = 1;
  c.variants = {2};
  const auto rows = run_experiment(c);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].cls, 'C');
  EXPECT_GE(rows[0].f1, 0.9);
}

TEST(Experiment, SubgradientKeepsBestObjective) {
  ExperimentConfig c = small_config();
  const auto grid = c.grid();
  const auto ts = experiment_training(c, grid, {0, 3, 24});
  auto rng = run_rng(1, 0, 0);
  SubgradientTrace trace;
  train_subgradient_variant(c, grid, ts, rng, &trace);
  ASSERT_EQ(trace.objective.size(), static_cast<std::size_t>(c.subgradient_iterations + 1));
  EXPECT_EQ(trace.best_objective, *std::min_element(trace.objective.begin(), trace.objective.end()));
  EXPECT_LT(trace.best_objective, trace.objective.front());
}

TEST(Experiment, CsvFormat) {
  std::ostringstream out;
  write_csv(out, {{0.1, 2, 1, 'D', 0.25}});
  EXPECT_EQ(out.str(), "fraction,rep,variant,class,f1\n0.1,2,1,D,0.250000\n");
}
