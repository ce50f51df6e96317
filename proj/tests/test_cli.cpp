#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch() {
  const fs::path d = fs::temp_directory_path() / ("luk_cli_test_" + std::to_string(::getpid()));
  fs::create_directories(d);
  return d;
}

CliRun luk(const std::string& args) {
  const fs::path err = scratch() / "stderr.txt";
  const std::string cmd = std::string("cd '") + LUK_SOURCE_DIR + "/samples' && '" + LUK_CLI + "' " + args + " 2>'" +
                          err.string() + "'";
  CliRun r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err);
  return r;
}

}  // namespace

TEST(Cli, CompileWorkedForms) {
  const CliRun r = luk("compile forms.lkb");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  ASSERT_EQ(j.at("rules").size(), 2u);
  EXPECT_EQ(j["rules"][0]["form"]["text"], "min{1, x-y+z+1, 1-z}");
  EXPECT_EQ(j["rules"][0]["fragment"], "concave");
  EXPECT_EQ(j["rules"][1]["form"]["text"], "min{1, x1-x2+1, x1+x2}");
}

TEST(Cli, CompileEmptyKb) {
  const CliRun r = luk("compile empty.lkb");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(nlohmann::json::parse(r.out).at("rules").empty());
}

TEST(Cli, CompileStrongPairIsNeither) {
  const CliRun r = luk("compile strong_pair.lkb");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("strong conjunction"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("strong disjunction"), std::string::npos) << r.err;
}

TEST(Cli, CompileMissingFileFails) {
  const CliRun r = luk("compile no_such_file.lkb");
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, GroundTwoPredicates) {
  const CliRun r = luk("ground two_predicates.lkb");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("map").at("size"), 6);
}

TEST(Cli, CollectiveSatisfyingPriorsUnchanged) {
  const fs::path priors = scratch() / "priors.json";
  std::ofstream(priors) << R"({"priors": [
    {"predicate": "p", "tuple": ["a"], "value": 0.2}, {"predicate": "q", "tuple": ["a"], "value": 0.6},
    {"predicate": "p", "tuple": ["b"], "value": 0.5}, {"predicate": "q", "tuple": ["b"], "value": 0.9}]})";
  const CliRun r = luk("solve-collective collective.lkb '" + priors.string() + "'");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  const std::map<std::string, double> expected{{"p(a)", 0.2}, {"q(a)", 0.6}, {"p(b)", 0.5}, {"q(b)", 0.9}};
  for (const auto& v : j.at("values")) {
    const std::string key = v["predicate"].get<std::string>() + "(" + v["tuple"][0].get<std::string>() + ")";
    EXPECT_NEAR(v["value"].get<double>(), expected.at(key), 1e-6) << key;
  }
}

TEST(Cli, CollectiveSampleMovesViolatedPair) {
  const CliRun r = luk("solve-collective collective.lkb collective_priors.json");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("status"), "optimal");
  EXPECT_EQ(j.at("slacks").size(), 2u);
}

TEST(Cli, MalformedPriorsFail) {
  const fs::path priors = scratch() / "bad_priors.json";
  std::ofstream(priors) << "{\"priors\": [\n  {\"predicate\": \"p\", \"value\": 0.2},\n  oops\n]}";
  const CliRun r = luk("solve-collective collective.lkb '" + priors.string() + "'");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;
}

TEST(Cli, PslMapEvidenceForcesConsequent) {
  const CliRun r = luk("psl-map psl.lkb psl_evidence.json");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["values"]["a"], 1.0);
  EXPECT_NEAR(j["values"]["b"].get<double>(), 1.0, 1e-5);
}

TEST(Cli, PslLearnRuns) {
  const CliRun r = luk("psl-learn psl.lkb psl_training.json --iterations 3 --rate 0.1");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("history").size(), 3u);
  for (const auto& [name, w] : j.at("weights").items()) EXPECT_GE(w.get<double>(), 0.0) << name;
}

TEST(Cli, SolveKernelJob) {
  const CliRun r = luk("solve-kernel kernel/job.json");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("status"), "optimal");
  EXPECT_EQ(j.at("predicates").size(), 2u);
}

TEST(Cli, ExperimentZeroRepetitions) {
  const fs::path cfg = scratch() / "zero.json";
  std::ofstream(cfg) << R"({"repetitions": 0})";
  const CliRun r = luk("experiment '" + cfg.string() + "'");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "fraction,rep,variant,class,f1\n");
}

TEST(Cli, ExperimentBadConfigFails) {
  const fs::path cfg = scratch() / "bad.json";
  std::ofstream(cfg) << R"({"fractions": [0.0]})";
  EXPECT_NE(luk("experiment '" + cfg.string() + "'").code, 0);
}

TEST(Cli, RepeatedRunsAreByteIdentical) {
  const fs::path cfg = scratch() / "tiny.json";
  std::ofstream(cfg) << R"({"step": 1.0, "fractions": [0.3], "repetitions": 1, "subgradient": {"iterations": 100}})";
  for (const std::string& args : {"experiment '" + cfg.string() + "'", std::string("psl-map psl.lkb psl_evidence.json"),
                                 std::string("solve-collective collective.lkb collective_priors.json"),
                                 std::string("solve-kernel kernel/job.json")}) {
    const CliRun a = luk(args), b = luk(args);
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_EQ(a.out, b.out) << args;
  }
}

TEST(Cli, OutputFileOption) {
  const fs::path out = scratch() / "forms.json";
  const CliRun r = luk("compile forms.lkb -o '" + out.string() + "'");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(r.out.empty());
  EXPECT_EQ(slurp(out), luk("compile forms.lkb").out);
}
