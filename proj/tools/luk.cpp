// luk: command-line driver for the Lukasiewicz constraint compiler and solvers.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "luk/luk.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Common {
  double tol = 1e-6;
  int max_iter = 50000;
  std::uint64_t seed = 1;
  bool seed_set = false;
  bool override_guard = false;

  luk::QPSettings qp() const {
    luk::QPSettings s;
    s.tol = tol;
    s.max_iter = max_iter;
    return s;
  }

  luk::GroundOptions grounding() const {
    luk::GroundOptions g;
    g.override_guard = override_guard;
    return g;
  }
};

// Exit codes: 1 bad input or runtime failure, 2 formula outside both fragments,
// 3 solver did not reach optimality.
constexpr int kFailure = 1;
constexpr int kNeither = 2;
constexpr int kNotOptimal = 3;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

luk::SourceKB read_kb(const std::string& path) {
  try {
    return luk::parse_kb(read_file(path));
  } catch (const luk::ParseError& e) {
    throw std::runtime_error(path + ":" + e.what());
  }
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

int status_code(luk::QPStatus s) { return s == luk::QPStatus::Optimal ? 0 : kNotOptimal; }

// --- compile -------------------------------------------------------------------

int cmd_compile(const Common& opt, const std::string& kb_path, const std::string& out_path) {
  const luk::SourceKB kb = read_kb(kb_path);
  json rules = json::array();
  int failures = 0;
  for (const auto& rule : kb.rules) {
    luk::Formula f = rule.formula;
    if (luk::has_quantifiers(f)) f = luk::ground(f, kb, opt.grounding()).formula;
    const luk::Formula nf = luk::normalize(f);
    const luk::Classified c = luk::classify_with_witness(nf);
    if (c.label == luk::FragmentLabel::Neither) {
      std::cerr << "error: rule '" << rule.name << "' is in neither fragment: " << luk::explain_neither(nf) << "\n";
      ++failures;
      continue;
    }
    const auto target = c.label == luk::FragmentLabel::Convex ? luk::FragmentLabel::Convex : luk::FragmentLabel::Concave;
    const luk::PiecewiseLinearForm form = luk::compile(c.formula, target);
    if (form.max_abs_coefficient() > 1)
      std::cerr << "warning: rule '" << rule.name << "' compiles with coefficients up to " << form.max_abs_coefficient()
                << "\n";
    rules.push_back({{"name", rule.name},
                     {"weight", rule.weight},
                     {"fragment", luk::to_string(c.label)},
                     {"formula", luk::to_string(c.formula)},
                     {"form", luk::to_json(form)}});
  }
  if (failures) return kNeither;
  write_output(out_path, dump({{"rules", rules}}));
  return 0;
}

// --- ground --------------------------------------------------------------------

int cmd_ground(const Common& opt, const std::string& kb_path, const std::string& out_path) {
  const luk::SourceKB kb = read_kb(kb_path);
  const luk::GroundingMap map(kb);
  json rules = json::array();
  for (const auto& rule : kb.rules) {
    const luk::Formula g = luk::ground(rule.formula, kb, opt.grounding()).formula;
    rules.push_back({{"name", rule.name}, {"ground", luk::to_string(g)}, {"leaves", luk::leaf_count(g)}});
  }
  write_output(out_path, dump({{"map", map.to_json()}, {"rules", rules}}));
  return 0;
}

// --- solve-kernel --------------------------------------------------------------
//
// Job file:
// {"kb": "rules.lkb", "data": {"p": "p.csv"}, "kernels": {"p": {"kind": "gaussian", "sigma": 1}},
//  "embedding": {"a": [0.0, 1.0]}, "C1": 15, "C2": 10}
// Paths are relative to the job file. Ground atoms that have an embedding
// become unsupervised sites of their predicate.

int cmd_solve_kernel(const Common& opt, const std::string& job_path, const std::string& out_path) {
  const json job = read_json(job_path);
  const fs::path base = fs::path(job_path).parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? p : (base / p).string(); };
  if (!job.contains("data") || !job.at("data").is_object()) throw std::invalid_argument("job: \"data\" object required");

  luk::TrainingSets ts;
  std::vector<luk::KernelSpec> kernels;
  for (const auto& [name, path] : job.at("data").items()) {
    ts.predicates.push_back(luk::load_csv_file(resolve(path.get<std::string>()), name));
    const json k = job.contains("kernels") && job.at("kernels").contains(name) ? job.at("kernels").at(name)
                                                                               : json{{"kind", "gaussian"}, {"sigma", 1.0}};
    kernels.push_back(luk::kernel_from_json(k));
  }
  std::map<std::string, luk::Point> embedding;
  if (job.contains("embedding")) embedding = job.at("embedding").get<std::map<std::string, luk::Point>>();

  luk::SoftConstraintSet logic;
  std::optional<luk::SourceKB> kb;
  std::optional<luk::GroundingMap> map;
  std::optional<luk::AtomSites> sites;
  if (job.contains("kb")) {
    kb = read_kb(resolve(job.at("kb").get<std::string>()));
    map.emplace(*kb);
    for (std::size_t g = 0; g < map->size(); ++g) {
      const auto& block = map->block_of(g);
      auto it = std::find_if(ts.predicates.begin(), ts.predicates.end(),
                             [&](const luk::PredicateData& d) { return d.name == block.predicate; });
      if (it == ts.predicates.end()) continue;
      luk::Point x;
      bool ok = !block.tuples[g - block.offset].empty();
      for (const auto& c : block.tuples[g - block.offset]) {
        auto e = embedding.find(c);
        if (e == embedding.end()) {
          ok = false;
          break;
        }
        x.insert(x.end(), e->second.begin(), e->second.end());
      }
      if (ok) it->unsupervised.push_back(std::move(x));
    }
    logic = luk::compile_constraints(*kb, *map, 1.0, opt.grounding());
    sites.emplace(*map, ts, embedding);
  }
  const luk::KernelProblem kp =
      luk::assemble_primal(logic, sites ? &*sites : nullptr, ts, kernels, job.value("C1", 15.0), job.value("C2", 10.0));
  const luk::KernelModel model = luk::train(kp, opt.qp());
  write_output(out_path, dump(luk::to_json(model)));
  return status_code(model.status);
}

// --- solve-collective ----------------------------------------------------------

int cmd_solve_collective(const Common& opt, const std::string& kb_path, const std::string& priors_path, double C1,
                         const std::string& out_path) {
  const luk::SourceKB kb = read_kb(kb_path);
  const luk::GroundingMap map(kb);
  const luk::PriorTable priors = luk::priors_from_json(read_json(priors_path), map);
  const luk::SoftConstraintSet constraints = luk::compile_constraints(kb, map, 1.0, opt.grounding());
  const luk::CollectiveResult r = luk::solve_collective(priors, constraints, C1, opt.qp());
  write_output(out_path, dump(luk::to_json(r, map, constraints)));
  return status_code(r.solution.status);
}

// --- psl -----------------------------------------------------------------------

int cmd_psl_map(const Common& opt, const std::string& kb_path, const std::string& evidence_path,
                const std::string& out_path) {
  const luk::SourceKB kb = read_kb(kb_path);
  const auto rules = luk::WeightedRuleSet::build(kb, opt.grounding());
  const luk::Interpretation ev = luk::interpretation_from_json(read_json(evidence_path), rules.map);
  const luk::MapResult r = luk::map_inference(rules, ev, opt.qp());
  write_output(out_path, dump(luk::to_json(r, rules)));
  return status_code(r.solution.status);
}

int cmd_psl_learn(const Common& opt, const std::string& kb_path, const std::string& training_path, double rate,
                  int iterations, const std::string& out_path) {
  const luk::SourceKB kb = read_kb(kb_path);
  const auto rules = luk::WeightedRuleSet::build(kb, opt.grounding());
  const luk::Interpretation tr = luk::interpretation_from_json(read_json(training_path), rules.map);
  const luk::LearnResult r = luk::learn_weights(rules, tr, rate, iterations, opt.qp());
  json weights = json::object();
  for (std::size_t j = 0; j < rules.rules.size(); ++j) weights[rules.rules[j].name] = r.weights[j];
  write_output(out_path, dump({{"weights", weights}, {"history", r.history}}));
  return 0;
}

// --- experiment ----------------------------------------------------------------

int cmd_experiment(const Common& opt, const std::string& config_path, const std::string& out_path) {
  luk::ExperimentConfig cfg =
      config_path.empty() ? luk::ExperimentConfig{} : luk::experiment_config_from_json(read_json(config_path));
  if (opt.seed_set) cfg.seed = opt.seed;
  const auto rows = luk::run_experiment(cfg, opt.qp());
  std::ostringstream csv;
  luk::write_csv(csv, rows);
  write_output(out_path, csv.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lukasiewicz-logic constraint compiler and solvers"};
  app.require_subcommand(1);
  Common opt;
  app.add_option("--tol", opt.tol, "solver tolerance")->check(CLI::PositiveNumber);
  app.add_option("--max-iter", opt.max_iter, "solver iteration limit")->check(CLI::PositiveNumber);
  auto* seed = app.add_option("--seed", opt.seed, "random seed (experiment)");
  app.add_flag("--override-grounding-guard", opt.override_guard, "allow groundings above the size guard");

  std::string kb, out, second, config;
  double C1 = 1.0, rate = 0.1;
  int iterations = 10;

  auto* compile = app.add_subcommand("compile", "compile every rule to a min/max-of-affine form");
  compile->add_option("kb", kb, "knowledge base")->required();
  compile->add_option("-o,--out", out, "output file (default stdout)");

  auto* ground = app.add_subcommand("ground", "ground every rule and print the grounding map");
  ground->add_option("kb", kb, "knowledge base")->required();
  ground->add_option("-o,--out", out, "output file (default stdout)");

  auto* kernel = app.add_subcommand("solve-kernel", "train kernel predicates under the rules of a job file");
  kernel->add_option("job", config, "job file")->required();
  kernel->add_option("-o,--out", out, "model file (default stdout)");

  auto* collective = app.add_subcommand("solve-collective", "adjust priors to the rules");
  collective->add_option("kb", kb, "knowledge base")->required();
  collective->add_option("priors", second, "priors file")->required();
  collective->add_option("--C1", C1, "violation cost")->check(CLI::PositiveNumber);
  collective->add_option("-o,--out", out, "output file (default stdout)");

  auto* psl_map = app.add_subcommand("psl-map", "MAP state of the weighted rules given evidence");
  psl_map->add_option("kb", kb, "knowledge base")->required();
  psl_map->add_option("evidence", second, "evidence file")->required();
  psl_map->add_option("-o,--out", out, "output file (default stdout)");

  auto* psl_learn = app.add_subcommand("psl-learn", "learn rule weights from a training interpretation");
  psl_learn->add_option("kb", kb, "knowledge base")->required();
  psl_learn->add_option("training", second, "training file")->required();
  psl_learn->add_option("--rate", rate, "ascent step")->check(CLI::PositiveNumber);
  psl_learn->add_option("--iterations", iterations, "ascent steps")->check(CLI::NonNegativeNumber);
  psl_learn->add_option("-o,--out", out, "output file (default stdout)");

  auto* experiment = app.add_subcommand("experiment", "run the four-class grid experiment, write CSV");
  experiment->add_option("config", config, "config file (defaults when omitted)");
  experiment->add_option("-o,--out", out, "CSV file (default stdout)");

  CLI11_PARSE(app, argc, argv);
  opt.seed_set = seed->count() > 0;

  try {
    if (*compile) return cmd_compile(opt, kb, out);
    if (*ground) return cmd_ground(opt, kb, out);
    if (*kernel) return cmd_solve_kernel(opt, config, out);
    if (*collective) return cmd_solve_collective(opt, kb, second, C1, out);
    if (*psl_map) return cmd_psl_map(opt, kb, second, out);
    if (*psl_learn) return cmd_psl_learn(opt, kb, second, rate, iterations, out);
    if (*experiment) return cmd_experiment(opt, config, out);
  } catch (const luk::FragmentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNeither;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
