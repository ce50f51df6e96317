#ifndef LUK_EXPERIMENT_HPP
#define LUK_EXPERIMENT_HPP

// Four classes on a grid, the rule (A and B) -> (C and D), and three ways of
// training the predictors:
//   variant 0  kernel machines without the rule
//   variant 1  the rule as (~A+~B+C) * (~A+~B+D), trained by subgradient
//   variant 2  the rule as (~A+~B+C) ^ (~A+~B+D), trained by the QP
// A and B are fully labeled, C on a random fraction of the grid, D never.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "luk/constraints.hpp"
#include "luk/error.hpp"
#include "luk/formula.hpp"
#include "luk/grounder.hpp"
#include "luk/kernel.hpp"
#include "luk/normalize.hpp"
#include "luk/parser.hpp"
#include "luk/qp.hpp"

namespace luk {

struct Box {
  Point lower;
  Point upper;

  bool contains(const Point& x, double eps = 1e-9) const {
    for (std::size_t k = 0; k < x.size(); ++k)
      if (x[k] < lower[k] - eps || x[k] > upper[k] + eps) return false;
    return true;
  }

  bool inside(const Box& outer) const {
    for (std::size_t k = 0; k < lower.size(); ++k)
      if (lower[k] < outer.lower[k] || upper[k] > outer.upper[k]) return false;
    return true;
  }
};

struct ExperimentConfig {
  Box domain{{-3.0, -3.0}, {3.0, 3.0}};
  double step = 0.5;
  Box A{{-3.0, -2.0}, {1.0, 2.0}};
  Box B{{-1.0, -1.0}, {3.0, 1.0}};
  Box C{{-1.0, -3.0}, {1.0, 3.0}};
  Box D{{-1.0, -1.0}, {1.0, 1.0}};
  std::vector<double> fractions{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  int repetitions = 5;
  double sigma = 1.0;
  double C1 = 15.0;
  double C2 = 10.0;
  std::uint64_t seed = 1;
  std::vector<int> variants{0, 1, 2};
  int subgradient_iterations = 3000;
  double subgradient_step = 0.01;

  void validate() const {
    const std::size_t d = domain.lower.size();
    if (d == 0 || domain.upper.size() != d) throw DomainError("experiment: domain box needs lower/upper of equal dimension");
    for (std::size_t k = 0; k < d; ++k)
      if (!(domain.lower[k] < domain.upper[k])) throw DomainError("experiment: empty domain box");
    if (!(step > 0.0)) throw DomainError("experiment: grid step must be positive");
    const char* names = "ABCD";
    int k = 0;
    for (const Box* b : {&A, &B, &C, &D}) {
      const std::string n(1, names[k++]);
      if (b->lower.size() != d || b->upper.size() != d) throw DomainError("experiment: class " + n + " has the wrong dimension");
      for (std::size_t i = 0; i < d; ++i)
        if (!(b->lower[i] <= b->upper[i])) throw DomainError("experiment: class " + n + " rectangle is inverted");
      if (!b->inside(domain)) throw DomainError("experiment: class " + n + " rectangle leaves the domain box");
    }
    for (double f : fractions)
      if (!(f > 0.0 && f <= 1.0)) throw DomainError("experiment: supervision fractions must lie in (0,1]");
    if (repetitions < 0) throw DomainError("experiment: repetitions must be nonnegative");
    if (!(sigma > 0.0)) throw DomainError("experiment: sigma must be positive");
    if (!(C1 > 0.0) || !(C2 > 0.0)) throw DomainError("experiment: C1 and C2 must be positive");
    for (int v : variants)
      if (v < 0 || v > 2) throw DomainError("experiment: variants are 0 (no rule), 1 and 2");
    if (subgradient_iterations < 1) throw DomainError("experiment: subgradient iterations must be positive");
    if (!(subgradient_step > 0.0)) throw DomainError("experiment: subgradient step must be positive");
  }

  std::vector<Point> grid() const {
    const std::size_t d = domain.lower.size();
    std::vector<std::size_t> count(d);
    for (std::size_t k = 0; k < d; ++k)
      count[k] = static_cast<std::size_t>(std::floor((domain.upper[k] - domain.lower[k]) / step + 1e-9)) + 1;
    std::vector<Point> out;
    std::vector<std::size_t> idx(d, 0);
    while (true) {
      Point p(d);
      for (std::size_t k = 0; k < d; ++k) p[k] = domain.lower[k] + static_cast<double>(idx[k]) * step;
      out.push_back(std::move(p));
      std::size_t k = d;
      while (k > 0 && ++idx[k - 1] == count[k - 1]) idx[--k] = 0;
      if (k == 0) break;
    }
    return out;
  }
};

namespace detail {

inline Box box_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_object() || !j.contains("lower") || !j.contains("upper"))
    throw std::invalid_argument("experiment config: " + what + " needs \"lower\" and \"upper\"");
  return {j.at("lower").get<Point>(), j.at("upper").get<Point>()};
}

inline nlohmann::json box_to_json(const Box& b) { return {{"lower", b.lower}, {"upper", b.upper}}; }

}  // namespace detail

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("experiment config must be a JSON object");
  static const std::vector<std::string> known{"domain",  "step", "classes", "fractions", "repetitions", "sigma",
                                              "C1",      "C2",   "seed",    "variants",  "subgradient"};
  for (const auto& [key, v] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw std::invalid_argument("experiment config: unknown key \"" + key + "\"");
  ExperimentConfig c;
  try {
    if (j.contains("domain")) c.domain = detail::box_from_json(j.at("domain"), "domain");
    c.step = j.value("step", c.step);
    if (j.contains("classes")) {
      const auto& cl = j.at("classes");
      if (!cl.is_object()) throw std::invalid_argument("experiment config: \"classes\" must be an object");
      for (const auto& [key, v] : cl.items()) {
        if (key == "A") c.A = detail::box_from_json(v, "class A");
        else if (key == "B") c.B = detail::box_from_json(v, "class B");
        else if (key == "C") c.C = detail::box_from_json(v, "class C");
        else if (key == "D") c.D = detail::box_from_json(v, "class D");
        else throw std::invalid_argument("experiment config: unknown class \"" + key + "\"");
      }
    }
    c.fractions = j.value("fractions", c.fractions);
    c.repetitions = j.value("repetitions", c.repetitions);
    c.sigma = j.value("sigma", c.sigma);
    c.C1 = j.value("C1", c.C1);
    c.C2 = j.value("C2", c.C2);
    c.seed = j.value("seed", c.seed);
    c.variants = j.value("variants", c.variants);
    if (j.contains("subgradient")) {
      const auto& s = j.at("subgradient");
      c.subgradient_iterations = s.value("iterations", c.subgradient_iterations);
      c.subgradient_step = s.value("step", c.subgradient_step);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  return {{"domain", detail::box_to_json(c.domain)},
          {"step", c.step},
          {"classes",
           {{"A", detail::box_to_json(c.A)},
            {"B", detail::box_to_json(c.B)},
            {"C", detail::box_to_json(c.C)},
            {"D", detail::box_to_json(c.D)}}},
          {"fractions", c.fractions},
          {"repetitions", c.repetitions},
          {"sigma", c.sigma},
          {"C1", c.C1},
          {"C2", c.C2},
          {"seed", c.seed},
          {"variants", c.variants},
          {"subgradient", {{"iterations", c.subgradient_iterations}, {"step", c.subgradient_step}}}};
}

/// Clauses of (A and B) -> (C and D) in CNF.
inline std::vector<Clause> experiment_clauses(const std::string& arg = "") {
  auto lit = [&](const char* p, bool pos) { return Literal{arg.empty() ? std::string(p) : std::string(p) + "(" + arg + ")", pos}; };
  return {{lit("A", false), lit("B", false), lit("C", true)}, {lit("A", false), lit("B", false), lit("D", true)}};
}

inline double f1_score(const std::vector<bool>& truth, const std::vector<bool>& predicted) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    tp += truth[i] && predicted[i];
    fp += !truth[i] && predicted[i];
    fn += truth[i] && !predicted[i];
  }
  return tp == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

/// Predictions of the four classes on the grid.
using GridScores = std::array<std::vector<double>, 4>;

/// Training data of one run: A, B fully labeled; C labeled at `c_labeled`.
inline TrainingSets experiment_training(const ExperimentConfig& cfg, const std::vector<Point>& grid,
                                        const std::vector<std::size_t>& c_labeled) {
  const Box* boxes[4] = {&cfg.A, &cfg.B, &cfg.C, &cfg.D};
  TrainingSets ts;
  for (int k = 0; k < 4; ++k) {
    PredicateData d;
    d.name = std::string(1, "ABCD"[k]);
    d.unsupervised = grid;
    if (k < 2)
      for (const auto& x : grid) d.add_label(x, boxes[k]->contains(x) ? 1 : -1);
    if (k == 2)
      for (std::size_t s : c_labeled) d.add_label(grid[s], boxes[k]->contains(grid[s]) ? 1 : -1);
    ts.predicates.push_back(std::move(d));
  }
  return ts;
}

/// Variant 0 or 2: the QP, with or without the concave translation of the rule.
inline GridScores train_qp_variant(const ExperimentConfig& cfg, const std::vector<Point>& grid, const TrainingSets& ts,
                                   bool with_rule, const QPSettings& settings) {
  SourceKB kb;
  std::map<std::string, Point> embedding;
  std::vector<std::string> constants;
  for (std::size_t s = 0; s < grid.size(); ++s) {
    constants.push_back("s" + std::to_string(s));
    embedding[constants.back()] = grid[s];
  }
  kb.domains.emplace_back("P", constants);
  for (const char* p : {"A", "B", "C", "D"}) kb.predicates.push_back({p, {"P"}});
  SoftConstraintSet logic;
  std::unique_ptr<GroundingMap> map;
  std::unique_ptr<AtomSites> sites;
  if (with_rule) {
    kb.rules.push_back({"rule", 1.0, Formula::forall("x", fuzzify_cnf(experiment_clauses("x"), CnfTranslation::Concave))});
    map = std::make_unique<GroundingMap>(kb);
    logic = compile_constraints(kb, *map);
    sites = std::make_unique<AtomSites>(*map, ts, embedding);
  }
  std::vector<KernelSpec> kernels(4, KernelSpec::gaussian(cfg.sigma));
  const KernelProblem kp = assemble_primal(logic, sites.get(), ts, kernels, cfg.C1, cfg.C2);
  const KernelModel m = train(kp, settings);
  GridScores out;
  for (std::size_t j = 0; j < 4; ++j)
    for (const auto& x : grid) out[j].push_back(predict(m, j, x));
  return out;
}

struct SubgradientTrace {
  double best_objective = 0.0;
  std::vector<double> objective;  // per iteration
};

/// Variant 1: the same objective as the QP with the strong-pair translation,
/// whose penalty min{1, h1 + h2} is not convex. Projected-free subgradient
/// steps alpha <- alpha - eta (alpha + g), b <- b - eta sum(g) / |S| with
/// eta = eta0 / sqrt(t); the best iterate is kept. All classes share the grid
/// as sites, so one Gram matrix serves every predicate.
inline GridScores train_subgradient_variant(const ExperimentConfig& cfg, const std::vector<Point>& grid,
                                            const TrainingSets& ts, std::mt19937_64& rng,
                                            SubgradientTrace* trace = nullptr) {
  const auto N = static_cast<Eigen::Index>(grid.size());
  for (const auto& d : ts.predicates)
    if (d.sites() != grid) throw std::invalid_argument("subgradient variant expects the grid as every predicate's sites");
  MatrixXd K = gram_matrix(KernelSpec::gaussian(cfg.sigma), grid);
  K.diagonal().array() += kGramRidge;
  const CompiledFormula rule(fuzzify_cnf(experiment_clauses(), CnfTranslation::StrongPair), {"A", "B", "C", "D"});

  std::map<Point, Eigen::Index> site_of;
  for (Eigen::Index s = 0; s < N; ++s) site_of.emplace(grid[static_cast<std::size_t>(s)], s);
  std::vector<std::vector<std::pair<Eigen::Index, double>>> labels(4);
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t l = 0; l < ts.predicates[j].supervised.size(); ++l)
      labels[j].emplace_back(site_of.at(ts.predicates[j].supervised[l]), ts.predicates[j].labels[l]);

  std::uniform_real_distribution<double> small(-0.01, 0.01), unit(0.0, 1.0);
  MatrixXd alpha(N, 4);
  Eigen::Vector4d bias;
  for (Eigen::Index j = 0; j < 4; ++j) {
    for (Eigen::Index s = 0; s < N; ++s) alpha(s, j) = small(rng);
    bias[j] = unit(rng);
  }

  const double C1 = cfg.C1, C2 = cfg.C2;
  MatrixXd best_alpha = alpha;
  Eigen::Vector4d best_bias = bias;
  double best = std::numeric_limits<double>::infinity();
  MatrixXd G(N, 4);
  std::array<double, 4> x{}, dx{};
  for (int t = 1; t <= cfg.subgradient_iterations + 1; ++t) {
    const MatrixXd KA = K * alpha;
    MatrixXd P = KA;
    P.rowwise() += bias.transpose();
    double obj = 0.5 * (alpha.array() * KA.array()).sum();
    G.setZero();
    for (Eigen::Index j = 0; j < 4; ++j) {
      for (const auto& [s, y] : labels[static_cast<std::size_t>(j)]) {
        const double h = 0.5 * (1.0 - y * (2.0 * P(s, j) - 1.0));
        if (h > 0.0) {
          obj += C1 * h;
          G(s, j) -= C1 * y;
        }
      }
      for (Eigen::Index s = 0; s < N; ++s) {
        if (P(s, j) > 1.0) {
          obj += C1 * (P(s, j) - 1.0);
          G(s, j) += C1;
        } else if (P(s, j) < 0.0) {
          obj -= C1 * P(s, j);
          G(s, j) -= C1;
        }
      }
    }
    for (Eigen::Index s = 0; s < N; ++s) {
      for (Eigen::Index j = 0; j < 4; ++j) x[j] = std::clamp(P(s, j), 0.0, 1.0);
      const double f = rule.value_and_gradient(x, dx);
      obj += C2 * (1.0 - f);
      for (Eigen::Index j = 0; j < 4; ++j)
        if (P(s, j) > 0.0 && P(s, j) < 1.0) G(s, j) -= C2 * dx[static_cast<std::size_t>(j)];
    }
    if (trace) trace->objective.push_back(obj);
    if (obj < best) {
      best = obj;
      best_alpha = alpha;
      best_bias = bias;
    }
    if (t > cfg.subgradient_iterations) break;
    const double eta = cfg.subgradient_step / std::sqrt(static_cast<double>(t));
    bias -= eta * G.colwise().sum().transpose() / static_cast<double>(N);
    alpha -= eta * (alpha + G);
  }
  if (trace) trace->best_objective = best;
  GridScores out;
  const MatrixXd P = K * best_alpha;
  for (Eigen::Index j = 0; j < 4; ++j)
    for (Eigen::Index s = 0; s < N; ++s) out[static_cast<std::size_t>(j)].push_back(P(s, j) + best_bias[j]);
  return out;
}

struct ExperimentRow {
  double fraction = 0.0;
  int rep = 0;
  int variant = 0;
  char cls = 'C';
  double f1 = 0.0;
};

/// Generator of one (fraction, repetition) run; independent of the others.
inline std::mt19937_64 run_rng(std::uint64_t seed, std::size_t fraction_index, int rep) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(fraction_index), static_cast<std::uint32_t>(rep)};
  return std::mt19937_64(seq);
}

/// Rows for one (fraction, repetition): F1 of C and D per requested variant.
inline std::vector<ExperimentRow> run_single(const ExperimentConfig& cfg, std::size_t fraction_index, int rep,
                                             const QPSettings& settings = {}) {
  const std::vector<Point> grid = cfg.grid();
  std::mt19937_64 rng = run_rng(cfg.seed, fraction_index, rep);
  const double fraction = cfg.fractions.at(fraction_index);
  std::vector<std::size_t> perm(grid.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_labeled = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(grid.size()))));
  perm.resize(std::min(n_labeled, grid.size()));
  std::sort(perm.begin(), perm.end());
  const TrainingSets ts = experiment_training(cfg, grid, perm);

  std::vector<bool> truth_c, truth_d;
  for (const auto& x : grid) {
    truth_c.push_back(cfg.C.contains(x));
    truth_d.push_back(cfg.D.contains(x));
  }
  std::vector<ExperimentRow> rows;
  for (int v : cfg.variants) {
    GridScores scores;
    if (v == 1) scores = train_subgradient_variant(cfg, grid, ts, rng);
    else scores = train_qp_variant(cfg, grid, ts, v == 2, settings);
    auto decide = [](const std::vector<double>& p) {
      std::vector<bool> out;
      for (double x : p) out.push_back(x >= 0.5);
      return out;
    };
    rows.push_back({fraction, rep, v, 'C', f1_score(truth_c, decide(scores[2]))});
    rows.push_back({fraction, rep, v, 'D', f1_score(truth_d, decide(scores[3]))});
  }
  return rows;
}

inline std::vector<ExperimentRow> run_experiment(const ExperimentConfig& cfg, const QPSettings& settings = {}) {
  cfg.validate();
  std::vector<ExperimentRow> rows;
  for (std::size_t f = 0; f < cfg.fractions.size(); ++f)
    for (int r = 0; r < cfg.repetitions; ++r)
      for (auto& row : run_single(cfg, f, r, settings)) rows.push_back(row);
  return rows;
}

inline void write_csv(std::ostream& out, const std::vector<ExperimentRow>& rows) {
  out << "fraction,rep,variant,class,f1\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%g,%d,%d,%c,%.6f\n", r.fraction, r.rep, r.variant, r.cls, r.f1);
    out << buf;
  }
}

}  // namespace luk

#endif  // LUK_EXPERIMENT_HPP
