#ifndef LUK_KERNEL_HPP
#define LUK_KERNEL_HPP

// Kernel-expansion predicates p_j(x) = sum_s alpha_js k_j(x_s, x) + b_j
// trained under pointwise, consistency and logical constraints. The
// expansion runs over the constraint sites S_j, so ||w_j||^2 = alpha_j' K_j alpha_j.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "luk/constraints.hpp"
#include "luk/error.hpp"
#include "luk/grounder.hpp"
#include "luk/qp.hpp"

namespace luk {

using Point = std::vector<double>;

/// Ridge added to every Gram matrix; predictions at a training site include it.
inline constexpr double kGramRidge = 1e-10;

struct KernelSpec {
  enum class Kind { Gaussian, Polynomial, Linear };
  Kind kind = Kind::Gaussian;
  double sigma = 1.0;
  int degree = 2;
  double offset = 1.0;

  static KernelSpec gaussian(double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian kernel: sigma must be positive");
    return {Kind::Gaussian, sigma, 2, 1.0};
  }
  static KernelSpec polynomial(int degree, double offset) {
    if (degree < 1) throw std::invalid_argument("polynomial kernel: degree must be >= 1");
    return {Kind::Polynomial, 1.0, degree, offset};
  }
  static KernelSpec linear() { return {Kind::Linear, 1.0, 1, 0.0}; }

  double operator()(const Point& x, const Point& y) const {
    if (x.size() != y.size()) throw std::invalid_argument("kernel: point dimension mismatch");
    switch (kind) {
      case Kind::Gaussian: {
        double d2 = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) d2 += (x[i] - y[i]) * (x[i] - y[i]);
        return std::exp(-d2 / (2.0 * sigma * sigma));
      }
      case Kind::Polynomial: {
        double dot = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) dot += x[i] * y[i];
        return std::pow(dot + offset, degree);
      }
      case Kind::Linear: {
        double dot = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) dot += x[i] * y[i];
        return dot;
      }
    }
    return 0.0;
  }
};

inline nlohmann::json to_json(const KernelSpec& k) {
  switch (k.kind) {
    case KernelSpec::Kind::Gaussian: return {{"kind", "gaussian"}, {"sigma", k.sigma}};
    case KernelSpec::Kind::Polynomial: return {{"kind", "polynomial"}, {"degree", k.degree}, {"offset", k.offset}};
    case KernelSpec::Kind::Linear: return {{"kind", "linear"}};
  }
  return {};
}

inline KernelSpec kernel_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "gaussian") return KernelSpec::gaussian(j.value("sigma", 1.0));
  if (kind == "polynomial") return KernelSpec::polynomial(j.value("degree", 2), j.value("offset", 1.0));
  if (kind == "linear") return KernelSpec::linear();
  throw std::invalid_argument("unknown kernel kind '" + kind + "'");
}

/// Training data of one predicate: supervised pairs (labels -1/+1) and
/// unsupervised constraint sites.
struct PredicateData {
  std::string name;
  std::vector<Point> supervised;
  std::vector<int> labels;
  std::vector<Point> unsupervised;

  void add_label(Point x, int y) {
    if (y != -1 && y != 1) throw DomainError("labels must be -1 or +1");
    supervised.push_back(std::move(x));
    labels.push_back(y);
  }

  /// S_j: unsupervised points followed by supervised points, duplicates
  /// removed keeping the first occurrence.
  std::vector<Point> sites() const {
    std::vector<Point> out;
    std::map<Point, bool> seen;
    for (const auto* set : {&unsupervised, &supervised})
      for (const auto& p : *set)
        if (seen.emplace(p, true).second) out.push_back(p);
    return out;
  }

  std::size_t dimension() const {
    if (!supervised.empty()) return supervised.front().size();
    if (!unsupervised.empty()) return unsupervised.front().size();
    return 0;
  }
};

struct TrainingSets {
  std::vector<PredicateData> predicates;

  std::size_t index_of(const std::string& name) const {
    for (std::size_t j = 0; j < predicates.size(); ++j)
      if (predicates[j].name == name) return j;
    throw GroundingError("no training data for predicate '" + name + "'");
  }
};

/// Reads x1,...,xn,label rows. A header line is skipped when its first field
/// is not numeric; a blank label marks an unsupervised point.
inline PredicateData load_csv(std::istream& in, const std::string& name) {
  PredicateData d;
  d.name = name;
  std::string line;
  std::size_t lineno = 0;
  std::optional<std::size_t> width;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      if (a == std::string::npos) return std::string();
      return s.substr(a, s.find_last_not_of(" \t") - a + 1);
    };
    for (auto& x : fields) x = trim(x);
    auto is_number = [](const std::string& s) {
      if (s.empty()) return false;
      char* end = nullptr;
      std::strtod(s.c_str(), &end);
      return end && *end == '\0';
    };
    if (lineno == 1 && !is_number(fields.front())) continue;
    if (fields.size() < 2) throw ParseError("expected x1,...,xn,label", lineno, 1);
    if (!width) width = fields.size();
    if (fields.size() != *width) throw ParseError("inconsistent column count", lineno, 1);
    Point x;
    for (std::size_t k = 0; k + 1 < fields.size(); ++k) {
      if (!is_number(fields[k])) throw ParseError("non-numeric coordinate '" + fields[k] + "'", lineno, k + 1);
      x.push_back(std::stod(fields[k]));
    }
    const std::string& label = fields.back();
    if (label.empty()) {
      d.unsupervised.push_back(std::move(x));
    } else {
      if (!is_number(label)) throw ParseError("non-numeric label '" + label + "'", lineno, fields.size());
      const double y = std::stod(label);
      if (y != 1.0 && y != -1.0) throw ParseError("labels must be -1 or +1", lineno, fields.size());
      d.add_label(std::move(x), static_cast<int>(y));
    }
  }
  return d;
}

inline PredicateData load_csv_file(const std::string& path, const std::string& name) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return load_csv(in, name);
}

/// Maps ground atoms to (predicate, site): an atom p(c1,...,ck) sits at the
/// concatenation of the constants' embeddings.
class AtomSites {
 public:
  struct Site {
    std::size_t predicate;
    std::size_t site;
  };

  AtomSites(const GroundingMap& map, const TrainingSets& data, const std::map<std::string, Point>& embedding) {
    std::vector<std::map<Point, std::size_t>> site_index(data.predicates.size());
    for (std::size_t j = 0; j < data.predicates.size(); ++j) {
      const auto s = data.predicates[j].sites();
      for (std::size_t k = 0; k < s.size(); ++k) site_index[j].emplace(s[k], k);
    }
    sites_.resize(map.size());
    for (std::size_t g = 0; g < map.size(); ++g) {
      const auto& block = map.block_of(g);
      const auto& tuple = block.tuples[g - block.offset];
      auto jt = std::find_if(data.predicates.begin(), data.predicates.end(),
                             [&](const PredicateData& d) { return d.name == block.predicate; });
      if (jt == data.predicates.end()) continue;
      const std::size_t j = static_cast<std::size_t>(jt - data.predicates.begin());
      Point x;
      bool ok = true;
      for (const auto& c : tuple) {
        auto e = embedding.find(c);
        if (e == embedding.end()) {
          ok = false;
          break;
        }
        x.insert(x.end(), e->second.begin(), e->second.end());
      }
      if (!ok) continue;
      auto it = site_index[j].find(x);
      if (it != site_index[j].end()) sites_[g] = Site{j, it->second};
    }
    keys_ = map.keys();
  }

  const Site& at(std::size_t grounding) const {
    if (!sites_.at(grounding))
      throw GroundingError("ground atom '" + keys_.at(grounding) + "' is not a constraint site of its predicate");
    return *sites_[grounding];
  }

 private:
  std::vector<std::optional<Site>> sites_;
  std::vector<std::string> keys_;
};

/// Decision-vector layout: (alpha_1, b_1, ..., alpha_J, b_J, xi_pointwise, xi_logical).
struct PrimalLayout {
  std::vector<std::vector<Point>> sites;
  std::vector<std::size_t> alpha_offset;
  std::vector<std::size_t> bias_index;
  std::size_t pointwise_offset = 0;
  std::size_t num_pointwise = 0;
  std::size_t logical_offset = 0;
  std::size_t num_logical = 0;
  std::size_t pointwise_rows = 0;
  std::size_t consistency_rows = 0;
  std::size_t logical_rows = 0;
};

struct KernelProblem {
  QPProblem qp;
  PrimalLayout layout;
  std::vector<KernelSpec> kernels;
  std::vector<std::string> names;
  double C1 = 0.0;
  double C2 = 0.0;
};

inline MatrixXd gram_matrix(const KernelSpec& k, const std::vector<Point>& pts) {
  const auto n = static_cast<Eigen::Index>(pts.size());
  MatrixXd K(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b <= a; ++b) K(a, b) = K(b, a) = k(pts[a], pts[b]);
  return K;
}

/// Builds the primal QP. `logic` indexes pbar through `atoms`; logical slack
/// s is charged C2 * logic.slack_weight[s].
inline KernelProblem assemble_primal(const SoftConstraintSet& logic, const AtomSites* atoms, const TrainingSets& data,
                                     const std::vector<KernelSpec>& kernels, double C1, double C2) {
  if (!(C1 > 0.0) || !(C2 > 0.0)) throw std::invalid_argument("C1 and C2 must be positive");
  if (kernels.size() != data.predicates.size()) throw std::invalid_argument("one kernel per predicate required");
  if (!logic.rows.empty() && !atoms) throw std::invalid_argument("logical constraints need an atom-site map");
  const std::size_t J = data.predicates.size();
  KernelProblem kp;
  kp.kernels = kernels;
  kp.C1 = C1;
  kp.C2 = C2;
  auto& L = kp.layout;
  std::size_t n = 0;
  std::vector<MatrixXd> gram(J);
  for (std::size_t j = 0; j < J; ++j) {
    kp.names.push_back(data.predicates[j].name);
    L.sites.push_back(data.predicates[j].sites());
    const std::size_t dim = data.predicates[j].dimension();
    for (const auto& p : L.sites.back())
      if (p.size() != dim) throw std::invalid_argument("predicate '" + data.predicates[j].name + "': mixed point dimensions");
    gram[j] = gram_matrix(kernels[j], L.sites[j]);
    gram[j].diagonal().array() += kGramRidge;
    L.alpha_offset.push_back(n);
    n += L.sites[j].size();
    L.bias_index.push_back(n);
    n += 1;
  }
  L.pointwise_offset = n;
  for (const auto& d : data.predicates) L.num_pointwise += d.supervised.size();
  n += L.num_pointwise;
  L.logical_offset = n;
  L.num_logical = logic.num_slacks();
  n += L.num_logical;
  for (const auto& s : L.sites) L.consistency_rows += 2 * s.size();
  L.pointwise_rows = L.num_pointwise;
  L.logical_rows = logic.rows.size();
  const std::size_t m = L.pointwise_rows + L.consistency_rows + L.logical_rows;

  QPProblem& qp = kp.qp;
  qp = QPProblem(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  for (std::size_t j = 0; j < J; ++j) {
    const auto o = static_cast<Eigen::Index>(L.alpha_offset[j]);
    const auto s = static_cast<Eigen::Index>(L.sites[j].size());
    qp.Q.block(o, o, s, s) = gram[j];
  }
  // Row helper: coefficient a on p_j at site s.
  auto add_p = [&](Eigen::Index row, std::size_t j, std::size_t s, double a) {
    const auto o = static_cast<Eigen::Index>(L.alpha_offset[j]);
    qp.A.row(row).segment(o, static_cast<Eigen::Index>(L.sites[j].size())) += a * gram[j].row(static_cast<Eigen::Index>(s));
    qp.A(row, static_cast<Eigen::Index>(L.bias_index[j])) += a;
  };
  Eigen::Index row = 0;
  std::size_t slack = L.pointwise_offset;
  for (std::size_t j = 0; j < J; ++j) {
    const auto& d = data.predicates[j];
    std::map<Point, std::size_t> site_of;
    for (std::size_t s = 0; s < L.sites[j].size(); ++s) site_of.emplace(L.sites[j][s], s);
    for (std::size_t l = 0; l < d.supervised.size(); ++l, ++row, ++slack) {
      // y(2p - 1) >= 1 - 2 xi   <=>   -2y p - 2 xi <= -1 - y
      const double y = d.labels[l];
      add_p(row, j, site_of.at(d.supervised[l]), -2.0 * y);
      qp.A(row, static_cast<Eigen::Index>(slack)) = -2.0;
      qp.b[row] = -1.0 - y;
      qp.c[static_cast<Eigen::Index>(slack)] = C1;
      qp.l[static_cast<Eigen::Index>(slack)] = 0.0;
    }
  }
  for (std::size_t j = 0; j < J; ++j)
    for (std::size_t s = 0; s < L.sites[j].size(); ++s) {
      add_p(row, j, s, 1.0);
      qp.b[row++] = 1.0;
      add_p(row, j, s, -1.0);
      qp.b[row++] = 0.0;
    }
  for (std::size_t h = 0; h < L.num_logical; ++h) {
    const auto k = static_cast<Eigen::Index>(L.logical_offset + h);
    qp.c[k] = C2 * logic.slack_weight[h];
    qp.l[k] = 0.0;
  }
  for (const auto& r : logic.rows) {
    for (const auto& [g, a] : r.terms) {
      const auto& site = atoms->at(g);
      add_p(row, site.predicate, site.site, a);
    }
    qp.A(row, static_cast<Eigen::Index>(L.logical_offset + r.slack)) = -1.0;
    qp.b[row] = -r.constant;
    ++row;
  }
  return kp;
}

struct KernelPredicate {
  std::string name;
  KernelSpec kernel;
  std::vector<Point> points;
  VectorXd alpha;
  double bias = 0.0;
};

struct KernelModel {
  std::vector<KernelPredicate> predicates;
  double C1 = 0.0;
  double C2 = 0.0;
  VectorXd pointwise_slacks;
  VectorXd logical_slacks;
  QPStatus status = QPStatus::Optimal;
  KKTResiduals residuals;

  std::size_t index_of(const std::string& name) const {
    for (std::size_t j = 0; j < predicates.size(); ++j)
      if (predicates[j].name == name) return j;
    throw std::invalid_argument("unknown predicate '" + name + "'");
  }
};

inline KernelModel extract_model(const KernelProblem& kp, const QPSolution& sol) {
  KernelModel m;
  m.C1 = kp.C1;
  m.C2 = kp.C2;
  const auto& L = kp.layout;
  for (std::size_t j = 0; j < L.sites.size(); ++j) {
    KernelPredicate p;
    p.name = kp.names[j];
    p.kernel = kp.kernels[j];
    p.points = L.sites[j];
    p.alpha = sol.z.segment(static_cast<Eigen::Index>(L.alpha_offset[j]), static_cast<Eigen::Index>(p.points.size()));
    p.bias = sol.z[static_cast<Eigen::Index>(L.bias_index[j])];
    m.predicates.push_back(std::move(p));
  }
  m.pointwise_slacks = sol.z.segment(static_cast<Eigen::Index>(L.pointwise_offset), static_cast<Eigen::Index>(L.num_pointwise));
  m.logical_slacks = sol.z.segment(static_cast<Eigen::Index>(L.logical_offset), static_cast<Eigen::Index>(L.num_logical));
  m.status = sol.status;
  m.residuals = sol.residuals;
  return m;
}

/// Solves the primal. Each Gram block K_j = L_j L_jᵀ is whitened first
/// (alpha_j = L_j⁻ᵀ beta_j, so alpha_jᵀK_jalpha_j = |beta_j|²); the solution
/// is mapped back and its residuals are measured on the original problem.
inline QPSolution solve_primal(const KernelProblem& kp, const QPSettings& settings = {}) {
  const auto& L = kp.layout;
  QPProblem w = kp.qp;
  std::vector<Eigen::LLT<MatrixXd>> chol;
  double growth = 1.0;
  for (std::size_t j = 0; j < L.sites.size(); ++j) {
    const auto o = static_cast<Eigen::Index>(L.alpha_offset[j]);
    const auto s = static_cast<Eigen::Index>(L.sites[j].size());
    chol.emplace_back(kp.qp.Q.block(o, o, s, s));
    if (chol.back().info() != Eigen::Success) throw SolverError("Gram matrix of '" + kp.names[j] + "' is not positive definite");
    const MatrixXd Lj = chol.back().matrixL();
    growth = std::max(growth, Lj.cwiseAbs().rowwise().sum().maxCoeff());
    w.Q.block(o, o, s, s).setIdentity();
    w.c.segment(o, s) = Lj.triangularView<Eigen::Lower>().solve(kp.qp.c.segment(o, s));
    MatrixXd At = Lj.triangularView<Eigen::Lower>().solve(MatrixXd(kp.qp.A.middleCols(o, s).transpose()));
    w.A.middleCols(o, s) = At.transpose();
    // Exact zeros keep the row supports short.
    for (Eigen::Index i = 0; i < w.A.rows(); ++i)
      for (Eigen::Index k = 0; k < s; ++k)
        if (std::abs(w.A(i, o + k)) < 1e-300) w.A(i, o + k) = 0.0;
  }
  QPSettings inner = settings;
  inner.tol = settings.tol / growth;
  QPSolution sol = solve(w, inner);
  for (std::size_t j = 0; j < L.sites.size(); ++j) {
    const auto o = static_cast<Eigen::Index>(L.alpha_offset[j]);
    const auto s = static_cast<Eigen::Index>(L.sites[j].size());
    const MatrixXd Lj = chol[j].matrixL();
    sol.z.segment(o, s) = Lj.transpose().triangularView<Eigen::Upper>().solve(VectorXd(sol.z.segment(o, s)));
  }
  sol.objective = kp.qp.objective(sol.z);
  sol.residuals = kkt_residuals(kp.qp, sol);
  return sol;
}

inline KernelModel train(const KernelProblem& kp, const QPSettings& settings = {}) {
  return extract_model(kp, solve_primal(kp, settings));
}

inline double predict(const KernelPredicate& p, const Point& x) {
  if (!p.points.empty() && x.size() != p.points.front().size())
    throw std::invalid_argument("predict: point dimension mismatch");
  double v = p.bias;
  for (std::size_t s = 0; s < p.points.size(); ++s) {
    const double a = p.alpha[static_cast<Eigen::Index>(s)];
    if (a == 0.0) continue;
    v += a * p.kernel(p.points[s], x);
    if (p.points[s] == x) v += a * kGramRidge;
  }
  return v;
}

inline double predict(const KernelModel& m, std::size_t j, const Point& x) { return predict(m.predicates.at(j), x); }

inline nlohmann::json to_json(const KernelModel& m) {
  nlohmann::json preds = nlohmann::json::array();
  for (const auto& p : m.predicates) {
    preds.push_back({{"name", p.name},
                     {"kernel", to_json(p.kernel)},
                     {"points", p.points},
                     {"alpha", detail::vector_to_json(p.alpha)},
                     {"bias", p.bias}});
  }
  return {{"C1", m.C1},
          {"C2", m.C2},
          {"status", to_string(m.status)},
          {"residuals",
           {{"stationarity", m.residuals.stationarity},
            {"primal", m.residuals.primal},
            {"complementarity", m.residuals.complementarity}}},
          {"pointwise_slacks", detail::vector_to_json(m.pointwise_slacks)},
          {"logical_slacks", detail::vector_to_json(m.logical_slacks)},
          {"predicates", std::move(preds)}};
}

inline KernelModel model_from_json(const nlohmann::json& j) {
  KernelModel m;
  m.C1 = j.value("C1", 0.0);
  m.C2 = j.value("C2", 0.0);
  for (const auto& p : j.at("predicates")) {
    KernelPredicate k;
    k.name = p.at("name").get<std::string>();
    k.kernel = kernel_from_json(p.at("kernel"));
    k.points = p.at("points").get<std::vector<Point>>();
    k.alpha = detail::vector_from_json(p.at("alpha"));
    if (static_cast<std::size_t>(k.alpha.size()) != k.points.size())
      throw std::invalid_argument("model: alpha and points differ in length");
    k.bias = p.at("bias").get<double>();
    m.predicates.push_back(std::move(k));
  }
  if (j.contains("pointwise_slacks")) m.pointwise_slacks = detail::vector_from_json(j.at("pointwise_slacks"));
  if (j.contains("logical_slacks")) m.logical_slacks = detail::vector_from_json(j.at("logical_slacks"));
  return m;
}

}  // namespace luk

#endif  // LUK_KERNEL_HPP
