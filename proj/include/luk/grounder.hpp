#ifndef LUK_GROUNDER_HPP
#define LUK_GROUNDER_HPP

// Quantifier elimination over finite domains: forall -> weak conjunction,
// exists -> weak disjunction, with a flat index over all ground atoms.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "luk/error.hpp"
#include "luk/formula.hpp"
#include "luk/parser.hpp"

namespace luk {

/// Flat index p-bar over every grounding of every declared predicate.
/// Predicates appear in declaration order; tuples of one predicate in
/// lexicographic order of the declared constant order.
class GroundingMap {
 public:
  struct Block {
    std::string predicate;
    std::vector<std::string> arg_domains;
    std::vector<std::vector<std::string>> tuples;
    std::size_t offset = 0;
  };

  GroundingMap() = default;

  explicit GroundingMap(const SourceKB& kb) {
    std::size_t offset = 0;
    for (const auto& sig : kb.predicates) {
      Block block;
      block.predicate = sig.name;
      block.arg_domains = sig.arg_domains;
      block.offset = offset;
      std::vector<const std::vector<std::string>*> doms;
      for (const auto& d : sig.arg_domains) {
        const auto* consts = kb.domain(d);
        if (!consts) throw GroundingError("undeclared domain '" + d + "'");
        doms.push_back(consts);
      }
      std::vector<std::string> tuple(doms.size());
      enumerate(doms, 0, tuple, block.tuples);
      for (std::size_t u = 0; u < block.tuples.size(); ++u) {
        const std::string key = Formula::atom_key(sig.name, block.tuples[u]);
        index_.emplace(key, offset + u);
        keys_.push_back(key);
        owner_.push_back(blocks_.size());
      }
      offset += block.tuples.size();
      blocks_.push_back(std::move(block));
    }
    // Propositional variables of the rules get one slot each, after the
    // predicate blocks, in sorted order.
    std::set<std::string> props;
    for (const auto& rule : kb.rules)
      for (const auto& v : variables(rule.formula))
        if (v.find('(') == std::string::npos) props.insert(v);
    for (const auto& v : props) {
      if (index_.count(v)) continue;
      Block block;
      block.predicate = v;
      block.offset = offset;
      block.tuples.push_back({});
      index_.emplace(v, offset);
      keys_.push_back(v);
      owner_.push_back(blocks_.size());
      ++offset;
      blocks_.push_back(std::move(block));
    }
  }

  std::size_t size() const { return keys_.size(); }
  const std::vector<Block>& blocks() const { return blocks_; }
  const std::vector<std::string>& keys() const { return keys_; }

  bool contains(const std::string& key) const { return index_.count(key) != 0; }

  std::size_t index_of(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) throw GroundingError("unknown ground atom '" + key + "'");
    return it->second;
  }

  const std::string& key_of(std::size_t index) const { return keys_.at(index); }
  const Block& block_of(std::size_t index) const { return blocks_.at(owner_.at(index)); }
  std::size_t predicate_of(std::size_t index) const { return owner_.at(index); }

  const Block* block(const std::string& predicate) const {
    for (const auto& b : blocks_)
      if (b.predicate == predicate) return &b;
    return nullptr;
  }

  nlohmann::json to_json() const {
    nlohmann::json preds = nlohmann::json::array();
    for (const auto& b : blocks_) {
      nlohmann::json groundings = nlohmann::json::array();
      for (std::size_t u = 0; u < b.tuples.size(); ++u)
        groundings.push_back({{"tuple", b.tuples[u]}, {"index", b.offset + u}});
      preds.push_back({{"predicate", b.predicate}, {"domains", b.arg_domains}, {"offset", b.offset},
                       {"groundings", std::move(groundings)}});
    }
    return {{"size", size()}, {"predicates", std::move(preds)}};
  }

 private:
  static void enumerate(const std::vector<const std::vector<std::string>*>& doms, std::size_t k,
                        std::vector<std::string>& tuple, std::vector<std::vector<std::string>>& out) {
    if (k == doms.size()) {
      out.push_back(tuple);
      return;
    }
    for (const auto& c : *doms[k]) {
      tuple[k] = c;
      enumerate(doms, k + 1, tuple, out);
    }
  }

  std::vector<Block> blocks_;
  std::vector<std::string> keys_;
  std::vector<std::size_t> owner_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct GroundOptions {
  std::size_t max_leaves = 1'000'000;
  bool override_guard = false;
};

struct GroundResult {
  Formula formula;
  GroundingMap map;
};

namespace detail {

class Grounder {
 public:
  Grounder(const SourceKB& kb, GroundOptions options) : kb_(kb), options_(options) {}

  // Domain of a quantified variable: the signature domain of the first
  // argument position where it occurs in the quantifier's scope.
  std::string variable_domain(const std::string& var, const Formula& body) const {
    std::string found;
    find_domain(var, body, found);
    if (found.empty()) throw UnboundVariable(var);
    return found;
  }

  std::size_t count_leaves(const Formula& f) const {
    if (is_leaf(f.op())) return 1;
    if (is_quantifier(f.op())) {
      const auto* dom = kb_.domain(variable_domain(f.name(), f.child(0)));
      return saturating_mul(dom ? dom->size() : 0, count_leaves(f.child(0)));
    }
    std::size_t n = 0;
    for (const auto& c : f.children()) n = saturating_add(n, count_leaves(c));
    return n;
  }

  void check_guard(const Formula& f) const {
    const std::size_t leaves = count_leaves(f);
    if (!options_.override_guard && leaves > options_.max_leaves)
      throw GroundingError("grounding would produce " + std::to_string(leaves) + " leaves (limit " +
                           std::to_string(options_.max_leaves) + "); pass the override flag to proceed");
  }

  Formula ground(const Formula& f, std::map<std::string, std::string>& env) const {
    switch (f.op()) {
      case Op::Const0:
      case Op::Const1:
      case Op::Var: return f;
      case Op::Atom: {
        const PredicateSignature* sig = kb_.predicate(f.name());
        if (!sig) throw GroundingError("undeclared predicate '" + f.name() + "'");
        if (sig->arg_domains.size() != f.args().size())
          throw GroundingError("arity mismatch for predicate '" + f.name() + "'");
        std::vector<std::string> args;
        for (std::size_t k = 0; k < f.args().size(); ++k) {
          const std::string& a = f.args()[k];
          auto it = env.find(a);
          if (it != env.end()) {
            args.push_back(it->second);
            continue;
          }
          const auto* consts = kb_.domain(sig->arg_domains[k]);
          if (!consts || std::find(consts->begin(), consts->end(), a) == consts->end()) throw UnboundVariable(a);
          args.push_back(a);
        }
        return Formula::atom(f.name(), std::move(args));
      }
      case Op::ForAll:
      case Op::Exists: {
        const auto* dom = kb_.domain(variable_domain(f.name(), f.child(0)));
        if (!dom || dom->empty()) throw GroundingError("empty domain for variable '" + f.name() + "'");
        std::vector<Formula> parts;
        auto saved = env.find(f.name()) != env.end() ? std::optional<std::string>(env[f.name()]) : std::nullopt;
        for (const auto& c : *dom) {
          env[f.name()] = c;
          parts.push_back(ground(f.child(0), env));
        }
        if (saved) env[f.name()] = *saved;
        else env.erase(f.name());
        return Formula::nary(f.op() == Op::ForAll ? Op::WeakAnd : Op::WeakOr, parts);
      }
      case Op::Not: return Formula::negation(ground(f.child(0), env));
      case Op::Implies: return Formula::implies(ground(f.child(0), env), ground(f.child(1), env));
      default: {
        std::vector<Formula> kids;
        for (const auto& c : f.children()) kids.push_back(ground(c, env));
        return Formula::nary(f.op(), kids);
      }
    }
  }

  const SourceKB& kb() const { return kb_; }

 private:
  static std::size_t saturating_mul(std::size_t a, std::size_t b) {
    if (a != 0 && b > std::numeric_limits<std::size_t>::max() / a) return std::numeric_limits<std::size_t>::max();
    return a * b;
  }
  static std::size_t saturating_add(std::size_t a, std::size_t b) {
    return a > std::numeric_limits<std::size_t>::max() - b ? std::numeric_limits<std::size_t>::max() : a + b;
  }

  void find_domain(const std::string& var, const Formula& f, std::string& found) const {
    if (!found.empty()) return;
    if (is_quantifier(f.op()) && f.name() == var) return;  // shadowed
    if (f.op() == Op::Atom) {
      const PredicateSignature* sig = kb_.predicate(f.name());
      if (!sig) return;
      for (std::size_t k = 0; k < f.args().size() && k < sig->arg_domains.size(); ++k)
        if (f.args()[k] == var) {
          found = sig->arg_domains[k];
          return;
        }
      return;
    }
    for (const auto& c : f.children()) find_domain(var, c, found);
  }

  const SourceKB& kb_;
  GroundOptions options_;
};

}  // namespace detail

/// Grounds a first-order formula over the domains declared in `kb`.
inline GroundResult ground(const Formula& f, const SourceKB& kb, GroundOptions options = {}) {
  detail::Grounder g(kb, options);
  g.check_guard(f);
  std::map<std::string, std::string> env;
  return {g.ground(f, env), GroundingMap(kb)};
}

/// One ground formula per binding of the leading forall prefix (one clique
/// per grounding). Inner quantifiers are expanded as in ground().
inline std::vector<Formula> ground_instances(const Formula& f, const SourceKB& kb, GroundOptions options = {}) {
  detail::Grounder g(kb, options);
  g.check_guard(f);
  std::vector<std::pair<std::string, const std::vector<std::string>*>> prefix;
  Formula body = f;
  while (body.op() == Op::ForAll) {
    const auto* dom = kb.domain(g.variable_domain(body.name(), body.child(0)));
    if (!dom || dom->empty()) throw GroundingError("empty domain for variable '" + body.name() + "'");
    prefix.emplace_back(body.name(), dom);
    body = body.child(0);
  }
  std::vector<Formula> out;
  std::map<std::string, std::string> env;
  std::vector<std::size_t> idx(prefix.size(), 0);
  while (true) {
    for (std::size_t k = 0; k < prefix.size(); ++k) env[prefix[k].first] = (*prefix[k].second)[idx[k]];
    out.push_back(g.ground(body, env));
    std::size_t k = prefix.size();
    while (k > 0) {
      --k;
      if (++idx[k] < prefix[k].second->size()) break;
      idx[k] = 0;
      if (k == 0) return out;
    }
    if (prefix.empty()) return out;
  }
}

}  // namespace luk

#endif  // LUK_GROUNDER_HPP
