#ifndef LUK_PARSER_HPP
#define LUK_PARSER_HPP

// ASCII syntax for formulas and .lkb knowledge bases.
//
//   *  strong conjunction     ^  weak conjunction
//   +  strong disjunction     |  weak disjunction
//   ~  negation               -> implication (right associative)
//   0 / 1 constants           forall v: / exists v: quantifier prefixes
//
// Precedence: ~ binds tightest, then {* ^}, then {+ |}, then ->. A chain may
// use a single binary operator: a*b^c and a*b+c both need parentheses.

#include <cctype>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "luk/error.hpp"
#include "luk/formula.hpp"

namespace luk {

struct PredicateSignature {
  std::string name;
  std::vector<std::string> arg_domains;
};

struct Rule {
  std::string name;
  double weight = 1.0;
  Formula formula;
};

/// Parsed knowledge base: domains, predicate signatures and rules, each kept
/// in declaration order.
struct SourceKB {
  std::vector<std::pair<std::string, std::vector<std::string>>> domains;
  std::vector<PredicateSignature> predicates;
  std::vector<Rule> rules;

  const std::vector<std::string>* domain(const std::string& name) const {
    for (const auto& d : domains)
      if (d.first == name) return &d.second;
    return nullptr;
  }

  const PredicateSignature* predicate(const std::string& name) const {
    for (const auto& p : predicates)
      if (p.name == name) return &p;
    return nullptr;
  }
};

namespace detail {

enum class Tok { Ident, Number, LParen, RParen, LBracket, RBracket, LBrace, RBrace, Comma, Colon, Semicolon,
                 Equals, Tilde, Star, Caret, Plus, Bar, Arrow, End };

struct Token {
  Tok kind;
  std::string text;
  std::size_t line;
  std::size_t column;
};

inline const char* describe(Tok t) {
  switch (t) {
    case Tok::Ident: return "identifier";
    case Tok::Number: return "number";
    case Tok::LParen: return "'('";
    case Tok::RParen: return "')'";
    case Tok::LBracket: return "'['";
    case Tok::RBracket: return "']'";
    case Tok::LBrace: return "'{'";
    case Tok::RBrace: return "'}'";
    case Tok::Comma: return "','";
    case Tok::Colon: return "':'";
    case Tok::Semicolon: return "';'";
    case Tok::Equals: return "'='";
    case Tok::Tilde: return "'~'";
    case Tok::Star: return "'*'";
    case Tok::Caret: return "'^'";
    case Tok::Plus: return "'+'";
    case Tok::Bar: return "'|'";
    case Tok::Arrow: return "'->'";
    case Tok::End: return "end of input";
  }
  return "?";
}

inline std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t line = 1, col = 1, i = 0;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n; ++k, ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
  };
  while (i < text.size()) {
    const char ch = text[i];
    if (ch == '#') {
      while (i < text.size() && text[i] != '\n') advance(1);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      advance(1);
      continue;
    }
    const std::size_t l = line, c = col;
    if (std::isalpha(static_cast<unsigned char>(ch)) || ch == '_') {
      std::size_t j = i;
      while (j < text.size() && (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_')) ++j;
      out.push_back({Tok::Ident, std::string(text.substr(i, j - i)), l, c});
      advance(j - i);
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(ch)) || (ch == '.' && i + 1 < text.size() && std::isdigit(static_cast<unsigned char>(text[i + 1])))) {
      std::size_t j = i;
      while (j < text.size() && (std::isdigit(static_cast<unsigned char>(text[j])) || text[j] == '.')) ++j;
      if (j < text.size() && (text[j] == 'e' || text[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < text.size() && (text[k] == '+' || text[k] == '-')) ++k;
        if (k < text.size() && std::isdigit(static_cast<unsigned char>(text[k]))) {
          j = k;
          while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
        }
      }
      out.push_back({Tok::Number, std::string(text.substr(i, j - i)), l, c});
      advance(j - i);
      continue;
    }
    if (ch == '-' && i + 1 < text.size() && text[i + 1] == '>') {
      out.push_back({Tok::Arrow, "->", l, c});
      advance(2);
      continue;
    }
    Tok kind;
    switch (ch) {
      case '(': kind = Tok::LParen; break;
      case ')': kind = Tok::RParen; break;
      case '[': kind = Tok::LBracket; break;
      case ']': kind = Tok::RBracket; break;
      case '{': kind = Tok::LBrace; break;
      case '}': kind = Tok::RBrace; break;
      case ',': kind = Tok::Comma; break;
      case ':': kind = Tok::Colon; break;
      case ';': kind = Tok::Semicolon; break;
      case '=': kind = Tok::Equals; break;
      case '~': kind = Tok::Tilde; break;
      case '*': kind = Tok::Star; break;
      case '^': kind = Tok::Caret; break;
      case '+': kind = Tok::Plus; break;
      case '|': kind = Tok::Bar; break;
      default: throw ParseError(std::string("unexpected character '") + ch + "'", l, c);
    }
    out.push_back({kind, std::string(1, ch), l, c});
    advance(1);
  }
  out.push_back({Tok::End, "", line, col});
  return out;
}

class Parser {
 public:
  explicit Parser(std::string_view text) : tokens_(tokenize(text)) {}

  Formula formula() {
    const Token& t = peek();
    if (t.kind == Tok::Ident && (t.text == "forall" || t.text == "exists")) {
      const Op op = t.text == "forall" ? Op::ForAll : Op::Exists;
      next();
      const Token& v = expect(Tok::Ident, "quantified variable");
      std::string name = v.text;
      expect(Tok::Colon, "':' after quantified variable");
      return Formula::quantified(op, std::move(name), formula());
    }
    return implication();
  }

  const Token& peek() const { return tokens_[pos_]; }
  const Token& next() { return tokens_[pos_++]; }
  bool at(Tok kind) const { return peek().kind == kind; }
  bool at_keyword(std::string_view word) const { return at(Tok::Ident) && peek().text == word; }

  const Token& expect(Tok kind, const char* what) {
    if (!at(kind)) fail(std::string("expected ") + what + ", found " + found());
    return next();
  }

  [[noreturn]] void fail(const std::string& message) const {
    throw ParseError(message, peek().line, peek().column);
  }

  std::string found() const {
    return peek().kind == Tok::End ? "end of input" : describe(peek().kind) + std::string(" '") + peek().text + "'";
  }

 private:
  Formula implication() {
    Formula lhs = tier(2);
    if (at(Tok::Arrow)) {
      next();
      return Formula::implies(std::move(lhs), implication_or_quantified());
    }
    return lhs;
  }

  Formula implication_or_quantified() {
    if (at_keyword("forall") || at_keyword("exists")) return formula();
    return implication();
  }

  static std::optional<Op> tier_op(Tok kind, int tier) {
    if (tier == 1) {
      if (kind == Tok::Star) return Op::StrongAnd;
      if (kind == Tok::Caret) return Op::WeakAnd;
    } else {
      if (kind == Tok::Plus) return Op::StrongOr;
      if (kind == Tok::Bar) return Op::WeakOr;
    }
    return std::nullopt;
  }

  Formula tier(int level) {
    std::optional<Op> inner;  // bare {* ^} chain seen among the operands
    auto operand = [&] {
      if (level == 1) return unary();
      Formula f = tier(1);
      if (last_chain_) inner = last_chain_;
      return f;
    };
    std::vector<Formula> operands{operand()};
    std::optional<Op> chain_op;
    while (auto op = tier_op(peek().kind, level)) {
      if (chain_op && *chain_op != *op)
        fail(std::string("cannot mix '") + op_symbol(*chain_op) + "' and '" + op_symbol(*op) +
             "' without parentheses");
      if (inner) mixed_tiers(*inner, *op);
      chain_op = op;
      next();
      operands.push_back(operand());
      if (inner) mixed_tiers(*inner, *op);
    }
    last_chain_ = chain_op;
    if (!chain_op) return operands.front();
    return Formula::nary(*chain_op, operands);
  }

  [[noreturn]] void mixed_tiers(Op conj, Op disj) const {
    fail(std::string("cannot mix '") + op_symbol(conj) + "' and '" + op_symbol(disj) +
         "' without parentheses");
  }

  std::optional<Op> last_chain_;

  Formula unary() {
    if (at(Tok::Tilde)) {
      next();
      return Formula::negation(unary());
    }
    if (at(Tok::LParen)) {
      next();
      Formula inner = formula();
      expect(Tok::RParen, "')'");
      return inner;
    }
    if (at(Tok::Number)) {
      const Token& t = next();
      if (t.text == "0") return Formula::zero();
      if (t.text == "1") return Formula::one();
      throw ParseError("only the constants 0 and 1 may appear in formulas", t.line, t.column);
    }
    if (at(Tok::Ident)) {
      if (at_keyword("forall") || at_keyword("exists")) fail("quantifier must be parenthesized here");
      std::string name = next().text;
      if (at(Tok::LParen)) {
        next();
        std::vector<std::string> args;
        if (!at(Tok::RParen)) {
          args.push_back(argument());
          while (at(Tok::Comma)) {
            next();
            args.push_back(argument());
          }
        }
        expect(Tok::RParen, "')' closing argument list");
        return Formula::atom(std::move(name), std::move(args));
      }
      return Formula::var(std::move(name));
    }
    fail("expected a formula, found " + found());
  }

  std::string argument() {
    if (at(Tok::Ident) || at(Tok::Number)) return next().text;
    fail("expected an argument name, found " + found());
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Formula parse_formula(std::string_view text) {
  detail::Parser p(text);
  Formula f = p.formula();
  if (!p.at(detail::Tok::End)) p.fail("unexpected " + p.found() + " after formula");
  return f;
}

namespace detail {

struct AtomCheck {
  const SourceKB& kb;
  std::map<std::string, std::string> bound;  // variable -> inferred domain ("" until seen)
  std::size_t line;

  [[noreturn]] void fail(const std::string& message) const { throw ParseError(message, line, 1); }

  void visit(const Formula& f) {
    switch (f.op()) {
      case Op::ForAll:
      case Op::Exists: {
        auto outer = bound.find(f.name()) != bound.end() ? std::optional<std::string>(bound[f.name()]) : std::nullopt;
        bound[f.name()] = "";
        visit(f.child(0));
        if (bound[f.name()].empty())
          fail("quantified variable '" + f.name() + "' does not occur in any atom of its scope");
        if (outer) bound[f.name()] = *outer;
        else bound.erase(f.name());
        return;
      }
      case Op::Atom: {
        const PredicateSignature* sig = kb.predicate(f.name());
        if (!sig) fail("undeclared predicate '" + f.name() + "'");
        if (sig->arg_domains.size() != f.args().size())
          fail("predicate '" + f.name() + "' expects " + std::to_string(sig->arg_domains.size()) +
               " argument(s), got " + std::to_string(f.args().size()));
        for (std::size_t k = 0; k < f.args().size(); ++k) {
          const std::string& arg = f.args()[k];
          const std::string& dom = sig->arg_domains[k];
          auto it = bound.find(arg);
          if (it != bound.end()) {
            if (!it->second.empty() && it->second != dom)
              fail("variable '" + arg + "' used in domains '" + it->second + "' and '" + dom + "'");
            it->second = dom;
            continue;
          }
          const auto* constants = kb.domain(dom);
          if (!constants || std::find(constants->begin(), constants->end(), arg) == constants->end())
            fail("'" + arg + "' is neither a bound variable nor a constant of domain '" + dom + "'");
        }
        return;
      }
      default:
        for (const auto& c : f.children()) visit(c);
    }
  }
};

}  // namespace detail

/// Parses a .lkb knowledge base:
///
///   domain U = {a, b, c};
///   pred p(U); pred r(U, U);
///   rule name [w=2.5]: forall x: p(x) -> r(x, x)
///
/// Declarations may end with ';'. A rule's formula extends to the next
/// 'domain'/'pred'/'rule' keyword or ';'.
inline SourceKB parse_kb(std::string_view text) {
  detail::Parser p(text);
  using detail::Tok;
  SourceKB kb;
  std::set<std::string> rule_names;
  while (!p.at(Tok::End)) {
    if (p.at(Tok::Semicolon)) {
      p.next();
      continue;
    }
    if (!p.at(Tok::Ident)) p.fail("expected 'domain', 'pred' or 'rule', found " + p.found());
    const detail::Token head = p.next();
    if (head.text == "domain") {
      std::string name = p.expect(Tok::Ident, "domain name").text;
      if (kb.domain(name)) throw ParseError("domain '" + name + "' declared twice", head.line, head.column);
      p.expect(Tok::Equals, "'='");
      p.expect(Tok::LBrace, "'{'");
      std::vector<std::string> constants;
      std::set<std::string> seen;
      while (!p.at(Tok::RBrace)) {
        if (!(p.at(Tok::Ident) || p.at(Tok::Number))) p.fail("expected a constant name, found " + p.found());
        const detail::Token& c = p.next();
        if (!seen.insert(c.text).second) throw ParseError("duplicate constant '" + c.text + "'", c.line, c.column);
        constants.push_back(c.text);
        if (p.at(Tok::Comma)) p.next();
        else if (!p.at(Tok::RBrace)) p.fail("expected ',' or '}', found " + p.found());
      }
      p.next();
      kb.domains.emplace_back(std::move(name), std::move(constants));
    } else if (head.text == "pred") {
      PredicateSignature sig;
      sig.name = p.expect(Tok::Ident, "predicate name").text;
      if (kb.predicate(sig.name))
        throw ParseError("predicate '" + sig.name + "' declared twice", head.line, head.column);
      p.expect(Tok::LParen, "'('");
      while (!p.at(Tok::RParen)) {
        const detail::Token& d = p.expect(Tok::Ident, "domain name");
        if (!kb.domain(d.text)) throw ParseError("undeclared domain '" + d.text + "'", d.line, d.column);
        sig.arg_domains.push_back(d.text);
        if (p.at(Tok::Comma)) p.next();
        else if (!p.at(Tok::RParen)) p.fail("expected ',' or ')', found " + p.found());
      }
      p.next();
      kb.predicates.push_back(std::move(sig));
    } else if (head.text == "rule") {
      Rule rule;
      rule.name = p.expect(Tok::Ident, "rule name").text;
      if (!rule_names.insert(rule.name).second)
        throw ParseError("rule '" + rule.name + "' declared twice", head.line, head.column);
      if (p.at(Tok::LBracket)) {
        p.next();
        const detail::Token& key = p.expect(Tok::Ident, "'w'");
        if (key.text != "w") throw ParseError("unknown rule attribute '" + key.text + "'", key.line, key.column);
        p.expect(Tok::Equals, "'='");
        const detail::Token& w = p.expect(Tok::Number, "weight");
        rule.weight = std::stod(w.text);
        if (!(rule.weight >= 0.0)) throw ParseError("rule weight must be nonnegative", w.line, w.column);
        p.expect(Tok::RBracket, "']'");
      }
      p.expect(Tok::Colon, "':'");
      rule.formula = p.formula();
      const bool has_atoms = detail::contains_op(rule.formula, [](Op op) { return op == Op::Atom; });
      const bool has_vars = detail::contains_op(rule.formula, [](Op op) { return op == Op::Var; });
      if (has_atoms && has_vars)
        throw ParseError("rule '" + rule.name + "' mixes propositional variables with predicate atoms", head.line,
                         head.column);
      if (has_vars && has_quantifiers(rule.formula))
        throw ParseError("rule '" + rule.name + "' quantifies over propositional variables", head.line, head.column);
      detail::AtomCheck check{kb, {}, head.line};
      check.visit(rule.formula);
      kb.rules.push_back(std::move(rule));
      if (!p.at(Tok::End) && !p.at(Tok::Semicolon) && !p.at_keyword("rule") && !p.at_keyword("domain") &&
          !p.at_keyword("pred"))
        p.fail("unexpected " + p.found() + " after rule formula");
    } else {
      throw ParseError("expected 'domain', 'pred' or 'rule', found '" + head.text + "'", head.line, head.column);
    }
  }
  return kb;
}

namespace detail {

// 0: leaf / unary, 1: {* ^}, 2: {+ |}, 3: ->, 4: quantifier
inline int print_tier(Op op) {
  switch (op) {
    case Op::StrongAnd:
    case Op::WeakAnd: return 1;
    case Op::StrongOr:
    case Op::WeakOr: return 2;
    case Op::Implies: return 3;
    case Op::ForAll:
    case Op::Exists: return 4;
    default: return 0;
  }
}

inline void print(const Formula& f, std::string& out);

inline void print_operand(const Formula& f, bool parens, std::string& out) {
  if (parens) out += '(';
  print(f, out);
  if (parens) out += ')';
}

inline void print(const Formula& f, std::string& out) {
  switch (f.op()) {
    case Op::Const0: out += '0'; return;
    case Op::Const1: out += '1'; return;
    case Op::Var:
    case Op::Atom: out += f.key(); return;
    case Op::Not:
      out += '~';
      print_operand(f.child(0), print_tier(f.child(0).op()) != 0, out);
      return;
    case Op::Implies:
      print_operand(f.child(0), print_tier(f.child(0).op()) >= 3, out);
      out += " -> ";
      print_operand(f.child(1), print_tier(f.child(1).op()) == 4 ? false : print_tier(f.child(1).op()) > 3, out);
      return;
    case Op::ForAll:
    case Op::Exists:
      out += op_symbol(f.op());
      out += ' ';
      out += f.name();
      out += ": ";
      print(f.child(0), out);
      return;
    default: {
      for (std::size_t i = 0; i < f.children().size(); ++i) {
        if (i) {
          out += ' ';
          out += op_symbol(f.op());
          out += ' ';
        }
        print_operand(f.child(i), print_tier(f.child(i).op()) != 0, out);
      }
    }
  }
}

}  // namespace detail

/// Renders a formula in the ASCII syntax; parse_formula(to_string(f)) == f.
inline std::string to_string(const Formula& f) {
  std::string out;
  detail::print(f, out);
  return out;
}

}  // namespace luk

#endif  // LUK_PARSER_HPP
