#pragma once

#include <cctype>
#include <charconv>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ficbl/concept.hpp"
#include "ficbl/error.hpp"

namespace ficbl {

// Expert rules are Boolean functions over literals [c_j = i]. A rule may
// carry a truth probability pi; pi = 1 is a hard rule.
//
// Grammar (loosest binding first):
//   rule  := expr ("@pi=" FLOAT)?
//   expr  := iff
//   iff   := impl ("<->" impl)*
//   impl  := or ("->" impl)?          right-associative
//   or    := and ("|" and)*
//   and   := unary ("&" unary)*
//   unary := "!" unary | atom
//   atom  := IDENT "=" INT | "(" expr ")"
// IDENT is a concept name or c<index>.

class RuleExpr {
 public:
  enum class Kind { True, Literal, Not, And, Or, Implies, Iff };

  struct Node {
    Kind kind = Kind::True;
    std::size_t concept_index = 0;
    int value = 0;
    std::shared_ptr<const Node> left;
    std::shared_ptr<const Node> right;
  };

  /// Constant TRUE.
  RuleExpr() : root_(std::make_shared<Node>()) {}

  static RuleExpr literal(std::size_t concept_index, int value) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Literal;
    n->concept_index = concept_index;
    n->value = value;
    return RuleExpr(std::move(n));
  }
  static RuleExpr negation(const RuleExpr& a) { return unary(Kind::Not, a); }
  static RuleExpr conjunction(const RuleExpr& a, const RuleExpr& b) {
    return binary(Kind::And, a, b);
  }
  static RuleExpr disjunction(const RuleExpr& a, const RuleExpr& b) {
    return binary(Kind::Or, a, b);
  }
  static RuleExpr implication(const RuleExpr& a, const RuleExpr& b) {
    return binary(Kind::Implies, a, b);
  }
  static RuleExpr equivalence(const RuleExpr& a, const RuleExpr& b) {
    return binary(Kind::Iff, a, b);
  }

  Kind kind() const noexcept { return root_->kind; }
  const Node& root() const noexcept { return *root_; }
  double pi() const noexcept { return pi_; }
  bool is_hard() const noexcept { return pi_ == 1.0; }

  RuleExpr with_pi(double pi) const {
    if (!(pi > 0.0 && pi <= 1.0)) throw DomainError("rule probability must lie in (0, 1]");
    RuleExpr copy = *this;
    copy.pi_ = pi;
    return copy;
  }

  /// Structural equality (tree shape, literals, and pi).
  friend bool operator==(const RuleExpr& a, const RuleExpr& b) {
    return a.pi_ == b.pi_ && same_tree(a.root_.get(), b.root_.get());
  }

 private:
  explicit RuleExpr(std::shared_ptr<const Node> root) : root_(std::move(root)) {}

  static RuleExpr unary(Kind kind, const RuleExpr& a) {
    auto n = std::make_shared<Node>();
    n->kind = kind;
    n->left = a.root_;
    return RuleExpr(std::move(n));
  }
  static RuleExpr binary(Kind kind, const RuleExpr& a, const RuleExpr& b) {
    auto n = std::make_shared<Node>();
    n->kind = kind;
    n->left = a.root_;
    n->right = b.root_;
    return RuleExpr(std::move(n));
  }

  static bool same_tree(const Node* a, const Node* b) {
    if (a == b) return true;
    if (!a || !b) return false;
    return a->kind == b->kind && a->concept_index == b->concept_index &&
           a->value == b->value && same_tree(a->left.get(), b->left.get()) &&
           same_tree(a->right.get(), b->right.get());
  }

  std::shared_ptr<const Node> root_;
  double pi_ = 1.0;
};

namespace detail {

inline bool eval_node(const RuleExpr::Node& n, const Combination& z) {
  using K = RuleExpr::Kind;
  switch (n.kind) {
    case K::True:
      return true;
    case K::Literal:
      return z[n.concept_index] == n.value;
    case K::Not:
      return !eval_node(*n.left, z);
    case K::And:
      return eval_node(*n.left, z) && eval_node(*n.right, z);
    case K::Or:
      return eval_node(*n.left, z) || eval_node(*n.right, z);
    case K::Implies:
      return !eval_node(*n.left, z) || eval_node(*n.right, z);
    case K::Iff:
      return eval_node(*n.left, z) == eval_node(*n.right, z);
  }
  return false;
}

class RuleParser {
 public:
  RuleParser(std::string_view text, const ConceptSchema& schema)
      : text_(text), schema_(schema) {}

  RuleExpr parse() {
    skip_space();
    if (pos_ == text_.size()) fail("empty rule");
    RuleExpr expr = parse_iff();
    skip_space();
    if (consume("@pi=")) {
      skip_space();
      const std::size_t start = pos_;
      double pi = 0.0;
      const auto [end, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), pi);
      if (ec != std::errc{}) fail("expected probability after '@pi='");
      pos_ = static_cast<std::size_t>(end - text_.data());
      if (!(pi > 0.0 && pi <= 1.0)) {
        throw RuleSyntaxError("rule probability must lie in (0, 1]", start);
      }
      expr = expr.with_pi(pi);
      skip_space();
    }
    if (pos_ != text_.size()) fail("unexpected input");
    return expr;
  }

 private:
  RuleExpr parse_iff() {
    RuleExpr lhs = parse_impl();
    while (consume("<->")) lhs = RuleExpr::equivalence(lhs, parse_impl());
    return lhs;
  }

  RuleExpr parse_impl() {
    RuleExpr lhs = parse_or();
    if (consume("->")) return RuleExpr::implication(lhs, parse_impl());
    return lhs;
  }

  RuleExpr parse_or() {
    RuleExpr lhs = parse_and();
    while (consume("|")) lhs = RuleExpr::disjunction(lhs, parse_and());
    return lhs;
  }

  RuleExpr parse_and() {
    RuleExpr lhs = parse_unary();
    while (consume("&")) lhs = RuleExpr::conjunction(lhs, parse_unary());
    return lhs;
  }

  RuleExpr parse_unary() {
    if (consume("!")) return RuleExpr::negation(parse_unary());
    return parse_atom();
  }

  RuleExpr parse_atom() {
    if (consume("(")) {
      RuleExpr inner = parse_iff();
      if (!consume(")")) fail("expected ')'");
      return inner;
    }
    skip_space();
    const std::size_t ident_pos = pos_;
    const std::string ident = read_identifier();
    if (ident.empty()) fail("expected concept name or '('");
    const std::size_t concept_index = resolve(ident, ident_pos);
    if (!consume("=")) fail("expected '='");
    skip_space();
    const std::size_t value_pos = pos_;
    int value = 0;
    const auto [end, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), value);
    if (ec != std::errc{}) fail("expected integer value");
    pos_ = static_cast<std::size_t>(end - text_.data());
    if (!schema_.contains(concept_index, value)) {
      throw RuleSyntaxError("value " + std::to_string(value) + " out of range for concept '" +
                                schema_.name(concept_index) + "'",
                            value_pos);
    }
    return RuleExpr::literal(concept_index, value);
  }

  std::size_t resolve(const std::string& ident, std::size_t at) const {
    if (auto r = schema_.find(ident)) return *r;
    if (ident.size() > 1 && ident[0] == 'c') {
      std::size_t r = 0;
      const auto [end, ec] = std::from_chars(ident.data() + 1, ident.data() + ident.size(), r);
      if (ec == std::errc{} && end == ident.data() + ident.size() && r < schema_.size()) {
        return r;
      }
    }
    throw RuleSyntaxError("unknown concept '" + ident + "'", at);
  }

  std::string read_identifier() {
    const std::size_t start = pos_;
    if (pos_ < text_.size() && (std::isalpha(static_cast<unsigned char>(text_[pos_])) ||
                                text_[pos_] == '_')) {
      ++pos_;
      while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
                                     text_[pos_] == '_')) {
        ++pos_;
      }
    }
    return std::string(text_.substr(start, pos_ - start));
  }

  bool consume(std::string_view token) {
    skip_space();
    if (text_.substr(pos_, token.size()) != token) return false;
    pos_ += token.size();
    return true;
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string& what) const { throw RuleSyntaxError(what, pos_); }

  std::string_view text_;
  const ConceptSchema& schema_;
  std::size_t pos_ = 0;
};

inline int precedence(RuleExpr::Kind kind) {
  using K = RuleExpr::Kind;
  switch (kind) {
    case K::Iff:
      return 1;
    case K::Implies:
      return 2;
    case K::Or:
      return 3;
    case K::And:
      return 4;
    case K::Not:
      return 5;
    case K::True:
    case K::Literal:
      return 6;
  }
  return 6;
}

inline void print_node(const RuleExpr::Node& n, const ConceptSchema& schema, int min_prec,
                       std::string& out) {
  using K = RuleExpr::Kind;
  const int prec = precedence(n.kind);
  const bool paren = prec < min_prec;
  if (paren) out += '(';
  switch (n.kind) {
    case K::True:
      // no constant in the grammar; print a tautology over concept 0
      out += "(" + schema.name(0) + "=1 | !" + schema.name(0) + "=1)";
      break;
    case K::Literal:
      out += schema.name(n.concept_index) + "=" + std::to_string(n.value);
      break;
    case K::Not:
      out += '!';
      print_node(*n.left, schema, 5, out);
      break;
    case K::And:
      print_node(*n.left, schema, 4, out);
      out += " & ";
      print_node(*n.right, schema, 5, out);
      break;
    case K::Or:
      print_node(*n.left, schema, 3, out);
      out += " | ";
      print_node(*n.right, schema, 4, out);
      break;
    case K::Implies:
      print_node(*n.left, schema, 3, out);
      out += " -> ";
      print_node(*n.right, schema, 2, out);
      break;
    case K::Iff:
      print_node(*n.left, schema, 1, out);
      out += " <-> ";
      print_node(*n.right, schema, 2, out);
      break;
  }
  if (paren) out += ')';
}

}  // namespace detail

/// Parses one rule against a schema. Throws RuleSyntaxError.
inline RuleExpr parse_rule(std::string_view text, const ConceptSchema& schema) {
  return detail::RuleParser(text, schema).parse();
}

/// g(z) in {0, 1}.
inline int eval_rule(const RuleExpr& rule, const Combination& z) {
  return detail::eval_node(rule.root(), z) ? 1 : 0;
}

/// pi(z): pi where the rule holds, 1 - pi where it fails.
inline double truth_prob(const RuleExpr& rule, const Combination& z) {
  return eval_rule(rule, z) == 1 ? rule.pi() : 1.0 - rule.pi();
}

/// And-tree over hard rules; the empty list gives constant TRUE.
inline RuleExpr conjoin(const std::vector<RuleExpr>& rules) {
  if (rules.empty()) return RuleExpr{};
  for (const auto& r : rules) {
    if (!r.is_hard()) throw DomainError("rules with a probability below 1 cannot be conjoined");
  }
  RuleExpr out = rules.front();
  for (std::size_t i = 1; i < rules.size(); ++i) out = RuleExpr::conjunction(out, rules[i]);
  return out;
}

/// Renders a rule in the DSL; parse_rule(to_string(r)) == r for parsed rules.
inline std::string to_string(const RuleExpr& rule, const ConceptSchema& schema) {
  std::string out;
  detail::print_node(rule.root(), schema, 0, out);
  if (!rule.is_hard()) {
    char buf[32];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), rule.pi());
    out += " @pi=" + std::string(buf, end);
  }
  return out;
}

/// Parses a rules file: one rule per line, '#' starts a comment.
inline std::vector<RuleExpr> parse_rules_text(std::string_view text, const ConceptSchema& schema) {
  std::vector<RuleExpr> rules;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      rules.push_back(parse_rule(line, schema));
    } catch (const RuleSyntaxError& e) {
      throw DomainError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rules;
}

inline std::vector<RuleExpr> load_rules_file(const std::string& path, const ConceptSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open rules file '" + path + "'");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_rules_text(text, schema);
}

/// Reduces a rule set to the single g used for updating: nothing for an empty
/// set, the rule itself for one rule, the conjunction for several hard rules.
inline std::optional<RuleExpr> combine_rules(const std::vector<RuleExpr>& rules) {
  if (rules.empty()) return std::nullopt;
  if (rules.size() == 1) return rules.front();
  return conjoin(rules);
}

}  // namespace ficbl
