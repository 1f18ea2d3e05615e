#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "bz/util.hpp"

namespace bz {

enum class ChallengeKind { justification, approval_manager, approval_owner, verification, biometric };
enum class ContainLevel { soft, hard };

const char* to_string(ChallengeKind k);
const char* to_string(ContainLevel l);
ChallengeKind challenge_kind_from(const std::string& s);
ContainLevel contain_level_from(const std::string& s);

/// Obligation ordering when several challenge kinds are combined.
int challenge_rank(ChallengeKind k);

struct Effect {
  enum class Kind { allow, deny, challenge, contain };
  Kind kind = Kind::allow;
  ChallengeKind challenge = ChallengeKind::justification;  // when kind==challenge
  ContainLevel contain = ContainLevel::soft;               // when kind==contain

  bool operator==(const Effect&) const = default;
  std::string to_source() const;
};

// ---------------------------------------------------------------------------
// Expression AST

struct Expr;
using ExprPtr = std::unique_ptr<Expr>;

struct Expr {
  enum class Kind {
    or_,      // kids (n-ary)
    and_,     // kids (n-ary)
    not_,     // kids[0]
    cmp,      // kids[0] op kids[1]
    in_,      // kids[0] in kids[1]
    path,     // text = dotted path
    str,      // text
    num,      // num
    boolean,  // bval
    set_lit,  // items
    builtin,  // text = builtin name
  };
  Kind kind;
  std::string text;
  double num = 0.0;
  bool bval = false;
  std::vector<std::string> items;
  std::string op;
  std::vector<ExprPtr> kids;
  int line = 0, col = 0;

  ExprPtr clone() const;
};

bool expr_equal(const Expr& a, const Expr& b);

struct Rule {
  std::string name;
  ExprPtr condition;
  std::vector<Effect> effects;
  bool investigate_on_fail = false;
  int line = 0, col = 0;

  Rule clone() const;
};

struct PolicySet {
  std::vector<Rule> rules;
  int schema_version = 1;

  PolicySet clone() const;
};

// ---------------------------------------------------------------------------
// Attribute schema

struct AttrType {
  enum class Kind { string_, number, tagset, enum_, enum_ordered, boolean };
  Kind kind = Kind::string_;
  std::vector<std::string> enum_values;  // for enum kinds, in rank order

  int rank_of(const std::string& v) const;
};

/// Declares every attribute path the language may reference plus the builtin
/// predicates. risk.* paths are implicitly numeric with default 0.0.
class AttributeSchema {
 public:
  static const AttributeSchema& standard();

  const AttrType* lookup(const std::string& path) const;
  bool is_risk_path(const std::string& path) const;
  const AttrType* builtin(const std::string& name) const;
  const std::map<std::string, AttrType>& paths() const { return paths_; }

  void declare(const std::string& path, AttrType t);
  void declare_builtin(const std::string& name, AttrType t);

 private:
  std::map<std::string, AttrType> paths_;
  std::map<std::string, AttrType> builtins_;
  mutable AttrType risk_type_{AttrType::Kind::number, {}};
};

// ---------------------------------------------------------------------------
// Evaluation context

/// Flat attribute view a policy condition is evaluated against. Built by the
/// reasoning engine from one world snapshot plus the live risk table; built
/// directly by generators in tests.
struct EvalContext {
  std::map<std::string, std::string> str_attrs;            // path -> value
  std::map<std::string, std::set<std::string>> set_attrs;  // path -> tags
  std::map<std::string, double> risk;                      // bare name -> value
  bool covers = false;
  double crossover = 0.0;
  double intent_alignment = 0.0;

  int sensitivity_rank() const;  // -1 when resource.sensitivity missing
  const std::string* operation() const;
};

struct RuleOutcome {
  std::string rule_name;
  std::vector<Effect> effects;
  bool investigate_on_fail = false;

  bool operator==(const RuleOutcome&) const = default;
};

// ---------------------------------------------------------------------------
// Diagnostics

struct Diagnostic {
  std::string code;  // unknown-attribute | type-mismatch | constant-false | shadowed-rule
  std::string rule;
  std::string message;
  int line = 0, col = 0;
};

// ---------------------------------------------------------------------------
// Compiled form

/// Rules pre-indexed by resource-sensitivity and request-operation buckets so
/// candidate selection is sub-linear in the total rule count. Evaluation is
/// semantically identical to reference_interpret.
class CompiledPolicySet {
 public:
  struct Stats {
    std::size_t candidates_evaluated = 0;
  };

  std::vector<RuleOutcome> evaluate(const EvalContext& ctx, Stats* stats = nullptr) const;

  const PolicySet& source() const { return source_; }
  std::size_t rule_count() const { return source_.rules.size(); }

 private:
  friend CompiledPolicySet compile(const PolicySet& ps, const AttributeSchema& schema);

  struct Bucket {
    std::unordered_map<std::string, std::vector<int>> by_op;
    std::vector<int> any_op;
  };

  PolicySet source_;
  const AttributeSchema* schema_ = nullptr;
  std::array<Bucket, 4> buckets_;
  std::vector<int> no_sensitivity_ctx_;  // candidates when ctx lacks sensitivity
};

// ---------------------------------------------------------------------------
// Operations

/// Parses policy source text. Throws Error("syntax-error"...) with line/col in
/// the message, or Error("duplicate-rule-name").
PolicySet parse_policy(const std::string& text);

std::string canonical_print(const PolicySet& ps);
std::string print_expr(const Expr& e);

std::vector<Diagnostic> lint(const PolicySet& ps, const AttributeSchema& schema);

/// Throws Error("compile-rejected") when lint reports unknown attributes or
/// type mismatches.
CompiledPolicySet compile(const PolicySet& ps, const AttributeSchema& schema);

/// Straightforward AST interpreter; the oracle that compiled evaluation is
/// checked against. Outcomes are in rule-declaration order.
std::vector<RuleOutcome> reference_interpret(const PolicySet& ps, const EvalContext& ctx,
                                             const AttributeSchema& schema);

/// Evaluates one condition (shared by reference and compiled paths).
bool eval_condition(const Expr& e, const EvalContext& ctx, const AttributeSchema& schema);

}  // namespace bz
