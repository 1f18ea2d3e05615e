#include <algorithm>
#include <functional>

#include "bz/policy.hpp"

namespace bz {

int AttrType::rank_of(const std::string& v) const {
  for (std::size_t i = 0; i < enum_values.size(); ++i)
    if (enum_values[i] == v) return static_cast<int>(i);
  return -1;
}

const AttributeSchema& AttributeSchema::standard() {
  static AttributeSchema s = [] {
    AttributeSchema sc;
    auto str = AttrType{AttrType::Kind::string_, {}};
    auto tags = AttrType{AttrType::Kind::tagset, {}};
    sc.declare("accessor.id", str);
    sc.declare("accessor.kind", {AttrType::Kind::enum_, {"human", "agent"}});
    sc.declare("accessor.job_function", str);
    sc.declare("accessor.role", str);
    sc.declare("accessor.seniority", str);
    sc.declare("accessor.team_id", str);
    sc.declare("accessor.static_risk_tier",
               {AttrType::Kind::enum_ordered, {"low", "elevated", "high"}});
    sc.declare("accessor.topic_tags", tags);
    sc.declare("resource.id", str);
    sc.declare("resource.sensitivity",
               {AttrType::Kind::enum_ordered,
                {"public", "internal", "confidential", "highly_confidential"}});
    sc.declare("resource.data_type", str);
    sc.declare("resource.owning_team", str);
    sc.declare("resource.topic_tags", tags);
    sc.declare("resource.authorized_worker_functions", tags);
    sc.declare("request.operation", str);
    sc.declare_builtin("assignment_covers", {AttrType::Kind::boolean, {}});
    sc.declare_builtin("crossover", {AttrType::Kind::number, {}});
    sc.declare_builtin("intent_alignment", {AttrType::Kind::number, {}});
    return sc;
  }();
  return s;
}

const AttrType* AttributeSchema::lookup(const std::string& path) const {
  if (is_risk_path(path)) return &risk_type_;
  auto it = paths_.find(path);
  return it == paths_.end() ? nullptr : &it->second;
}

bool AttributeSchema::is_risk_path(const std::string& path) const {
  return path.rfind("risk.", 0) == 0 && path.size() > 5 &&
         path.find('.', 5) == std::string::npos;
}

const AttrType* AttributeSchema::builtin(const std::string& name) const {
  auto it = builtins_.find(name);
  return it == builtins_.end() ? nullptr : &it->second;
}

void AttributeSchema::declare(const std::string& path, AttrType t) {
  paths_[path] = std::move(t);
}

void AttributeSchema::declare_builtin(const std::string& name, AttrType t) {
  builtins_[name] = std::move(t);
}

int EvalContext::sensitivity_rank() const {
  auto it = str_attrs.find("resource.sensitivity");
  if (it == str_attrs.end()) return -1;
  return AttributeSchema::standard().lookup("resource.sensitivity")->rank_of(it->second);
}

const std::string* EvalContext::operation() const {
  auto it = str_attrs.find("request.operation");
  return it == str_attrs.end() ? nullptr : &it->second;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

/// Static type of an atom-valued expression; nullptr means boolean-valued
/// (connectives, comparisons, boolean builtins/literals).
const AttrType* atom_type(const Expr& e, const AttributeSchema& schema) {
  static const AttrType kStr{AttrType::Kind::string_, {}};
  static const AttrType kNum{AttrType::Kind::number, {}};
  static const AttrType kSet{AttrType::Kind::tagset, {}};
  switch (e.kind) {
    case Expr::Kind::path: return schema.lookup(e.text);
    case Expr::Kind::str: return &kStr;
    case Expr::Kind::num: return &kNum;
    case Expr::Kind::set_lit: return &kSet;
    case Expr::Kind::builtin: {
      const AttrType* t = schema.builtin(e.text);
      return (t && t->kind != AttrType::Kind::boolean) ? t : nullptr;
    }
    default: return nullptr;
  }
}

bool is_string_like(const AttrType* t) {
  return t && (t->kind == AttrType::Kind::string_ || t->kind == AttrType::Kind::enum_ ||
               t->kind == AttrType::Kind::enum_ordered);
}

struct Val {
  enum class K { boolean, number, string_, set_, missing };
  K k = K::missing;
  bool b = false;
  double n = 0.0;
  const std::string* s = nullptr;
  const std::set<std::string>* set = nullptr;
  const std::vector<std::string>* setlit = nullptr;
};

Val eval_value(const Expr& e, const EvalContext& ctx, const AttributeSchema& schema) {
  Val v;
  switch (e.kind) {
    case Expr::Kind::path: {
      if (schema.is_risk_path(e.text)) {
        v.k = Val::K::number;
        auto it = ctx.risk.find(e.text.substr(5));
        v.n = it == ctx.risk.end() ? 0.0 : it->second;  // absent risk reads as 0
        return v;
      }
      const AttrType* t = schema.lookup(e.text);
      if (!t) throw Error("unknown-attribute", "unknown attribute path: " + e.text);
      if (t->kind == AttrType::Kind::tagset) {
        auto it = ctx.set_attrs.find(e.text);
        if (it == ctx.set_attrs.end()) return v;  // missing
        v.k = Val::K::set_;
        v.set = &it->second;
        return v;
      }
      auto it = ctx.str_attrs.find(e.text);
      if (it == ctx.str_attrs.end()) return v;  // missing
      v.k = Val::K::string_;
      v.s = &it->second;
      return v;
    }
    case Expr::Kind::str:
      v.k = Val::K::string_;
      v.s = &e.text;
      return v;
    case Expr::Kind::num:
      v.k = Val::K::number;
      v.n = e.num;
      return v;
    case Expr::Kind::set_lit:
      v.k = Val::K::set_;
      v.setlit = &e.items;
      return v;
    case Expr::Kind::builtin: {
      if (e.text == "crossover") {
        v.k = Val::K::number;
        v.n = ctx.crossover;
        return v;
      }
      if (e.text == "intent_alignment") {
        v.k = Val::K::number;
        v.n = ctx.intent_alignment;
        return v;
      }
      if (e.text == "assignment_covers") {
        v.k = Val::K::boolean;
        v.b = ctx.covers;
        return v;
      }
      throw Error("unknown-attribute", "unknown builtin: " + e.text);
    }
    default:
      v.k = Val::K::boolean;
      v.b = eval_condition(e, ctx, schema);
      return v;
  }
}

bool eval_cmp(const Expr& e, const EvalContext& ctx, const AttributeSchema& schema) {
  const Expr& lhs = *e.kids[0];
  const Expr& rhs = *e.kids[1];
  Val a = eval_value(lhs, ctx, schema);
  Val b = eval_value(rhs, ctx, schema);
  // A comparison against a missing attribute never holds.
  if (a.k == Val::K::missing || b.k == Val::K::missing) return false;

  const std::string& op = e.op;
  if (a.k == Val::K::number && b.k == Val::K::number) {
    if (op == "==") return a.n == b.n;
    if (op == "!=") return a.n != b.n;
    if (op == "<") return a.n < b.n;
    if (op == "<=") return a.n <= b.n;
    if (op == ">") return a.n > b.n;
    if (op == ">=") return a.n >= b.n;
    return false;
  }
  if (a.k == Val::K::string_ && b.k == Val::K::string_) {
    // Ordered comparisons use enum rank when either side is an ordered enum path.
    const AttrType* ta = atom_type(lhs, schema);
    const AttrType* tb = atom_type(rhs, schema);
    const AttrType* en = nullptr;
    if (ta && ta->kind == AttrType::Kind::enum_ordered) en = ta;
    else if (tb && tb->kind == AttrType::Kind::enum_ordered) en = tb;
    if (op == "==") return *a.s == *b.s;
    if (op == "!=") return *a.s != *b.s;
    if (!en) return false;  // ordering undefined for plain strings
    int ra = en->rank_of(*a.s), rb = en->rank_of(*b.s);
    if (ra < 0 || rb < 0) return false;
    if (op == "<") return ra < rb;
    if (op == "<=") return ra <= rb;
    if (op == ">") return ra > rb;
    if (op == ">=") return ra >= rb;
    return false;
  }
  if (a.k == Val::K::boolean && b.k == Val::K::boolean) {
    if (op == "==") return a.b == b.b;
    if (op == "!=") return a.b != b.b;
    return false;
  }
  return false;  // incomparable types
}

bool set_contains(const Val& set_val, const std::string& item) {
  if (set_val.set) return set_val.set->count(item) > 0;
  if (set_val.setlit)
    return std::find(set_val.setlit->begin(), set_val.setlit->end(), item) !=
           set_val.setlit->end();
  return false;
}

}  // namespace

bool eval_condition(const Expr& e, const EvalContext& ctx, const AttributeSchema& schema) {
  switch (e.kind) {
    case Expr::Kind::or_:
      for (const auto& k : e.kids)
        if (eval_condition(*k, ctx, schema)) return true;
      return false;
    case Expr::Kind::and_:
      for (const auto& k : e.kids)
        if (!eval_condition(*k, ctx, schema)) return false;
      return true;
    case Expr::Kind::not_:
      return !eval_condition(*e.kids[0], ctx, schema);
    case Expr::Kind::cmp:
      return eval_cmp(e, ctx, schema);
    case Expr::Kind::in_: {
      Val item = eval_value(*e.kids[0], ctx, schema);
      Val set = eval_value(*e.kids[1], ctx, schema);
      if (item.k != Val::K::string_ || set.k != Val::K::set_) return false;
      return set_contains(set, *item.s);
    }
    case Expr::Kind::boolean:
      return e.bval;
    case Expr::Kind::builtin: {
      Val v = eval_value(e, ctx, schema);
      return v.k == Val::K::boolean ? v.b : v.n != 0.0;
    }
    default:
      // Bare string/number/path/set atoms are not valid conditions; lint
      // reports them, evaluation treats them as false.
      return false;
  }
}

std::vector<RuleOutcome> reference_interpret(const PolicySet& ps, const EvalContext& ctx,
                                             const AttributeSchema& schema) {
  std::vector<RuleOutcome> out;
  for (const auto& r : ps.rules) {
    if (eval_condition(*r.condition, ctx, schema))
      out.push_back({r.name, r.effects, r.investigate_on_fail});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Lint

namespace {

void walk(const Expr& e, const std::function<void(const Expr&)>& fn) {
  fn(e);
  for (const auto& k : e.kids) walk(*k, fn);
}

void lint_expr(const Rule& r, const Expr& e, const AttributeSchema& schema,
               std::vector<Diagnostic>& diags) {
  auto diag = [&](const std::string& code, const std::string& msg, const Expr& at) {
    diags.push_back({code, r.name, msg, at.line, at.col});
  };
  walk(e, [&](const Expr& n) {
    if (n.kind == Expr::Kind::path && !schema.lookup(n.text))
      diag("unknown-attribute", "unknown attribute path: " + n.text, n);
    if (n.kind == Expr::Kind::builtin && !schema.builtin(n.text))
      diag("unknown-attribute", "unknown builtin: " + n.text, n);
    if (n.kind == Expr::Kind::cmp) {
      const Expr& a = *n.kids[0];
      const Expr& b = *n.kids[1];
      const AttrType* ta = atom_type(a, schema);
      const AttrType* tb = atom_type(b, schema);
      if ((a.kind == Expr::Kind::path && !schema.lookup(a.text)) ||
          (b.kind == Expr::Kind::path && !schema.lookup(b.text)))
        return;  // already reported as unknown-attribute
      bool both_atoms = (ta || a.kind == Expr::Kind::boolean || !a.kids.empty()) &&
                        (tb || b.kind == Expr::Kind::boolean || !b.kids.empty());
      (void)both_atoms;
      bool num = ta && tb && ta->kind == AttrType::Kind::number &&
                 tb->kind == AttrType::Kind::number;
      bool str = is_string_like(ta) && is_string_like(tb);
      bool boolean = !ta && !tb;
      if (!num && !str && !boolean) {
        diag("type-mismatch", "incomparable operand types for '" + n.op + "'", n);
        return;
      }
      if (str) {
        // Enum membership of literals; ordering needs an ordered enum.
        const AttrType* en = nullptr;
        if (ta && ta->kind != AttrType::Kind::string_ && !ta->enum_values.empty()) en = ta;
        if (tb && tb->kind != AttrType::Kind::string_ && !tb->enum_values.empty()) en = tb;
        if (en) {
          if (a.kind == Expr::Kind::str && en->rank_of(a.text) < 0)
            diag("type-mismatch", "\"" + a.text + "\" is not a value of this enum", a);
          if (b.kind == Expr::Kind::str && en->rank_of(b.text) < 0)
            diag("type-mismatch", "\"" + b.text + "\" is not a value of this enum", b);
        }
        if (n.op != "==" && n.op != "!=" &&
            !(en && en->kind == AttrType::Kind::enum_ordered))
          diag("type-mismatch", "ordered comparison on unordered values", n);
      }
      if (boolean && n.op != "==" && n.op != "!=")
        diag("type-mismatch", "ordered comparison on booleans", n);
    }
    if (n.kind == Expr::Kind::in_) {
      const AttrType* ta = atom_type(*n.kids[0], schema);
      const AttrType* tb = atom_type(*n.kids[1], schema);
      if (!is_string_like(ta) || !tb || tb->kind != AttrType::Kind::tagset)
        diag("type-mismatch", "'in' needs a string on the left and a set on the right",
             n);
    }
  });
}

/// True when the condition only references ordered/unordered enum paths,
/// string literals and boolean connectives, so it can be enumerated exactly.
bool enum_only(const Expr& e, const AttributeSchema& schema,
               std::set<std::string>& enum_paths) {
  switch (e.kind) {
    case Expr::Kind::or_:
    case Expr::Kind::and_:
    case Expr::Kind::not_:
      for (const auto& k : e.kids)
        if (!enum_only(*k, schema, enum_paths)) return false;
      return true;
    case Expr::Kind::boolean:
      return true;
    case Expr::Kind::cmp: {
      auto leaf_ok = [&](const Expr& n) {
        if (n.kind == Expr::Kind::str) return true;
        if (n.kind == Expr::Kind::path) {
          const AttrType* t = schema.lookup(n.text);
          if (t && (t->kind == AttrType::Kind::enum_ ||
                    t->kind == AttrType::Kind::enum_ordered)) {
            enum_paths.insert(n.text);
            return true;
          }
        }
        return false;
      };
      return leaf_ok(*e.kids[0]) && leaf_ok(*e.kids[1]);
    }
    default:
      return false;
  }
}

bool constant_false(const Rule& r, const AttributeSchema& schema) {
  std::set<std::string> paths;
  if (!enum_only(*r.condition, schema, paths)) return false;
  std::vector<std::string> ps(paths.begin(), paths.end());
  std::size_t combos = 1;
  for (const auto& p : ps) {
    combos *= schema.lookup(p)->enum_values.size();
    if (combos > 4096) return false;
  }
  EvalContext ctx;
  std::function<bool(std::size_t)> any = [&](std::size_t i) -> bool {
    if (i == ps.size()) return eval_condition(*r.condition, ctx, schema);
    for (const auto& v : schema.lookup(ps[i])->enum_values) {
      ctx.str_attrs[ps[i]] = v;
      if (any(i + 1)) return true;
    }
    return false;
  };
  return !any(0);
}

}  // namespace

std::vector<Diagnostic> lint(const PolicySet& ps, const AttributeSchema& schema) {
  std::vector<Diagnostic> diags;
  for (std::size_t i = 0; i < ps.rules.size(); ++i) {
    const Rule& r = ps.rules[i];
    std::size_t before = diags.size();
    lint_expr(r, *r.condition, schema, diags);
    bool clean = diags.size() == before;
    if (clean && constant_false(r, schema))
      diags.push_back({"constant-false", r.name,
                       "condition can never hold over the declared enums", r.line,
                       r.col});
    for (std::size_t j = 0; j < i; ++j) {
      if (expr_equal(*ps.rules[j].condition, *r.condition)) {
        diags.push_back({"shadowed-rule", r.name,
                         "condition identical to earlier rule \"" + ps.rules[j].name +
                             "\"",
                         r.line, r.col});
        break;
      }
    }
  }
  return diags;
}

// ---------------------------------------------------------------------------
// Compile

namespace {

constexpr int kSensLevels = 4;

/// Restricts the possible resource.sensitivity ranks / request operations from
/// top-level conjuncts. Conservative: anything not recognized keeps the full
/// range.
struct RuleIndexInfo {
  std::array<bool, kSensLevels> sens{true, true, true, true};
  std::optional<std::vector<std::string>> ops;  // nullopt = any operation
};

void restrict_from_conjunct(const Expr& c, const AttributeSchema& schema,
                            RuleIndexInfo& info) {
  const AttrType* sens_type = schema.lookup("resource.sensitivity");
  if (c.kind == Expr::Kind::cmp) {
    const Expr* path = nullptr;
    const Expr* lit = nullptr;
    bool flipped = false;
    if (c.kids[0]->kind == Expr::Kind::path && c.kids[1]->kind == Expr::Kind::str) {
      path = c.kids[0].get();
      lit = c.kids[1].get();
    } else if (c.kids[1]->kind == Expr::Kind::path &&
               c.kids[0]->kind == Expr::Kind::str) {
      path = c.kids[1].get();
      lit = c.kids[0].get();
      flipped = true;
    } else {
      return;
    }
    std::string op = c.op;
    if (flipped) {
      if (op == "<") op = ">";
      else if (op == "<=") op = ">=";
      else if (op == ">") op = "<";
      else if (op == ">=") op = "<=";
    }
    if (path->text == "resource.sensitivity") {
      int r = sens_type->rank_of(lit->text);
      if (r < 0) return;
      for (int i = 0; i < kSensLevels; ++i) {
        bool keep = op == "==" ? i == r
                  : op == "!=" ? i != r
                  : op == "<"  ? i < r
                  : op == "<=" ? i <= r
                  : op == ">"  ? i > r
                  : op == ">=" ? i >= r
                               : true;
        info.sens[i] = info.sens[i] && keep;
      }
    } else if (path->text == "request.operation" && op == "==") {
      if (info.ops) {
        std::vector<std::string> merged;
        for (const auto& o : *info.ops)
          if (o == lit->text) merged.push_back(o);
        info.ops = merged;
      } else {
        info.ops = std::vector<std::string>{lit->text};
      }
    }
  } else if (c.kind == Expr::Kind::in_) {
    if (c.kids[0]->kind != Expr::Kind::path || c.kids[1]->kind != Expr::Kind::set_lit)
      return;
    const std::string& p = c.kids[0]->text;
    const auto& items = c.kids[1]->items;
    if (p == "resource.sensitivity") {
      std::array<bool, kSensLevels> allowed{};
      for (const auto& v : items) {
        int r = sens_type->rank_of(v);
        if (r >= 0) allowed[static_cast<std::size_t>(r)] = true;
      }
      for (int i = 0; i < kSensLevels; ++i) info.sens[i] = info.sens[i] && allowed[i];
    } else if (p == "request.operation") {
      if (info.ops) {
        std::vector<std::string> merged;
        for (const auto& o : *info.ops)
          if (std::find(items.begin(), items.end(), o) != items.end())
            merged.push_back(o);
        info.ops = merged;
      } else {
        info.ops = items;
      }
    }
  }
}

RuleIndexInfo analyze_rule(const Rule& r, const AttributeSchema& schema) {
  RuleIndexInfo info;
  if (r.condition->kind == Expr::Kind::and_) {
    for (const auto& k : r.condition->kids) restrict_from_conjunct(*k, schema, info);
  } else {
    restrict_from_conjunct(*r.condition, schema, info);
  }
  return info;
}

}  // namespace

CompiledPolicySet compile(const PolicySet& ps, const AttributeSchema& schema) {
  auto diags = lint(ps, schema);
  std::vector<Diagnostic> fatal;
  for (const auto& d : diags)
    if (d.code == "unknown-attribute" || d.code == "type-mismatch") fatal.push_back(d);
  if (!fatal.empty()) {
    std::string msg = "policy rejected:";
    for (const auto& d : fatal)
      msg += "\n  [" + d.code + "] rule \"" + d.rule + "\": " + d.message;
    throw Error("compile-rejected", msg);
  }

  CompiledPolicySet cps;
  cps.source_ = ps.clone();
  cps.schema_ = &schema;
  for (std::size_t i = 0; i < ps.rules.size(); ++i) {
    RuleIndexInfo info = analyze_rule(ps.rules[i], schema);
    bool full_range = info.sens[0] && info.sens[1] && info.sens[2] && info.sens[3];
    for (int s = 0; s < kSensLevels; ++s) {
      if (!info.sens[s]) continue;
      auto& bucket = cps.buckets_[static_cast<std::size_t>(s)];
      if (info.ops) {
        for (const auto& op : *info.ops)
          bucket.by_op[op].push_back(static_cast<int>(i));
      } else {
        bucket.any_op.push_back(static_cast<int>(i));
      }
    }
    if (full_range) cps.no_sensitivity_ctx_.push_back(static_cast<int>(i));
  }
  return cps;
}

std::vector<RuleOutcome> CompiledPolicySet::evaluate(const EvalContext& ctx,
                                                     Stats* stats) const {
  std::vector<int> candidates;
  int rank = ctx.sensitivity_rank();
  if (rank < 0) {
    candidates = no_sensitivity_ctx_;
  } else {
    const Bucket& b = buckets_[static_cast<std::size_t>(rank)];
    candidates = b.any_op;
    const std::string* op = ctx.operation();
    if (op) {
      auto it = b.by_op.find(*op);
      if (it != b.by_op.end()) {
        candidates.insert(candidates.end(), it->second.begin(), it->second.end());
        std::sort(candidates.begin(), candidates.end());
        candidates.erase(std::unique(candidates.begin(), candidates.end()),
                         candidates.end());
      }
    }
  }
  std::vector<RuleOutcome> out;
  for (int idx : candidates) {
    const Rule& r = source_.rules[static_cast<std::size_t>(idx)];
    if (stats) ++stats->candidates_evaluated;
    if (eval_condition(*r.condition, ctx, *schema_))
      out.push_back({r.name, r.effects, r.investigate_on_fail});
  }
  return out;
}

}  // namespace bz
