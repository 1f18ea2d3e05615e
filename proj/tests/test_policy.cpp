#include <doctest.h>

#include "bz/policy.hpp"
#include "testutil.hpp"

using namespace bz;

namespace {

const AttributeSchema& schema() { return AttributeSchema::standard(); }

std::string fmt(const std::string& src) { return canonical_print(parse_policy(src)); }

}  // namespace

TEST_CASE("canonical print: fixed form, minimal parens, number formatting") {
  std::string src =
      "policy \"a\" {\n"
      "  when (resource.sensitivity >= \"confidential\") && ((accessor.kind == \"agent\")\n"
      "     || (risk.sig0 > 0.50)) # comment\n"
      "  then challenge( verification ) , deny\n"
      "}\n";
  CHECK(fmt(src) ==
        "policy \"a\" {\n"
        "  when resource.sensitivity >= \"confidential\" && "
        "(accessor.kind == \"agent\" || risk.sig0 > 0.5)\n"
        "  then challenge(verification), deny\n"
        "}\n");
}

TEST_CASE("canonical print: precedence examples") {
  // && binds tighter than ||: no parens needed on the flat form.
  CHECK(fmt("policy \"p\" { when accessor.kind == \"human\" && assignment_covers() || "
            "crossover() > 0.5 then allow }")
            .find("when accessor.kind == \"human\" && assignment_covers() || "
                  "crossover() > 0.5\n") != std::string::npos);
  // Parens kept only where the tree demands them.
  std::string two = fmt(
      "policy \"p\" { when (accessor.kind == \"human\" || assignment_covers()) && "
      "!(crossover() > 0.5) then allow }");
  CHECK(two ==
        "policy \"p\" {\n"
        "  when (accessor.kind == \"human\" || assignment_covers()) && !(crossover() > "
        "0.5)\n"
        "  then allow\n"
        "}\n");
  // Whole numbers print without a decimal point.
  CHECK(fmt("policy \"p\" { when risk.r == 1.0 then deny }")
            .find("risk.r == 1\n") != std::string::npos);
}

TEST_CASE("blank line separates rules; investigate_on_fail survives") {
  std::string out = fmt(
      "policy \"p\" { when true then allow }\n"
      "policy \"q\" { when false then deny investigate_on_fail }");
  CHECK(out ==
        "policy \"p\" {\n  when true\n  then allow\n}\n"
        "\n"
        "policy \"q\" {\n  when false\n  then deny investigate_on_fail\n}\n");
}

TEST_CASE("round trip: parse(print(parse(x))) is a fixpoint on random policies") {
  for (uint64_t seed = 1; seed <= 40; ++seed) {
    bztest::PolicyGen gen(seed);
    std::string src = gen.policy_set(1 + static_cast<int>(seed % 8));
    std::string once = canonical_print(parse_policy(src));
    std::string twice = canonical_print(parse_policy(once));
    CHECK(once == twice);
    // And the reparsed tree is structurally identical.
    PolicySet a = parse_policy(src), b = parse_policy(once);
    REQUIRE(a.rules.size() == b.rules.size());
    for (std::size_t i = 0; i < a.rules.size(); ++i) {
      CHECK(a.rules[i].name == b.rules[i].name);
      CHECK(a.rules[i].effects == b.rules[i].effects);
      CHECK(expr_equal(*a.rules[i].condition, *b.rules[i].condition));
    }
  }
}

TEST_CASE("fixture policy set reaches a canonical fixpoint (comments dropped)") {
  std::ifstream f(bztest::fixtures_dir() + "/policies/base.bzp");
  REQUIRE(f.good());
  std::string src((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::string once = fmt(src);
  CHECK(fmt(once) == once);
  CHECK(once.find('#') == std::string::npos);
  // The fixture body below its comment header is already in canonical form.
  CHECK(src.find(once.substr(0, once.find('\n'))) != std::string::npos);
}

TEST_CASE("syntax errors carry line and column; duplicate names are rejected") {
  try {
    parse_policy("policy \"p\" {\n  when true\n  then allow deny\n}\n");
    FAIL("expected syntax error");
  } catch (const Error& e) {
    CHECK(e.code() == "syntax-error");
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    CHECK(std::string(e.what()).find("col") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_policy("policy \"p\" { when true then allow }\n"
                               "policy \"p\" { when false then deny }"),
                  Error);
  try {
    parse_policy("policy \"p\" { when true then allow }\n"
                 "policy \"p\" { when false then deny }");
  } catch (const Error& e) {
    CHECK(e.code() == "duplicate-rule-name");
  }
}

TEST_CASE("lint: unknown-attribute and type-mismatch are fatal for compile") {
  auto codes = [&](const std::string& src) {
    std::set<std::string> out;
    for (const auto& d : lint(parse_policy(src), schema())) out.insert(d.code);
    return out;
  };

  CHECK(codes("policy \"p\" { when resource.colour == \"red\" then allow }") ==
        std::set<std::string>{"unknown-attribute"});
  CHECK(codes("policy \"p\" { when resource.sensitivity > 3 then allow }")
            .count("type-mismatch") == 1);
  CHECK(codes("policy \"p\" { when resource.sensitivity == \"banana\" then allow }")
            .count("type-mismatch") == 1);
  CHECK(codes("policy \"p\" { when accessor.kind < \"human\" then allow }")
            .count("type-mismatch") == 1);  // unordered enum, ordered comparison
  CHECK(codes("policy \"p\" { when \"x\" in accessor.kind then allow }")
            .count("type-mismatch") == 1);
  CHECK(codes("policy \"p\" { when crossover() == \"high\" then allow }")
            .count("type-mismatch") == 1);

  for (const char* bad :
       {"policy \"p\" { when resource.colour == \"red\" then allow }",
        "policy \"p\" { when resource.sensitivity > 3 then allow }"}) {
    CHECK_THROWS_AS(compile(parse_policy(bad), schema()), Error);
    try {
      compile(parse_policy(bad), schema());
    } catch (const Error& e) {
      CHECK(e.code() == "compile-rejected");
    }
  }
}

TEST_CASE("lint: constant-false and shadowed-rule warn but still compile") {
  std::string src =
      "policy \"contradiction\" {\n"
      "  when accessor.kind == \"human\" && accessor.kind == \"agent\"\n"
      "  then deny\n"
      "}\n"
      "\n"
      "policy \"first\" {\n  when assignment_covers()\n  then allow\n}\n"
      "\n"
      "policy \"copy\" {\n  when assignment_covers()\n  then deny\n}\n";
  std::map<std::string, std::string> by_code;
  for (const auto& d : lint(parse_policy(src), schema())) by_code[d.code] = d.rule;
  CHECK(by_code["constant-false"] == "contradiction");
  CHECK(by_code["shadowed-rule"] == "copy");
  CHECK_NOTHROW(compile(parse_policy(src), schema()));
}

TEST_CASE("semantics: missing attributes, risk defaults, enum order, in operator") {
  auto run = [&](const std::string& cond, const EvalContext& ctx) {
    PolicySet ps = parse_policy("policy \"p\" { when " + cond + " then allow }");
    return !reference_interpret(ps, ctx, schema()).empty();
  };
  EvalContext empty;

  // Comparisons against a missing attribute are false either way.
  CHECK_FALSE(run("resource.sensitivity == \"public\"", empty));
  CHECK_FALSE(run("resource.sensitivity != \"public\"", empty));
  CHECK(run("!(resource.sensitivity == \"public\")", empty));

  // risk.* defaults to 0.0 instead of "missing".
  CHECK(run("risk.anything < 0.5", empty));
  CHECK(run("risk.anything == 0", empty));
  EvalContext r;
  r.risk["anything"] = 0.9;
  CHECK_FALSE(run("risk.anything < 0.5", r));

  // Sensitivity ordering public < internal < confidential < highly_confidential.
  EvalContext s;
  s.str_attrs["resource.sensitivity"] = "confidential";
  CHECK(run("resource.sensitivity > \"internal\"", s));
  CHECK(run("resource.sensitivity < \"highly_confidential\"", s));
  CHECK(run("resource.sensitivity in [\"confidential\", \"public\"]", s));
  CHECK_FALSE(run("resource.sensitivity in [\"public\"]", s));

  // Tag membership and builtins.
  EvalContext t;
  t.set_attrs["accessor.topic_tags"] = {"sales"};
  t.covers = true;
  t.crossover = 0.25;
  CHECK(run("\"sales\" in accessor.topic_tags", t));
  CHECK_FALSE(run("\"ledger\" in accessor.topic_tags", t));
  CHECK(run("assignment_covers()", t));
  CHECK(run("!assignment_covers()", empty));
  CHECK(run("crossover() >= 0.25 && crossover() <= 0.25", t));
}

TEST_CASE("compiled evaluation equals the reference interpreter on random pairs") {
  for (uint64_t seed = 100; seed < 140; ++seed) {
    bztest::PolicyGen gen(seed);
    PolicySet ps = parse_policy(gen.policy_set(1 + static_cast<int>(seed % 12)));
    CompiledPolicySet cp = compile(ps, schema());
    for (int i = 0; i < 60; ++i) {
      EvalContext ctx = gen.context();
      auto want = reference_interpret(ps, ctx, schema());
      auto got = cp.evaluate(ctx);
      CHECK(got == want);
    }
  }
}

TEST_CASE("bucketing prunes candidates without changing outcomes") {
  // 8 rules pinned to distinct (sensitivity, operation) pairs plus 2 generic.
  std::string src;
  const char* sens[] = {"public", "internal", "confidential", "highly_confidential"};
  const char* ops[] = {"read", "admin_op"};
  int n = 0;
  for (const char* s : sens)
    for (const char* o : ops)
      src += "policy \"r" + std::to_string(n++) + "\" { when resource.sensitivity == \"" +
             s + "\" && request.operation == \"" + o + "\" then allow }\n";
  src += "policy \"any1\" { when assignment_covers() then allow }\n";
  src += "policy \"any2\" { when crossover() > 0.9 then deny }\n";

  PolicySet ps = parse_policy(src);
  CompiledPolicySet cp = compile(ps, schema());

  EvalContext ctx;
  ctx.str_attrs["resource.sensitivity"] = "confidential";
  ctx.str_attrs["request.operation"] = "read";
  ctx.covers = true;
  CompiledPolicySet::Stats stats;
  auto got = cp.evaluate(ctx, &stats);
  CHECK(got == reference_interpret(ps, ctx, schema()));
  // Only the one pinned rule plus the two any-op/any-sensitivity rules remain.
  CHECK(stats.candidates_evaluated == 3);

  // Without a sensitivity attribute every sensitivity-gated rule is already
  // false, so the no-sensitivity candidate list alone must stay sound.
  EvalContext bare;
  bare.covers = true;
  CompiledPolicySet::Stats stats2;
  CHECK(cp.evaluate(bare, &stats2) == reference_interpret(ps, bare, schema()));
  CHECK(stats2.candidates_evaluated == 2);
}

TEST_CASE("outcomes keep declaration order even across buckets") {
  std::string src =
      "policy \"z_last_name_first_rule\" { when request.operation == \"read\" then deny }\n"
      "policy \"a_generic\" { when true then allow }\n";
  PolicySet ps = parse_policy(src);
  CompiledPolicySet cp = compile(ps, schema());
  EvalContext ctx;
  ctx.str_attrs["request.operation"] = "read";
  auto got = cp.evaluate(ctx);
  REQUIRE(got.size() == 2);
  CHECK(got[0].rule_name == "z_last_name_first_rule");
  CHECK(got[1].rule_name == "a_generic");
}
