#include <cctype>
#include <cstdio>
#include <sstream>

#include "bz/policy.hpp"

namespace bz {

const char* to_string(ChallengeKind k) {
  switch (k) {
    case ChallengeKind::justification: return "justification";
    case ChallengeKind::approval_manager: return "approval_manager";
    case ChallengeKind::approval_owner: return "approval_owner";
    case ChallengeKind::verification: return "verification";
    case ChallengeKind::biometric: return "biometric";
  }
  return "justification";
}

const char* to_string(ContainLevel l) {
  return l == ContainLevel::soft ? "soft" : "hard";
}

ChallengeKind challenge_kind_from(const std::string& s) {
  if (s == "justification") return ChallengeKind::justification;
  if (s == "approval_manager") return ChallengeKind::approval_manager;
  if (s == "approval_owner") return ChallengeKind::approval_owner;
  if (s == "verification") return ChallengeKind::verification;
  if (s == "biometric") return ChallengeKind::biometric;
  throw Error("syntax-error", "unknown challenge kind: " + s);
}

ContainLevel contain_level_from(const std::string& s) {
  if (s == "soft") return ContainLevel::soft;
  if (s == "hard") return ContainLevel::hard;
  throw Error("syntax-error", "unknown containment level: " + s);
}

int challenge_rank(ChallengeKind k) { return static_cast<int>(k); }

std::string Effect::to_source() const {
  switch (kind) {
    case Kind::allow: return "allow";
    case Kind::deny: return "deny";
    case Kind::challenge: return std::string("challenge(") + to_string(challenge) + ")";
    case Kind::contain: return std::string("contain(") + to_string(contain) + ")";
  }
  return "allow";
}

ExprPtr Expr::clone() const {
  auto e = std::make_unique<Expr>();
  e->kind = kind;
  e->text = text;
  e->num = num;
  e->bval = bval;
  e->items = items;
  e->op = op;
  e->line = line;
  e->col = col;
  for (const auto& k : kids) e->kids.push_back(k->clone());
  return e;
}

bool expr_equal(const Expr& a, const Expr& b) {
  if (a.kind != b.kind || a.text != b.text || a.num != b.num || a.bval != b.bval ||
      a.items != b.items || a.op != b.op || a.kids.size() != b.kids.size())
    return false;
  for (std::size_t i = 0; i < a.kids.size(); ++i)
    if (!expr_equal(*a.kids[i], *b.kids[i])) return false;
  return true;
}

Rule Rule::clone() const {
  Rule r;
  r.name = name;
  r.condition = condition ? condition->clone() : nullptr;
  r.effects = effects;
  r.investigate_on_fail = investigate_on_fail;
  r.line = line;
  r.col = col;
  return r;
}

PolicySet PolicySet::clone() const {
  PolicySet ps;
  ps.schema_version = schema_version;
  for (const auto& r : rules) ps.rules.push_back(r.clone());
  return ps;
}

// ---------------------------------------------------------------------------
// Lexer

namespace {

struct Token {
  enum class T {
    end, ident, str, number, lbrace, rbrace, lparen, rparen, lbracket, rbracket,
    comma, dot, and_, or_, bang, eq, ne, le, ge, lt, gt,
  };
  T t = T::end;
  std::string text;
  double num = 0.0;
  int line = 1, col = 1;
};

[[noreturn]] void syntax_error(int line, int col, const std::string& expected) {
  std::ostringstream os;
  os << "line " << line << ", col " << col << ": expected " << expected;
  throw Error("syntax-error", os.str());
}

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) { advance(); }

  const Token& peek() const { return cur_; }
  Token take() {
    Token t = cur_;
    advance();
    return t;
  }

 private:
  void advance() {
    skip_ws();
    cur_ = Token{};
    cur_.line = line_;
    cur_.col = col_;
    if (pos_ >= src_.size()) {
      cur_.t = Token::T::end;
      return;
    }
    char c = src_[pos_];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::string id;
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
        id.push_back(src_[pos_]);
        bump();
      }
      cur_.t = Token::T::ident;
      cur_.text = std::move(id);
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '-' && pos_ + 1 < src_.size() &&
         std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
      std::string n;
      if (c == '-') {
        n.push_back(c);
        bump();
      }
      bool seen_dot = false;
      while (pos_ < src_.size() &&
             (std::isdigit(static_cast<unsigned char>(src_[pos_])) ||
              (src_[pos_] == '.' && !seen_dot && pos_ + 1 < src_.size() &&
               std::isdigit(static_cast<unsigned char>(src_[pos_ + 1]))))) {
        if (src_[pos_] == '.') seen_dot = true;
        n.push_back(src_[pos_]);
        bump();
      }
      cur_.t = Token::T::number;
      cur_.num = std::strtod(n.c_str(), nullptr);
      return;
    }
    if (c == '"') {
      bump();
      std::string s;
      while (pos_ < src_.size() && src_[pos_] != '"') {
        if (src_[pos_] == '\\' && pos_ + 1 < src_.size()) bump();
        s.push_back(src_[pos_]);
        bump();
      }
      if (pos_ >= src_.size()) syntax_error(cur_.line, cur_.col, "closing '\"'");
      bump();
      cur_.t = Token::T::str;
      cur_.text = std::move(s);
      return;
    }
    auto two = [&](char a, char b) {
      return c == a && pos_ + 1 < src_.size() && src_[pos_ + 1] == b;
    };
    if (two('&', '&')) { bump(); bump(); cur_.t = Token::T::and_; return; }
    if (two('|', '|')) { bump(); bump(); cur_.t = Token::T::or_; return; }
    if (two('=', '=')) { bump(); bump(); cur_.t = Token::T::eq; return; }
    if (two('!', '=')) { bump(); bump(); cur_.t = Token::T::ne; return; }
    if (two('<', '=')) { bump(); bump(); cur_.t = Token::T::le; return; }
    if (two('>', '=')) { bump(); bump(); cur_.t = Token::T::ge; return; }
    switch (c) {
      case '{': bump(); cur_.t = Token::T::lbrace; return;
      case '}': bump(); cur_.t = Token::T::rbrace; return;
      case '(': bump(); cur_.t = Token::T::lparen; return;
      case ')': bump(); cur_.t = Token::T::rparen; return;
      case '[': bump(); cur_.t = Token::T::lbracket; return;
      case ']': bump(); cur_.t = Token::T::rbracket; return;
      case ',': bump(); cur_.t = Token::T::comma; return;
      case '.': bump(); cur_.t = Token::T::dot; return;
      case '!': bump(); cur_.t = Token::T::bang; return;
      case '<': bump(); cur_.t = Token::T::lt; return;
      case '>': bump(); cur_.t = Token::T::gt; return;
    }
    syntax_error(line_, col_, "a token");
  }

  void skip_ws() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') bump();
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        bump();
      } else {
        break;
      }
    }
  }

  void bump() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  const std::string& src_;
  std::size_t pos_ = 0;
  int line_ = 1, col_ = 1;
  Token cur_;
};

// ---------------------------------------------------------------------------
// Recursive-descent parser

class Parser {
 public:
  explicit Parser(const std::string& src) : lex_(src) {}

  PolicySet parse_set() {
    PolicySet ps;
    while (lex_.peek().t != Token::T::end) {
      Rule r = parse_rule();
      for (const auto& prev : ps.rules)
        if (prev.name == r.name)
          throw Error("duplicate-rule-name", "duplicate rule name: " + r.name);
      ps.rules.push_back(std::move(r));
    }
    return ps;
  }

 private:
  Token expect(Token::T t, const std::string& what) {
    if (lex_.peek().t != t) syntax_error(lex_.peek().line, lex_.peek().col, what);
    return lex_.take();
  }

  Token expect_kw(const std::string& kw) {
    const Token& p = lex_.peek();
    if (p.t != Token::T::ident || p.text != kw)
      syntax_error(p.line, p.col, "'" + kw + "'");
    return lex_.take();
  }

  Rule parse_rule() {
    Rule r;
    Token kw = expect_kw("policy");
    r.line = kw.line;
    r.col = kw.col;
    r.name = expect(Token::T::str, "policy name string").text;
    expect(Token::T::lbrace, "'{'");
    expect_kw("when");
    r.condition = parse_expr();
    expect_kw("then");
    r.effects.push_back(parse_effect());
    while (lex_.peek().t == Token::T::comma) {
      lex_.take();
      r.effects.push_back(parse_effect());
    }
    if (lex_.peek().t == Token::T::ident && lex_.peek().text == "investigate_on_fail") {
      lex_.take();
      r.investigate_on_fail = true;
    }
    expect(Token::T::rbrace, "'}'");
    return r;
  }

  Effect parse_effect() {
    Token t = expect(Token::T::ident, "an effect");
    Effect e;
    if (t.text == "allow") {
      e.kind = Effect::Kind::allow;
    } else if (t.text == "deny") {
      e.kind = Effect::Kind::deny;
    } else if (t.text == "challenge") {
      e.kind = Effect::Kind::challenge;
      expect(Token::T::lparen, "'('");
      e.challenge = challenge_kind_from(expect(Token::T::ident, "challenge kind").text);
      expect(Token::T::rparen, "')'");
    } else if (t.text == "contain") {
      e.kind = Effect::Kind::contain;
      expect(Token::T::lparen, "'('");
      e.contain = contain_level_from(expect(Token::T::ident, "containment level").text);
      expect(Token::T::rparen, "')'");
    } else {
      syntax_error(t.line, t.col, "allow, deny, challenge(...) or contain(...)");
    }
    return e;
  }

  ExprPtr parse_expr() { return parse_or(); }

  ExprPtr make(Expr::Kind k, int line, int col) {
    auto e = std::make_unique<Expr>();
    e->kind = k;
    e->line = line;
    e->col = col;
    return e;
  }

  ExprPtr parse_or() {
    ExprPtr first = parse_and();
    if (lex_.peek().t != Token::T::or_) return first;
    ExprPtr e = make(Expr::Kind::or_, first->line, first->col);
    e->kids.push_back(std::move(first));
    while (lex_.peek().t == Token::T::or_) {
      lex_.take();
      e->kids.push_back(parse_and());
    }
    return e;
  }

  ExprPtr parse_and() {
    ExprPtr first = parse_cmp();
    if (lex_.peek().t != Token::T::and_) return first;
    ExprPtr e = make(Expr::Kind::and_, first->line, first->col);
    e->kids.push_back(std::move(first));
    while (lex_.peek().t == Token::T::and_) {
      lex_.take();
      e->kids.push_back(parse_cmp());
    }
    return e;
  }

  // Grammar precedence: ! > comparison > && > ||, so `!` binds to an atom and
  // negating a whole comparison needs parentheses.
  ExprPtr parse_unary() {
    if (lex_.peek().t == Token::T::bang) {
      Token t = lex_.take();
      ExprPtr e = make(Expr::Kind::not_, t.line, t.col);
      e->kids.push_back(parse_unary());
      return e;
    }
    return parse_atom();
  }

  ExprPtr parse_cmp() {
    ExprPtr lhs = parse_unary();
    const Token& p = lex_.peek();
    std::string op;
    switch (p.t) {
      case Token::T::eq: op = "=="; break;
      case Token::T::ne: op = "!="; break;
      case Token::T::le: op = "<="; break;
      case Token::T::ge: op = ">="; break;
      case Token::T::lt: op = "<"; break;
      case Token::T::gt: op = ">"; break;
      case Token::T::ident:
        if (p.text == "in") {
          Token t = lex_.take();
          ExprPtr e = make(Expr::Kind::in_, t.line, t.col);
          e->kids.push_back(std::move(lhs));
          e->kids.push_back(parse_unary());
          return e;
        }
        return lhs;
      default:
        return lhs;
    }
    Token t = lex_.take();
    ExprPtr e = make(Expr::Kind::cmp, t.line, t.col);
    e->op = op;
    e->kids.push_back(std::move(lhs));
    e->kids.push_back(parse_unary());
    return e;
  }

  ExprPtr parse_atom() {
    const Token& p = lex_.peek();
    switch (p.t) {
      case Token::T::lparen: {
        lex_.take();
        ExprPtr e = parse_expr();
        expect(Token::T::rparen, "')'");
        return e;
      }
      case Token::T::str: {
        Token t = lex_.take();
        ExprPtr e = make(Expr::Kind::str, t.line, t.col);
        e->text = t.text;
        return e;
      }
      case Token::T::number: {
        Token t = lex_.take();
        ExprPtr e = make(Expr::Kind::num, t.line, t.col);
        e->num = t.num;
        return e;
      }
      case Token::T::lbracket: {
        Token t = lex_.take();
        ExprPtr e = make(Expr::Kind::set_lit, t.line, t.col);
        if (lex_.peek().t != Token::T::rbracket) {
          e->items.push_back(expect(Token::T::str, "string in set literal").text);
          while (lex_.peek().t == Token::T::comma) {
            lex_.take();
            e->items.push_back(expect(Token::T::str, "string in set literal").text);
          }
        }
        expect(Token::T::rbracket, "']'");
        return e;
      }
      case Token::T::ident: {
        Token t = lex_.take();
        if (t.text == "true" || t.text == "false") {
          ExprPtr e = make(Expr::Kind::boolean, t.line, t.col);
          e->bval = (t.text == "true");
          return e;
        }
        if (lex_.peek().t == Token::T::lparen) {
          lex_.take();
          expect(Token::T::rparen, "')' (builtins take no arguments)");
          ExprPtr e = make(Expr::Kind::builtin, t.line, t.col);
          e->text = t.text;
          return e;
        }
        if (lex_.peek().t == Token::T::dot) {
          std::string path = t.text;
          while (lex_.peek().t == Token::T::dot) {
            lex_.take();
            path += "." + expect(Token::T::ident, "path segment").text;
          }
          ExprPtr e = make(Expr::Kind::path, t.line, t.col);
          e->text = path;
          return e;
        }
        syntax_error(t.line, t.col, "an expression");
      }
      default:
        syntax_error(p.line, p.col, "an expression");
    }
  }

  Lexer lex_;
};

// ---------------------------------------------------------------------------
// Canonical printer

int precedence(Expr::Kind k) {
  switch (k) {
    case Expr::Kind::or_: return 1;
    case Expr::Kind::and_: return 2;
    case Expr::Kind::cmp:
    case Expr::Kind::in_: return 3;
    case Expr::Kind::not_: return 4;
    default: return 5;
  }
}

std::string print_number(double v) {
  if (v == static_cast<long long>(v) && std::abs(v) < 1e15)
    return std::to_string(static_cast<long long>(v));
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

void print_rec(const Expr& e, int parent_prec, std::string& out) {
  bool paren = precedence(e.kind) < parent_prec;
  if (paren) out += "(";
  switch (e.kind) {
    case Expr::Kind::or_:
      for (std::size_t i = 0; i < e.kids.size(); ++i) {
        if (i) out += " || ";
        print_rec(*e.kids[i], 2, out);
      }
      break;
    case Expr::Kind::and_:
      for (std::size_t i = 0; i < e.kids.size(); ++i) {
        if (i) out += " && ";
        print_rec(*e.kids[i], 3, out);
      }
      break;
    case Expr::Kind::not_:
      out += "!";
      print_rec(*e.kids[0], 4, out);
      break;
    case Expr::Kind::cmp:
      print_rec(*e.kids[0], 4, out);
      out += " " + e.op + " ";
      print_rec(*e.kids[1], 4, out);
      break;
    case Expr::Kind::in_:
      print_rec(*e.kids[0], 4, out);
      out += " in ";
      print_rec(*e.kids[1], 4, out);
      break;
    case Expr::Kind::path:
      out += e.text;
      break;
    case Expr::Kind::str:
      out += "\"" + e.text + "\"";
      break;
    case Expr::Kind::num:
      out += print_number(e.num);
      break;
    case Expr::Kind::boolean:
      out += e.bval ? "true" : "false";
      break;
    case Expr::Kind::set_lit: {
      out += "[";
      for (std::size_t i = 0; i < e.items.size(); ++i) {
        if (i) out += ", ";
        out += "\"" + e.items[i] + "\"";
      }
      out += "]";
      break;
    }
    case Expr::Kind::builtin:
      out += e.text + "()";
      break;
  }
  if (paren) out += ")";
}

}  // namespace

PolicySet parse_policy(const std::string& text) {
  Parser p(text);
  return p.parse_set();
}

std::string print_expr(const Expr& e) {
  std::string out;
  print_rec(e, 0, out);
  return out;
}

std::string canonical_print(const PolicySet& ps) {
  std::string out;
  for (std::size_t i = 0; i < ps.rules.size(); ++i) {
    const Rule& r = ps.rules[i];
    if (i) out += "\n";
    out += "policy \"" + r.name + "\" {\n";
    out += "  when " + print_expr(*r.condition) + "\n";
    out += "  then ";
    for (std::size_t j = 0; j < r.effects.size(); ++j) {
      if (j) out += ", ";
      out += r.effects[j].to_source();
    }
    if (r.investigate_on_fail) out += " investigate_on_fail";
    out += "\n}\n";
  }
  return out;
}

}  // namespace bz
