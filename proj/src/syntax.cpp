#include "adev/syntax.hpp"

#include <charconv>
#include <cstdlib>
#include <unordered_map>
#include <utility>

namespace adev {

// --- types ---------------------------------------------------------------

namespace {
TypePtr make_type(Type::Kind k, BaseKind b = BaseKind::Real, TypePtr fst = nullptr,
                  TypePtr snd = nullptr) {
  auto t = std::make_shared<Type>();
  t->kind = k;
  t->base = b;
  t->fst = std::move(fst);
  t->snd = std::move(snd);
  return t;
}
}  // namespace

TypePtr Type::unit() { static TypePtr t = make_type(Kind::Unit); return t; }
TypePtr Type::nat() { static TypePtr t = make_type(Kind::Nat); return t; }
TypePtr Type::boolean() { static TypePtr t = make_type(Kind::Bool); return t; }
TypePtr Type::smooth(BaseKind k) { return make_type(Kind::Smooth, k); }
TypePtr Type::star(BaseKind k) { return make_type(Kind::Star, k); }
TypePtr Type::product(TypePtr a, TypePtr b) {
  return make_type(Kind::Product, BaseKind::Real, std::move(a), std::move(b));
}
TypePtr Type::arrow(TypePtr dom, TypePtr cod) {
  return make_type(Kind::Arrow, BaseKind::Real, std::move(dom), std::move(cod));
}
TypePtr Type::prob(TypePtr t) { return make_type(Kind::Prob, BaseKind::Real, std::move(t)); }
TypePtr Type::wprob(TypePtr t) { return make_type(Kind::WProb, BaseKind::Real, std::move(t)); }
TypePtr Type::dist(TypePtr t) { return make_type(Kind::Dist, BaseKind::Real, std::move(t)); }
TypePtr Type::cdf(TypePtr t) { return make_type(Kind::Cdf, BaseKind::Real, std::move(t)); }
TypePtr Type::est() { static TypePtr t = make_type(Kind::Est); return t; }
TypePtr Type::est_d() { static TypePtr t = make_type(Kind::EstD); return t; }
TypePtr Type::prob_d(TypePtr t) { return make_type(Kind::ProbD, BaseKind::Real, std::move(t)); }
TypePtr Type::seed() { static TypePtr t = make_type(Kind::SeedT); return t; }

TypePtr est_translated() {
  static TypePtr t = Type::product(
      Type::est_d(),
      Type::arrow(Type::seed(), Type::product(Type::real(), Type::real())));
  return t;
}

TypePtr unfold_probd(const TypePtr& t) {
  if (!t || t->kind != Type::Kind::ProbD) return t;
  return Type::arrow(Type::arrow(t->fst, est_translated()), est_translated());
}

bool type_equal(const TypePtr& a, const TypePtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  if (a->kind == Type::Kind::ProbD && b->kind != Type::Kind::ProbD)
    return type_equal(unfold_probd(a), b);
  if (b->kind == Type::Kind::ProbD && a->kind != Type::Kind::ProbD)
    return type_equal(a, unfold_probd(b));
  if (a->kind != b->kind) return false;
  switch (a->kind) {
    case Type::Kind::Unit:
    case Type::Kind::Nat:
    case Type::Kind::Bool:
    case Type::Kind::Est:
    case Type::Kind::EstD:
    case Type::Kind::SeedT:
      return true;
    case Type::Kind::Smooth:
    case Type::Kind::Star:
      return a->base == b->base;
    case Type::Kind::Product:
    case Type::Kind::Arrow:
      return type_equal(a->fst, b->fst) && type_equal(a->snd, b->snd);
    case Type::Kind::Prob:
    case Type::Kind::WProb:
    case Type::Kind::Dist:
    case Type::Kind::Cdf:
    case Type::Kind::ProbD:
      return type_equal(a->fst, b->fst);
  }
  return false;
}

namespace {

const char* base_name(BaseKind b) {
  switch (b) {
    case BaseKind::Real: return "R";
    case BaseKind::PosReal: return "Pos";
    case BaseKind::Interval: return "I";
  }
  return "?";
}

// Type printing levels: 0 arrow, 1 product, 2 atom.
void print_type(std::string& out, const TypePtr& t, int level) {
  if (!t) { out += "?"; return; }
  auto wrap = [&](int mine, auto&& body) {
    if (mine < level) out += "(";
    body();
    if (mine < level) out += ")";
  };
  switch (t->kind) {
    case Type::Kind::Unit: out += "Unit"; return;
    case Type::Kind::Nat: out += "N"; return;
    case Type::Kind::Bool: out += "B"; return;
    case Type::Kind::Smooth: out += base_name(t->base); return;
    case Type::Kind::Star: out += base_name(t->base); out += "*"; return;
    case Type::Kind::Est: out += "Est"; return;
    case Type::Kind::EstD: out += "EstD"; return;
    case Type::Kind::SeedT: out += "S"; return;
    case Type::Kind::Arrow:
      wrap(0, [&] {
        print_type(out, t->fst, 1);
        out += " -> ";
        print_type(out, t->snd, 0);
      });
      return;
    case Type::Kind::Product:
      wrap(1, [&] {
        print_type(out, t->fst, 1);
        out += " * ";
        print_type(out, t->snd, 2);
      });
      return;
    case Type::Kind::Prob:
      wrap(2, [&] { out += "P "; print_type(out, t->fst, 2); });
      return;
    case Type::Kind::WProb:
      wrap(2, [&] { out += "WP "; print_type(out, t->fst, 2); });
      return;
    case Type::Kind::Dist:
      wrap(2, [&] { out += "D "; print_type(out, t->fst, 2); });
      return;
    case Type::Kind::Cdf:
      wrap(2, [&] { out += "C "; print_type(out, t->fst, 2); });
      return;
    case Type::Kind::ProbD:
      wrap(2, [&] { out += "PD "; print_type(out, t->fst, 2); });
      return;
  }
}

}  // namespace

std::string pretty(const TypePtr& t) {
  std::string out;
  print_type(out, t, 0);
  return out;
}

// --- primitive names ------------------------------------------------------

const char* prim_name(Prim p) {
  switch (p) {
    case Prim::PolyAdd: case Prim::AddReal: case Prim::AddNat: return "+";
    case Prim::PolySub: case Prim::SubReal: case Prim::SubNat: return "-";
    case Prim::PolyMul: case Prim::MulReal: case Prim::MulNat: return "*";
    case Prim::PolyDiv: case Prim::DivReal: case Prim::DivNat: return "/";
    case Prim::Exp: return "exp";
    case Prim::Log: return "log";
    case Prim::Sin: return "sin";
    case Prim::Cos: return "cos";
    case Prim::Pow: return "pow";
    case Prim::NatToReal: return "nat_to_real";
    case Prim::Leq: return "leq";
    case Prim::Eq: return "eq";
    case Prim::Forget: return "forget";
    case Prim::Exact: return "exact";
    case Prim::PlusEst: return "plus_est";
    case Prim::TimesEst: return "times_est";
    case Prim::ExpEst: return "exp_est";
    case Prim::Minibatch: return "minibatch";
    case Prim::Expect: return "E";
    case Prim::FlipEnum: return "flip_enum";
    case Prim::FlipReinforce: return "flip_reinforce";
    case Prim::Sample: return "sample";
    case Prim::NormalReparam: return "normal_reparam";
    case Prim::NormalReinforce: return "normal_reinforce";
    case Prim::GeometricReinforce: return "geometric_reinforce";
    case Prim::Baseline: return "baseline";
    case Prim::Addcost: return "addcost";
    case Prim::ReinforceDensity: return "reinforce_density";
    case Prim::LeaveOneOut: return "leave_one_out";
    case Prim::Importance: return "importance";
    case Prim::ImplicitReparam: return "implicit_reparam";
    case Prim::PoissonWeak: return "poisson_weak";
    case Prim::BernoulliDist: return "bernoulli_d";
    case Prim::NormalDist: return "normal_d";
    case Prim::ExponentialDist: return "exponential_d";
    case Prim::PoissonDist: return "poisson_d";
    case Prim::NormalCdf: return "normal_c";
    case Prim::ExponentialCdf: return "exponential_c";
  }
  return "?";
}

const char* prim_name(PrimD p) {
  switch (p) {
    case PrimD::AddD: return "+_D";
    case PrimD::SubD: return "-_D";
    case PrimD::MulD: return "*_D";
    case PrimD::DivD: return "/_D";
    case PrimD::ExpD: return "exp_D";
    case PrimD::LogD: return "log_D";
    case PrimD::SinD: return "sin_D";
    case PrimD::CosD: return "cos_D";
    case PrimD::PowD: return "pow_D";
    case PrimD::NatToRealD: return "nat_to_real_D";
    case PrimD::ForgetD: return "forget_D";
    case PrimD::ExactD: return "exact_D";
    case PrimD::PlusEstD: return "plus_est_D";
    case PrimD::TimesEstD: return "times_est_D";
    case PrimD::ExpEstD: return "exp_est_D";
    case PrimD::MinibatchD: return "minibatch_D";
    case PrimD::ExpectD: return "E_D";
    case PrimD::FlipEnumD: return "flip_enum_D";
    case PrimD::FlipReinforceD: return "flip_reinforce_D";
    case PrimD::SampleD: return "sample_D";
    case PrimD::NormalReparamD: return "normal_reparam_D";
    case PrimD::NormalReinforceD: return "normal_reinforce_D";
    case PrimD::GeometricReinforceD: return "geometric_reinforce_D";
    case PrimD::BaselineD: return "baseline_D";
    case PrimD::AddcostD: return "addcost_D";
    case PrimD::ReinforceDensityD: return "reinforce_density_D";
    case PrimD::LeaveOneOutD: return "leave_one_out_D";
    case PrimD::ImportanceD: return "importance_D";
    case PrimD::ImplicitReparamD: return "implicit_reparam_D";
    case PrimD::PoissonWeakD: return "poisson_weak_D";
    case PrimD::BernoulliDistD: return "bernoulli_d_D";
    case PrimD::NormalDistD: return "normal_d_D";
    case PrimD::ExponentialDistD: return "exponential_d_D";
    case PrimD::PoissonDistD: return "poisson_d_D";
    case PrimD::NormalCdfD: return "normal_c_D";
    case PrimD::ExponentialCdfD: return "exponential_c_D";
    case PrimD::FstStar: return "fst_*";
    case PrimD::SndStar: return "snd_*";
  }
  return "?";
}

// --- term constructors -----------------------------------------------------

namespace {
std::shared_ptr<Term> make_term(Term::Kind k, Span s) {
  auto t = std::make_shared<Term>();
  t->kind = k;
  t->span = s;
  return t;
}
}  // namespace

TermPtr Term::unit(Span s) { return make_term(Kind::Unit, s); }

TermPtr Term::num_lit(double v, std::optional<TypePtr> ann, Span s) {
  auto t = make_term(Kind::NumLit, s);
  t->num = v;
  t->lit_ann = std::move(ann);
  return t;
}

TermPtr Term::nat_lit(std::uint64_t v, Span s) {
  auto t = make_term(Kind::NatLit, s);
  t->nat = v;
  return t;
}

TermPtr Term::bool_lit(bool v, Span s) {
  auto t = make_term(Kind::BoolLit, s);
  t->truth = v;
  return t;
}

TermPtr Term::var(std::string name, Span s) {
  auto t = make_term(Kind::Var, s);
  t->name = std::move(name);
  return t;
}

TermPtr Term::prim_ref(Prim p, Span s) {
  auto t = make_term(Kind::PrimRef, s);
  t->prim = p;
  return t;
}

TermPtr Term::prim_d_ref(PrimD p, Span s) {
  auto t = make_term(Kind::PrimDRef, s);
  t->prim_d = p;
  return t;
}

TermPtr Term::lambda(std::string name, TypePtr ann, TermPtr body, Span s) {
  auto t = make_term(Kind::Lambda, s);
  t->name = std::move(name);
  t->ann = std::move(ann);
  t->a = std::move(body);
  return t;
}

TermPtr Term::app(TermPtr f, TermPtr x, Span s) {
  auto t = make_term(Kind::App, s);
  t->a = std::move(f);
  t->b = std::move(x);
  return t;
}

TermPtr Term::let(std::string name, TermPtr bound, TermPtr body, Span s) {
  auto t = make_term(Kind::Let, s);
  t->name = std::move(name);
  t->a = std::move(bound);
  t->b = std::move(body);
  return t;
}

TermPtr Term::if_(TermPtr cond, TermPtr then_t, TermPtr else_t, Span s) {
  auto t = make_term(Kind::If, s);
  t->a = std::move(cond);
  t->b = std::move(then_t);
  t->c = std::move(else_t);
  return t;
}

TermPtr Term::pair(TermPtr a, TermPtr b, Span s) {
  auto t = make_term(Kind::Pair, s);
  t->a = std::move(a);
  t->b = std::move(b);
  return t;
}

TermPtr Term::fst(TermPtr p, Span s) {
  auto t = make_term(Kind::Fst, s);
  t->a = std::move(p);
  return t;
}

TermPtr Term::snd(TermPtr p, Span s) {
  auto t = make_term(Kind::Snd, s);
  t->a = std::move(p);
  return t;
}

TermPtr Term::ret(TermPtr v, Span s) {
  auto t = make_term(Kind::Return, s);
  t->a = std::move(v);
  return t;
}

TermPtr Term::do_block(std::vector<DoItem> items, TermPtr tail, Span s) {
  auto t = make_term(Kind::Do, s);
  t->items = std::move(items);
  t->tail = std::move(tail);
  return t;
}

TermPtr Term::ret_d(TermPtr v, Span s) {
  auto t = make_term(Kind::ReturnD, s);
  t->a = std::move(v);
  return t;
}

TermPtr Term::do_d(std::vector<DoItem> items, TermPtr tail, Span s) {
  auto t = make_term(Kind::DoD, s);
  t->items = std::move(items);
  t->tail = std::move(tail);
  return t;
}

TermPtr Term::dual_lit(TermPtr primal, TermPtr tangent, Span s) {
  auto t = make_term(Kind::DualLit, s);
  t->a = std::move(primal);
  t->b = std::move(tangent);
  return t;
}

TermPtr Term::apply2(TermPtr f, TermPtr x, TermPtr y, Span s) {
  return app(app(std::move(f), std::move(x), s), std::move(y), s);
}

// --- lexer ------------------------------------------------------------------

namespace {

enum class Tok {
  Ident, Number,
  KwDo, KwLet, KwIn, KwIf, KwThen, KwElse, KwReturn, KwTrue, KwFalse,
  KwFst, KwSnd,
  Backslash, Dot, Colon, Semi, Comma,
  LParen, RParen, LBrace, RBrace,
  Plus, Minus, Star, Slash,
  Le, EqEq, Assign, ArrowR, BindL,
  Eof,
};

struct Token {
  Tok kind = Tok::Eof;
  std::string text;
  double num = 0;
  bool is_int = false;
  Span span;
  bool glued = false;  // no whitespace between this token and the previous one
};

const std::unordered_map<std::string_view, Tok> kKeywords = {
    {"do", Tok::KwDo},     {"let", Tok::KwLet},   {"in", Tok::KwIn},
    {"if", Tok::KwIf},     {"then", Tok::KwThen}, {"else", Tok::KwElse},
    {"return", Tok::KwReturn}, {"true", Tok::KwTrue}, {"false", Tok::KwFalse},
    {"fst", Tok::KwFst},   {"snd", Tok::KwSnd},
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) { advance(); }

  const Token& peek() const { return cur_; }
  Token next() {
    Token t = cur_;
    advance();
    return t;
  }

 private:
  void advance() {
    bool saw_space = skip_trivia();
    Token t;
    t.glued = !saw_space && pos_ > 0;
    t.span = {line_, col_, line_, col_};
    if (pos_ >= src_.size()) {
      t.kind = Tok::Eof;
      cur_ = t;
      return;
    }
    char c = src_[pos_];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
              src_[pos_] == '_' || src_[pos_] == '\'')) {
        bump();
      }
      t.text = std::string(src_.substr(start, pos_ - start));
      auto kw = kKeywords.find(t.text);
      t.kind = kw == kKeywords.end() ? Tok::Ident : kw->second;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      size_t start = pos_;
      bool is_int = true;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) bump();
      if (pos_ + 1 < src_.size() && src_[pos_] == '.' &&
          std::isdigit(static_cast<unsigned char>(src_[pos_ + 1]))) {
        is_int = false;
        bump();
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) bump();
      }
      if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
        size_t mark = pos_;
        bump();
        if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) bump();
        if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
          is_int = false;
          while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) bump();
        } else {
          pos_ = mark;  // not an exponent, leave 'e' for the next token
          col_ -= static_cast<int>(pos_ - mark);
        }
      }
      t.kind = Tok::Number;
      t.text = std::string(src_.substr(start, pos_ - start));
      t.num = std::strtod(t.text.c_str(), nullptr);
      t.is_int = is_int;
    } else {
      auto two = [&](char a, char b) {
        return c == a && pos_ + 1 < src_.size() && src_[pos_ + 1] == b;
      };
      if (two('<', '=')) { t.kind = Tok::Le; bump(); bump(); }
      else if (two('<', '-')) { t.kind = Tok::BindL; bump(); bump(); }
      else if (two('=', '=')) { t.kind = Tok::EqEq; bump(); bump(); }
      else if (two('-', '>')) { t.kind = Tok::ArrowR; bump(); bump(); }
      else {
        switch (c) {
          case '\\': t.kind = Tok::Backslash; break;
          case '.': t.kind = Tok::Dot; break;
          case ':': t.kind = Tok::Colon; break;
          case ';': t.kind = Tok::Semi; break;
          case ',': t.kind = Tok::Comma; break;
          case '(': t.kind = Tok::LParen; break;
          case ')': t.kind = Tok::RParen; break;
          case '{': t.kind = Tok::LBrace; break;
          case '}': t.kind = Tok::RBrace; break;
          case '+': t.kind = Tok::Plus; break;
          case '-': t.kind = Tok::Minus; break;
          case '*': t.kind = Tok::Star; break;
          case '/': t.kind = Tok::Slash; break;
          case '=': t.kind = Tok::Assign; break;
          default:
            throw ParseError(std::string("unexpected character '") + c + "'",
                             {line_, col_, line_, col_ + 1});
        }
        bump();
      }
    }
    t.span.end_line = line_;
    t.span.end_col = col_;
    cur_ = t;
  }

  // Returns true if any whitespace or comment separated the tokens.
  bool skip_trivia() {
    bool saw = false;
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == ' ' || c == '\t' || c == '\r') {
        saw = true;
        bump();
      } else if (c == '\n') {
        saw = true;
        pos_++;
        line_++;
        col_ = 1;
      } else if (c == '-' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '-') {
        saw = true;
        while (pos_ < src_.size() && src_[pos_] != '\n') bump();
      } else {
        break;
      }
    }
    return saw;
  }

  void bump() {
    pos_++;
    col_++;
  }

  std::string_view src_;
  size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
  Token cur_;
};

// --- parser -----------------------------------------------------------------

const std::unordered_map<std::string_view, Prim> kPrimTable = {
    {"exp", Prim::Exp}, {"log", Prim::Log}, {"sin", Prim::Sin}, {"cos", Prim::Cos},
    {"pow", Prim::Pow}, {"nat_to_real", Prim::NatToReal},
    {"leq", Prim::Leq}, {"eq", Prim::Eq}, {"forget", Prim::Forget},
    {"exact", Prim::Exact}, {"plus_est", Prim::PlusEst}, {"times_est", Prim::TimesEst},
    {"exp_est", Prim::ExpEst}, {"minibatch", Prim::Minibatch}, {"E", Prim::Expect},
    {"flip_enum", Prim::FlipEnum}, {"flip_reinforce", Prim::FlipReinforce},
    {"sample", Prim::Sample},
    {"normal_reparam", Prim::NormalReparam},
    {"normal_reinforce", Prim::NormalReinforce},
    {"geometric_reinforce", Prim::GeometricReinforce},
    {"baseline", Prim::Baseline}, {"addcost", Prim::Addcost},
    {"reinforce_density", Prim::ReinforceDensity},
    {"leave_one_out", Prim::LeaveOneOut}, {"importance", Prim::Importance},
    {"implicit_reparam", Prim::ImplicitReparam}, {"poisson_weak", Prim::PoissonWeak},
    {"bernoulli_d", Prim::BernoulliDist}, {"normal_d", Prim::NormalDist},
    {"exponential_d", Prim::ExponentialDist}, {"poisson_d", Prim::PoissonDist},
    {"normal_c", Prim::NormalCdf}, {"exponential_c", Prim::ExponentialCdf},
};

class Parser {
 public:
  explicit Parser(std::string_view src) : lex_(src) {}

  TermPtr parse_top() {
    TermPtr t = parse_term();
    expect(Tok::Eof, "expected end of input after the top-level term");
    return t;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) { throw ParseError(msg, lex_.peek().span); }

  Token expect(Tok k, const std::string& msg) {
    if (lex_.peek().kind != k) fail(msg);
    return lex_.next();
  }

  bool accept(Tok k) {
    if (lex_.peek().kind != k) return false;
    lex_.next();
    return true;
  }

  bool bound(const std::string& name) const {
    for (auto it = scope_.rbegin(); it != scope_.rend(); ++it)
      if (*it == name) return true;
    return false;
  }

  TermPtr parse_term() {
    const Token& t = lex_.peek();
    switch (t.kind) {
      case Tok::Backslash: {
        Span s = lex_.next().span;
        Token name = expect(Tok::Ident, "expected a binder name after '\\'");
        expect(Tok::Colon, "expected ':' and a type after the binder");
        TypePtr ty = parse_type();
        expect(Tok::Dot, "expected '.' after the binder type");
        scope_.push_back(name.text);
        TermPtr body = parse_term();
        scope_.pop_back();
        return Term::lambda(name.text, ty, body, s);
      }
      case Tok::KwLet: {
        Span s = lex_.next().span;
        Token name = expect(Tok::Ident, "expected a name after 'let'");
        expect(Tok::Assign, "expected '=' in let binding");
        TermPtr bound_t = parse_term();
        expect(Tok::KwIn, "expected 'in' after the let-bound term");
        scope_.push_back(name.text);
        TermPtr body = parse_term();
        scope_.pop_back();
        return Term::let(name.text, bound_t, body, s);
      }
      case Tok::KwIf: {
        Span s = lex_.next().span;
        TermPtr c = parse_term();
        expect(Tok::KwThen, "expected 'then'");
        TermPtr a = parse_term();
        expect(Tok::KwElse, "expected 'else'");
        TermPtr b = parse_term();
        return Term::if_(c, a, b, s);
      }
      default:
        return parse_cmp();
    }
  }

  TermPtr parse_cmp() {
    TermPtr a = parse_add();
    Tok k = lex_.peek().kind;
    if (k == Tok::Le || k == Tok::EqEq) {
      Span s = lex_.next().span;
      TermPtr b = parse_add();
      return Term::apply2(Term::prim_ref(k == Tok::Le ? Prim::Leq : Prim::Eq, s), a, b, s);
    }
    return a;
  }

  TermPtr parse_add() {
    TermPtr t = parse_mul();
    for (;;) {
      Tok k = lex_.peek().kind;
      if (k != Tok::Plus && k != Tok::Minus) return t;
      Span s = lex_.next().span;
      TermPtr rhs = parse_mul();
      t = Term::apply2(
          Term::prim_ref(k == Tok::Plus ? Prim::PolyAdd : Prim::PolySub, s), t, rhs, s);
    }
  }

  TermPtr parse_mul() {
    TermPtr t = parse_unary();
    for (;;) {
      Tok k = lex_.peek().kind;
      if (k != Tok::Star && k != Tok::Slash) return t;
      Span s = lex_.next().span;
      TermPtr rhs = parse_unary();
      t = Term::apply2(
          Term::prim_ref(k == Tok::Star ? Prim::PolyMul : Prim::PolyDiv, s), t, rhs, s);
    }
  }

  TermPtr parse_unary() {
    if (lex_.peek().kind == Tok::Minus) {
      Span s = lex_.next().span;
      TermPtr e = parse_unary();
      return Term::apply2(Term::prim_ref(Prim::PolySub, s), Term::num_lit(0, {}, s), e, s);
    }
    return parse_app();
  }

  TermPtr parse_app() {
    TermPtr head = parse_prefix_atom();
    while (at_atom_start()) head = Term::app(head, parse_atom(), head->span);
    return head;
  }

  TermPtr parse_prefix_atom() {
    switch (lex_.peek().kind) {
      case Tok::KwReturn: {
        Span s = lex_.next().span;
        return Term::ret(parse_atom(), s);
      }
      case Tok::KwFst: {
        Span s = lex_.next().span;
        return Term::fst(parse_atom(), s);
      }
      case Tok::KwSnd: {
        Span s = lex_.next().span;
        return Term::snd(parse_atom(), s);
      }
      default:
        return parse_atom();
    }
  }

  bool at_atom_start() const {
    switch (lex_.peek().kind) {
      case Tok::Ident:
      case Tok::Number:
      case Tok::KwTrue:
      case Tok::KwFalse:
      case Tok::LParen:
      case Tok::KwDo:
        return true;
      default:
        return false;
    }
  }

  TermPtr parse_atom() {
    const Token t = lex_.next();
    switch (t.kind) {
      case Tok::Number: {
        std::optional<TypePtr> ann;
        if (accept(Tok::Colon)) {
          TypePtr ty = parse_type_atom();
          if (!ty->is_smooth() && !ty->is_star())
            throw ParseError("literal annotations must be scalar base types", t.span);
          ann = ty;
        }
        return Term::num_lit(t.num, ann, t.span);
      }
      case Tok::KwTrue: return Term::bool_lit(true, t.span);
      case Tok::KwFalse: return Term::bool_lit(false, t.span);
      case Tok::Ident: {
        if (!bound(t.text)) {
          auto p = kPrimTable.find(t.text);
          if (p != kPrimTable.end()) return Term::prim_ref(p->second, t.span);
        }
        return Term::var(t.text, t.span);
      }
      case Tok::LParen: {
        if (accept(Tok::RParen)) return Term::unit(t.span);
        TermPtr a = parse_term();
        if (accept(Tok::Comma)) {
          TermPtr b = parse_term();
          expect(Tok::RParen, "expected ')' after pair");
          return Term::pair(a, b, t.span);
        }
        expect(Tok::RParen, "expected ')'");
        return a;
      }
      case Tok::KwDo: return parse_do(t.span);
      default:
        throw ParseError("expected a term", t.span);
    }
  }

  TermPtr parse_do(Span s) {
    expect(Tok::LBrace, "expected '{' after 'do'");
    std::vector<Term::DoItem> items;
    size_t pushed = 0;
    TermPtr tail;
    for (;;) {
      if (lex_.peek().kind == Tok::KwLet) {
        Span is = lex_.next().span;
        Token name = expect(Tok::Ident, "expected a name after 'let'");
        expect(Tok::Assign, "expected '=' in do-let");
        TermPtr v = parse_term();
        expect(Tok::Semi, "expected ';' after do-let");
        items.push_back({Term::DoItem::Kind::Let, name.text, v, is});
        scope_.push_back(name.text);
        pushed++;
        continue;
      }
      if (lex_.peek().kind == Tok::Ident) {
        // Two-token lookahead for `x <- e`.
        Lexer save = lex_;
        Token name = lex_.next();
        if (lex_.peek().kind == Tok::BindL) {
          Span is = lex_.next().span;
          TermPtr v = parse_term();
          expect(Tok::Semi, "expected ';' after bind");
          items.push_back({Term::DoItem::Kind::Bind, name.text, v, is});
          scope_.push_back(name.text);
          pushed++;
          continue;
        }
        lex_ = save;
      }
      TermPtr e = parse_term();
      if (accept(Tok::Semi)) {
        items.push_back({Term::DoItem::Kind::Stmt, "", e, e->span});
        continue;
      }
      tail = e;
      break;
    }
    expect(Tok::RBrace, "expected '}' closing the do-block");
    scope_.resize(scope_.size() - pushed);
    return Term::do_block(std::move(items), tail, s);
  }

  // --- types ---

  TypePtr parse_type() {
    TypePtr t = parse_type_prod();
    if (accept(Tok::ArrowR)) return Type::arrow(t, parse_type());
    return t;
  }

  TypePtr parse_type_prod() {
    TypePtr t = parse_type_atom();
    while (lex_.peek().kind == Tok::Star) {
      lex_.next();
      t = Type::product(t, parse_type_atom());
    }
    return t;
  }

  TypePtr parse_type_atom() {
    const Token t = lex_.next();
    if (t.kind == Tok::LParen) {
      TypePtr inner = parse_type();
      expect(Tok::RParen, "expected ')' in type");
      return inner;
    }
    if (t.kind != Tok::Ident) throw ParseError("expected a type", t.span);
    auto starred = [&](BaseKind b) -> TypePtr {
      // A '*' directly attached to a base name is the non-smooth marker;
      // with intervening space it is the product constructor.
      if (lex_.peek().kind == Tok::Star && lex_.peek().glued) {
        lex_.next();
        return Type::star(b);
      }
      return Type::smooth(b);
    };
    if (t.text == "R") return starred(BaseKind::Real);
    if (t.text == "Pos") return starred(BaseKind::PosReal);
    if (t.text == "I") return starred(BaseKind::Interval);
    if (t.text == "N") return Type::nat();
    if (t.text == "B") return Type::boolean();
    if (t.text == "Unit") return Type::unit();
    if (t.text == "Est") return Type::est();
    if (t.text == "EstD") return Type::est_d();
    if (t.text == "S") return Type::seed();
    if (t.text == "P") return Type::prob(parse_type_atom());
    if (t.text == "PD") return Type::prob_d(parse_type_atom());
    if (t.text == "WP") return Type::wprob(parse_type_atom());
    if (t.text == "D") return Type::dist(parse_type_atom());
    if (t.text == "C") return Type::cdf(parse_type_atom());
    throw ParseError("unknown type name '" + t.text + "'", t.span);
  }

  Lexer lex_;
  std::vector<std::string> scope_;
};

}  // namespace

Program parse_program(std::string_view source, std::string name) {
  Parser p(source);
  return Program{std::move(name), p.parse_top()};
}

// --- desugar ----------------------------------------------------------------

TermPtr desugar(const TermPtr& t) {
  if (!t) return t;
  switch (t->kind) {
    case Term::Kind::Unit:
    case Term::Kind::NumLit:
    case Term::Kind::NatLit:
    case Term::Kind::BoolLit:
    case Term::Kind::Var:
    case Term::Kind::PrimRef:
    case Term::Kind::PrimDRef:
      return t;
    case Term::Kind::Lambda:
      return Term::lambda(t->name, t->ann, desugar(t->a), t->span);
    case Term::Kind::App:
      return Term::app(desugar(t->a), desugar(t->b), t->span);
    case Term::Kind::Let:
      return Term::let(t->name, desugar(t->a), desugar(t->b), t->span);
    case Term::Kind::If:
      return Term::if_(desugar(t->a), desugar(t->b), desugar(t->c), t->span);
    case Term::Kind::Pair:
      return Term::pair(desugar(t->a), desugar(t->b), t->span);
    case Term::Kind::Fst:
      return Term::fst(desugar(t->a), t->span);
    case Term::Kind::Snd:
      return Term::snd(desugar(t->a), t->span);
    case Term::Kind::Return:
      return Term::ret(desugar(t->a), t->span);
    case Term::Kind::ReturnD:
      return Term::ret_d(desugar(t->a), t->span);
    case Term::Kind::DualLit:
      return Term::dual_lit(desugar(t->a), desugar(t->b), t->span);
    case Term::Kind::Do:
    case Term::Kind::DoD: {
      std::vector<Term::DoItem> items;
      items.reserve(t->items.size());
      for (const auto& it : t->items) {
        TermPtr v = desugar(it.value);
        switch (it.kind) {
          case Term::DoItem::Kind::Bind:
            items.push_back({Term::DoItem::Kind::Bind, it.name, v, it.span});
            break;
          case Term::DoItem::Kind::Let:
            items.push_back({Term::DoItem::Kind::Bind, it.name,
                             Term::ret(v, it.span), it.span});
            break;
          case Term::DoItem::Kind::Stmt:
            items.push_back({Term::DoItem::Kind::Bind, "_", v, it.span});
            break;
        }
      }
      TermPtr tail = desugar(t->tail);
      return t->kind == Term::Kind::Do ? Term::do_block(std::move(items), tail, t->span)
                                       : Term::do_d(std::move(items), tail, t->span);
    }
  }
  return t;
}

Program desugar(const Program& p) { return Program{p.name, desugar(p.term)}; }

// --- pretty printer -----------------------------------------------------------

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// Printing levels: 0 term, 1 cmp, 2 add, 3 mul, 4 unary, 5 app, 6 atom.
constexpr int kTerm = 0, kCmp = 1, kAdd = 2, kMul = 3, kUnary = 4, kApp = 5, kAtom = 6;

struct InfixInfo {
  const char* op;
  int level;
};

std::optional<InfixInfo> infix_of(const TermPtr& t) {
  if (t->kind == Term::Kind::PrimRef) {
    switch (t->prim) {
      case Prim::PolyAdd: case Prim::AddReal: case Prim::AddNat: return InfixInfo{"+", kAdd};
      case Prim::PolySub: case Prim::SubReal: case Prim::SubNat: return InfixInfo{"-", kAdd};
      case Prim::PolyMul: case Prim::MulReal: case Prim::MulNat: return InfixInfo{"*", kMul};
      case Prim::PolyDiv: case Prim::DivReal: case Prim::DivNat: return InfixInfo{"/", kMul};
      case Prim::Leq: return InfixInfo{"<=", kCmp};
      case Prim::Eq: return InfixInfo{"==", kCmp};
      default: return std::nullopt;
    }
  }
  if (t->kind == Term::Kind::PrimDRef) {
    switch (t->prim_d) {
      case PrimD::AddD: return InfixInfo{"+_D", kAdd};
      case PrimD::SubD: return InfixInfo{"-_D", kAdd};
      case PrimD::MulD: return InfixInfo{"*_D", kMul};
      case PrimD::DivD: return InfixInfo{"/_D", kMul};
      default: return std::nullopt;
    }
  }
  return std::nullopt;
}

void print_term(std::string& out, const TermPtr& t, int level);

void print_do(std::string& out, const TermPtr& t) {
  out += t->kind == Term::Kind::Do ? "do { " : "do_D { ";
  for (const auto& it : t->items) {
    switch (it.kind) {
      case Term::DoItem::Kind::Bind:
        out += it.name;
        out += " <- ";
        print_term(out, it.value, kTerm);
        break;
      case Term::DoItem::Kind::Let:
        out += "let ";
        out += it.name;
        out += " = ";
        print_term(out, it.value, kTerm);
        break;
      case Term::DoItem::Kind::Stmt:
        print_term(out, it.value, kTerm);
        break;
    }
    out += "; ";
  }
  print_term(out, t->tail, kTerm);
  out += " }";
}

void print_term(std::string& out, const TermPtr& t, int level) {
  if (!t) {
    out += "?";
    return;
  }
  auto wrap = [&](int mine, auto&& body) {
    if (mine < level) out += "(";
    body();
    if (mine < level) out += ")";
  };
  switch (t->kind) {
    case Term::Kind::Unit: out += "()"; return;
    case Term::Kind::NumLit:
      if (t->lit_ann) {
        wrap(kAtom, [&] {
          // The annotation binds to the literal; no parens needed even in
          // operator context because the parser attaches it greedily.
          out += format_double(t->num);
          out += " : ";
          out += pretty(*t->lit_ann);
        });
      } else {
        out += format_double(t->num);
      }
      return;
    case Term::Kind::NatLit: out += std::to_string(t->nat); return;
    case Term::Kind::BoolLit: out += t->truth ? "true" : "false"; return;
    case Term::Kind::Var: out += t->name; return;
    case Term::Kind::PrimRef: {
      if (infix_of(t)) {
        out += "(";
        out += prim_name(t->prim);
        out += ")";
      } else {
        out += prim_name(t->prim);
      }
      return;
    }
    case Term::Kind::PrimDRef: {
      if (infix_of(t)) {
        out += "(";
        out += prim_name(t->prim_d);
        out += ")";
      } else {
        out += prim_name(t->prim_d);
      }
      return;
    }
    case Term::Kind::Lambda:
      wrap(kTerm, [&] {
        out += "\\";
        out += t->name;
        out += " : ";
        out += pretty(t->ann);
        out += ". ";
        print_term(out, t->a, kTerm);
      });
      return;
    case Term::Kind::Let:
      wrap(kTerm, [&] {
        out += "let ";
        out += t->name;
        out += " = ";
        print_term(out, t->a, kTerm);
        out += " in ";
        print_term(out, t->b, kTerm);
      });
      return;
    case Term::Kind::If:
      wrap(kTerm, [&] {
        out += "if ";
        print_term(out, t->a, kTerm);
        out += " then ";
        print_term(out, t->b, kTerm);
        out += " else ";
        print_term(out, t->c, kTerm);
      });
      return;
    case Term::Kind::Pair:
    case Term::Kind::DualLit:
      out += "(";
      print_term(out, t->a, kTerm);
      out += ", ";
      print_term(out, t->b, kTerm);
      out += ")";
      return;
    case Term::Kind::Fst:
      wrap(kApp, [&] {
        out += "fst ";
        print_term(out, t->a, kAtom);
      });
      return;
    case Term::Kind::Snd:
      wrap(kApp, [&] {
        out += "snd ";
        print_term(out, t->a, kAtom);
      });
      return;
    case Term::Kind::Return:
      wrap(kApp, [&] {
        out += "return ";
        print_term(out, t->a, kAtom);
      });
      return;
    case Term::Kind::ReturnD:
      wrap(kApp, [&] {
        out += "return_D ";
        print_term(out, t->a, kAtom);
      });
      return;
    case Term::Kind::Do:
    case Term::Kind::DoD:
      wrap(kTerm, [&] { print_do(out, t); });
      return;
    case Term::Kind::App: {
      // Saturated infix primitive applications print as operators. Dual
      // operators keep parens around operand chains; source comparisons do
      // not associate, so nested comparisons keep parens on both sides.
      if (t->a && t->a->kind == Term::Kind::App) {
        if (auto info = infix_of(t->a->a)) {
          const TermPtr& lhs = t->a->b;
          const TermPtr& rhs = t->b;
          bool dual_op = t->a->a->kind == Term::Kind::PrimDRef;
          int lhs_level = dual_op ? kUnary
                          : info->level == kCmp ? kCmp + 1
                                                : info->level;
          int rhs_level = dual_op ? kUnary : info->level + 1;
          wrap(info->level, [&] {
            print_term(out, lhs, lhs_level);
            out += " ";
            out += info->op;
            out += " ";
            print_term(out, rhs, rhs_level);
          });
          return;
        }
      }
      wrap(kApp, [&] {
        print_term(out, t->a, kApp);
        out += " ";
        print_term(out, t->b, kAtom);
      });
      return;
    }
  }
}

}  // namespace

std::string pretty(const TermPtr& t) {
  std::string out;
  print_term(out, t, kTerm);
  return out;
}

// --- alpha equality -----------------------------------------------------------

namespace {

struct AlphaCtx {
  std::vector<std::string> left, right;

  // Returns matching de Bruijn indices, or -1 for free occurrences.
  int index_left(const std::string& n) const { return index_in(left, n); }
  int index_right(const std::string& n) const { return index_in(right, n); }

  static int index_in(const std::vector<std::string>& v, const std::string& n) {
    for (int i = static_cast<int>(v.size()) - 1; i >= 0; --i)
      if (v[static_cast<size_t>(i)] == n) return static_cast<int>(v.size()) - 1 - i;
    return -1;
  }
};

bool alpha_eq(const TermPtr& a, const TermPtr& b, AlphaCtx& ctx) {
  if (!a || !b) return a == b;
  if (a->kind != b->kind) return false;
  switch (a->kind) {
    case Term::Kind::Unit: return true;
    case Term::Kind::NumLit: {
      if (a->num != b->num) return false;
      if (a->lit_ann.has_value() != b->lit_ann.has_value()) return false;
      return !a->lit_ann || type_equal(*a->lit_ann, *b->lit_ann);
    }
    case Term::Kind::NatLit: return a->nat == b->nat;
    case Term::Kind::BoolLit: return a->truth == b->truth;
    case Term::Kind::Var: {
      int ia = ctx.index_left(a->name);
      int ib = ctx.index_right(b->name);
      if (ia != ib) return false;
      return ia >= 0 || a->name == b->name;
    }
    case Term::Kind::PrimRef: return a->prim == b->prim;
    case Term::Kind::PrimDRef: return a->prim_d == b->prim_d;
    case Term::Kind::Lambda: {
      if (!type_equal(a->ann, b->ann)) return false;
      ctx.left.push_back(a->name);
      ctx.right.push_back(b->name);
      bool ok = alpha_eq(a->a, b->a, ctx);
      ctx.left.pop_back();
      ctx.right.pop_back();
      return ok;
    }
    case Term::Kind::Let: {
      if (!alpha_eq(a->a, b->a, ctx)) return false;
      ctx.left.push_back(a->name);
      ctx.right.push_back(b->name);
      bool ok = alpha_eq(a->b, b->b, ctx);
      ctx.left.pop_back();
      ctx.right.pop_back();
      return ok;
    }
    case Term::Kind::App:
    case Term::Kind::Pair:
    case Term::Kind::DualLit:
      return alpha_eq(a->a, b->a, ctx) && alpha_eq(a->b, b->b, ctx);
    case Term::Kind::If:
      return alpha_eq(a->a, b->a, ctx) && alpha_eq(a->b, b->b, ctx) &&
             alpha_eq(a->c, b->c, ctx);
    case Term::Kind::Fst:
    case Term::Kind::Snd:
    case Term::Kind::Return:
    case Term::Kind::ReturnD:
      return alpha_eq(a->a, b->a, ctx);
    case Term::Kind::Do:
    case Term::Kind::DoD: {
      if (a->items.size() != b->items.size()) return false;
      size_t pushed = 0;
      bool ok = true;
      for (size_t i = 0; ok && i < a->items.size(); ++i) {
        const auto& ia = a->items[i];
        const auto& ib = b->items[i];
        if (ia.kind != ib.kind) { ok = false; break; }
        ok = alpha_eq(ia.value, ib.value, ctx);
        if (ia.kind != Term::DoItem::Kind::Stmt) {
          ctx.left.push_back(ia.name);
          ctx.right.push_back(ib.name);
          pushed++;
        }
      }
      ok = ok && alpha_eq(a->tail, b->tail, ctx);
      ctx.left.resize(ctx.left.size() - pushed);
      ctx.right.resize(ctx.right.size() - pushed);
      return ok;
    }
  }
  return false;
}

}  // namespace

bool alpha_equal(const TermPtr& a, const TermPtr& b) {
  AlphaCtx ctx;
  return alpha_eq(a, b, ctx);
}

}  // namespace adev
