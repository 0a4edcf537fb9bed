#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace adev {

// 1-based source positions; end_col points one past the last character.
struct Span {
  int line = 0;
  int col = 0;
  int end_line = 0;
  int end_col = 0;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, Span where)
      : std::runtime_error(where.line > 0
                               ? msg + " (line " + std::to_string(where.line) +
                                     ", column " + std::to_string(where.col) + ")"
                               : msg),
        span_(where) {}
  const Span& where() const { return span_; }

 private:
  Span span_;
};

// The smooth scalar bases K. Their non-smooth views K* share the tag.
enum class BaseKind { Real, PosReal, Interval };

class Type;
using TypePtr = std::shared_ptr<const Type>;

class Type {
 public:
  enum class Kind {
    Unit,
    Nat,
    Bool,
    Smooth,   // K
    Star,     // K*
    Product,
    Arrow,
    Prob,     // P tau
    WProb,    // WP tau, probabilistic computation with accumulated cost
    Dist,     // D tau, measure paired with a density
    Cdf,      // C tau, measure paired with a parametric CDF
    Est,      // estimator of a real expectation
    // Target-language types produced by the translation.
    EstD,     // dual-valued estimator
    ProbD,    // translated P
    SeedT,
  };

  Kind kind;
  BaseKind base = BaseKind::Real;  // Smooth / Star only
  TypePtr fst;                     // Product left, Arrow domain, connective payload
  TypePtr snd;                     // Product right, Arrow codomain

  static TypePtr unit();
  static TypePtr nat();
  static TypePtr boolean();
  static TypePtr smooth(BaseKind k);
  static TypePtr real() { return smooth(BaseKind::Real); }
  static TypePtr pos_real() { return smooth(BaseKind::PosReal); }
  static TypePtr interval() { return smooth(BaseKind::Interval); }
  static TypePtr star(BaseKind k);
  static TypePtr product(TypePtr a, TypePtr b);
  static TypePtr arrow(TypePtr dom, TypePtr cod);
  static TypePtr prob(TypePtr t);
  static TypePtr wprob(TypePtr t);
  static TypePtr dist(TypePtr t);
  static TypePtr cdf(TypePtr t);
  static TypePtr est();
  static TypePtr est_d();
  static TypePtr prob_d(TypePtr t);
  static TypePtr seed();

  bool is_smooth() const { return kind == Kind::Smooth; }
  bool is_star() const { return kind == Kind::Star; }
};

// Translated estimator type: EstD * (S -> R * R).
TypePtr est_translated();
// ProbD tau is definitionally (tau -> est_translated()) -> est_translated().
TypePtr unfold_probd(const TypePtr& t);
// Structural equality modulo ProbD unfolding.
bool type_equal(const TypePtr& a, const TypePtr& b);
std::string pretty(const TypePtr& t);

// Source primitives. Poly* arithmetic comes out of the parser and is resolved
// to the Real or Nat instance during checking.
enum class Prim {
  PolyAdd, PolySub, PolyMul, PolyDiv,
  AddReal, SubReal, MulReal, DivReal,
  AddNat, SubNat, MulNat, DivNat,
  Exp, Log, Sin, Cos, Pow, NatToReal,
  Leq, Eq,
  Forget,
  Exact, PlusEst, TimesEst, ExpEst, Minibatch, Expect,
  FlipEnum, FlipReinforce, Sample,
  NormalReparam, NormalReinforce, GeometricReinforce,
  Baseline, Addcost, ReinforceDensity, LeaveOneOut, Importance,
  ImplicitReparam, PoissonWeak,
  BernoulliDist, NormalDist, ExponentialDist, PoissonDist,
  NormalCdf, ExponentialCdf,
};

// Target-language primitives: the derivative counterparts plus the estimator
// projections that the derivative wrapper uses.
enum class PrimD {
  AddD, SubD, MulD, DivD,
  ExpD, LogD, SinD, CosD, PowD, NatToRealD,
  ForgetD,
  ExactD, PlusEstD, TimesEstD, ExpEstD, MinibatchD, ExpectD,
  FlipEnumD, FlipReinforceD, SampleD,
  NormalReparamD, NormalReinforceD, GeometricReinforceD,
  BaselineD, AddcostD, ReinforceDensityD, LeaveOneOutD, ImportanceD,
  ImplicitReparamD, PoissonWeakD,
  BernoulliDistD, NormalDistD, ExponentialDistD, PoissonDistD,
  NormalCdfD, ExponentialCdfD,
  FstStar, SndStar,
};

const char* prim_name(Prim p);
const char* prim_name(PrimD p);

class Term;
using TermPtr = std::shared_ptr<const Term>;

class Term {
 public:
  enum class Kind {
    Unit,
    NumLit,    // scalar literal, polymorphic over K and K*
    NatLit,
    BoolLit,
    Var,
    PrimRef,
    PrimDRef,
    Lambda,
    App,
    Let,       // let x = a in b
    If,        // if a then b else c
    Pair,
    Fst,
    Snd,
    Return,
    Do,
    ReturnD,
    DoD,
    DualLit,   // target-only pair of a primal and a tangent term
  };

  struct DoItem {
    enum class Kind { Bind, Let, Stmt };  // Let and Stmt are removed by desugar
    Kind kind = Kind::Bind;
    std::string name;  // empty for Stmt
    TermPtr value;
    Span span;
  };

  Kind kind;
  Span span;

  double num = 0;                      // NumLit
  std::optional<TypePtr> lit_ann;      // NumLit ascription or resolved type
  std::uint64_t nat = 0;               // NatLit
  bool truth = false;                  // BoolLit
  std::string name;                    // Var / Lambda / Let binder
  Prim prim = Prim::PolyAdd;           // PrimRef
  PrimD prim_d = PrimD::AddD;          // PrimDRef
  TypePtr ann;                         // Lambda binder annotation
  TermPtr a, b, c;                     // children, by position
  std::vector<DoItem> items;           // Do / DoD bindings
  TermPtr tail;                        // Do / DoD result term

  static TermPtr unit(Span s = {});
  static TermPtr num_lit(double v, std::optional<TypePtr> ann = {}, Span s = {});
  static TermPtr nat_lit(std::uint64_t v, Span s = {});
  static TermPtr bool_lit(bool v, Span s = {});
  static TermPtr var(std::string name, Span s = {});
  static TermPtr prim_ref(Prim p, Span s = {});
  static TermPtr prim_d_ref(PrimD p, Span s = {});
  static TermPtr lambda(std::string name, TypePtr ann, TermPtr body, Span s = {});
  static TermPtr app(TermPtr f, TermPtr x, Span s = {});
  static TermPtr let(std::string name, TermPtr bound, TermPtr body, Span s = {});
  static TermPtr if_(TermPtr cond, TermPtr then_t, TermPtr else_t, Span s = {});
  static TermPtr pair(TermPtr a, TermPtr b, Span s = {});
  static TermPtr fst(TermPtr p, Span s = {});
  static TermPtr snd(TermPtr p, Span s = {});
  static TermPtr ret(TermPtr v, Span s = {});
  static TermPtr do_block(std::vector<DoItem> items, TermPtr tail, Span s = {});
  static TermPtr ret_d(TermPtr v, Span s = {});
  static TermPtr do_d(std::vector<DoItem> items, TermPtr tail, Span s = {});
  static TermPtr dual_lit(TermPtr primal, TermPtr tangent, Span s = {});

  // Convenience for curried primitive application.
  static TermPtr apply2(TermPtr f, TermPtr x, TermPtr y, Span s = {});
};

struct Program {
  std::string name;  // display name, usually the file stem
  TermPtr term;
};

// Parses one top-level term. `--` starts a line comment.
Program parse_program(std::string_view source, std::string name = "<input>");

// Rewrites do-block `let` and bare-statement items into plain binds.
// Idempotent; spans are preserved.
TermPtr desugar(const TermPtr& t);
Program desugar(const Program& p);

// Minimally parenthesized rendering; parse(pretty(t)) is alpha-equal to t for
// source terms. Target forms render in the same style but do not re-parse.
std::string pretty(const TermPtr& t);

bool alpha_equal(const TermPtr& a, const TermPtr& b);

}  // namespace adev
