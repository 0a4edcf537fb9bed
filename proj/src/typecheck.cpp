#include "adev/typecheck.hpp"

#include <cmath>
#include <cstdint>

namespace adev {

namespace {

[[noreturn]] void fail(const std::string& msg, Span s) { throw TypeError(msg, s); }

std::string mismatch(const TypePtr& expected, const TypePtr& found) {
  return "type mismatch: expected " + pretty(expected) + ", found " + pretty(found);
}

bool is_smooth_scalar(const TypePtr& t) { return t && t->kind == Type::Kind::Smooth; }

// The sample type handed to a density-based estimator's continuation: real
// samples arrive non-smooth, discrete samples keep their type.
TypePtr star_of(const TypePtr& elem, Span s) {
  switch (elem->kind) {
    case Type::Kind::Smooth:
    case Type::Kind::Star:
      return Type::star(elem->base);
    case Type::Kind::Bool:
    case Type::Kind::Nat:
      return elem;
    case Type::Kind::Product:
      // Translated real element (R * R) still hands the continuation R*.
      return Type::star(BaseKind::Real);
    default:
      fail("distributions over " + pretty(elem) + " are not supported", s);
  }
}

TypePtr dual(TypePtr k) { return Type::product(std::move(k), Type::real()); }

// Fixed (monomorphic) primitive types; curried.
TypePtr fixed_prim_type(Prim p) {
  auto R = Type::real;
  auto posR = Type::pos_real;
  auto interval = Type::interval;
  auto N = Type::nat;
  auto B = Type::boolean;
  auto est = Type::est;
  auto arr = Type::arrow;
  switch (p) {
    case Prim::AddReal: case Prim::SubReal: case Prim::MulReal: case Prim::DivReal:
      return arr(R(), arr(R(), R()));
    case Prim::AddNat: case Prim::SubNat: case Prim::MulNat: case Prim::DivNat:
      return arr(N(), arr(N(), N()));
    case Prim::Exp: case Prim::Log: case Prim::Sin: case Prim::Cos:
      return arr(R(), R());
    case Prim::Pow: return arr(R(), arr(N(), R()));
    case Prim::NatToReal: return arr(N(), R());
    case Prim::Exact: return arr(R(), est());
    case Prim::PlusEst: case Prim::TimesEst:
      return arr(est(), arr(est(), est()));
    case Prim::ExpEst: return arr(est(), est());
    case Prim::Minibatch:
      return arr(N(), arr(N(), arr(arr(N(), R()), est())));
    case Prim::FlipEnum: case Prim::FlipReinforce:
      return arr(interval(), Type::prob(B()));
    case Prim::Sample: return Type::prob(Type::star(BaseKind::Interval));
    case Prim::NormalReparam:
      return arr(R(), arr(posR(), Type::prob(R())));
    case Prim::NormalReinforce:
      return arr(R(), arr(posR(), Type::prob(Type::star(BaseKind::Real))));
    case Prim::GeometricReinforce:
      return arr(interval(), Type::prob(N()));
    case Prim::Baseline:
      return arr(Type::prob(R()), arr(R(), est()));
    case Prim::Addcost:
      return arr(R(), Type::wprob(Type::unit()));
    case Prim::ImplicitReparam:
      return arr(Type::cdf(R()), arr(arr(R(), est()), est()));
    case Prim::PoissonWeak:
      return arr(posR(), arr(arr(N(), est()), est()));
    case Prim::BernoulliDist: return arr(interval(), Type::dist(B()));
    case Prim::NormalDist: return arr(R(), arr(posR(), Type::dist(R())));
    case Prim::ExponentialDist: return arr(posR(), Type::dist(R()));
    case Prim::PoissonDist: return arr(posR(), Type::dist(N()));
    case Prim::NormalCdf: return arr(R(), arr(posR(), Type::cdf(R())));
    case Prim::ExponentialCdf: return arr(posR(), Type::cdf(R()));
    default: return nullptr;
  }
}

TypePtr fixed_prim_d_type(PrimD p) {
  auto R = Type::real;
  auto dR = [&] { return dual(Type::real()); };
  auto dPos = [&] { return dual(Type::pos_real()); };
  auto dI = [&] { return dual(Type::interval()); };
  auto N = Type::nat;
  auto B = Type::boolean;
  auto estT = est_translated;
  auto arr = Type::arrow;
  switch (p) {
    case PrimD::AddD: case PrimD::SubD: case PrimD::MulD: case PrimD::DivD:
      return arr(dR(), arr(dR(), dR()));
    case PrimD::ExpD: case PrimD::LogD: case PrimD::SinD: case PrimD::CosD:
      return arr(dR(), dR());
    case PrimD::PowD: return arr(dR(), arr(N(), dR()));
    case PrimD::NatToRealD: return arr(N(), dR());
    case PrimD::ExactD: return arr(dR(), estT());
    case PrimD::PlusEstD: case PrimD::TimesEstD:
      return arr(estT(), arr(estT(), estT()));
    case PrimD::ExpEstD: return arr(estT(), estT());
    case PrimD::MinibatchD:
      return arr(N(), arr(N(), arr(arr(N(), dR()), estT())));
    case PrimD::ExpectD:
      return arr(Type::prob_d(dR()), estT());
    case PrimD::FlipEnumD: case PrimD::FlipReinforceD:
      return arr(dI(), Type::prob_d(B()));
    case PrimD::SampleD: return Type::prob_d(Type::star(BaseKind::Interval));
    case PrimD::NormalReparamD:
      return arr(dR(), arr(dPos(), Type::prob_d(dR())));
    case PrimD::NormalReinforceD:
      return arr(dR(), arr(dPos(), Type::prob_d(Type::star(BaseKind::Real))));
    case PrimD::GeometricReinforceD:
      return arr(dI(), Type::prob_d(N()));
    case PrimD::BaselineD:
      return arr(Type::prob_d(dR()), arr(dR(), estT()));
    case PrimD::AddcostD:
      return arr(dR(), Type::prob_d(Type::unit()));
    case PrimD::ImplicitReparamD:
      return arr(Type::cdf(dR()), arr(arr(dR(), estT()), estT()));
    case PrimD::PoissonWeakD:
      return arr(dPos(), arr(arr(N(), estT()), estT()));
    case PrimD::BernoulliDistD: return arr(dI(), Type::dist(B()));
    case PrimD::NormalDistD: return arr(dR(), arr(dPos(), Type::dist(dR())));
    case PrimD::ExponentialDistD: return arr(dPos(), Type::dist(dR()));
    case PrimD::PoissonDistD: return arr(dPos(), Type::dist(N()));
    case PrimD::NormalCdfD: return arr(dR(), arr(dPos(), Type::cdf(dR())));
    case PrimD::ExponentialCdfD: return arr(dPos(), Type::cdf(dR()));
    case PrimD::FstStar: case PrimD::SndStar:
      return arr(Type::est_d(), Type::est());
    default: return nullptr;
  }
  (void)R; (void)B;
}

void check_literal_range(double v, const TypePtr& t, Span s) {
  if (!std::isfinite(v)) fail("numeric literal must be finite", s);
  switch (t->base) {
    case BaseKind::Real:
      return;
    case BaseKind::PosReal:
      if (v <= 0) fail("literal " + std::to_string(v) + " is outside Pos", s);
      return;
    case BaseKind::Interval:
      if (v <= 0 || v >= 1) fail("literal " + std::to_string(v) + " is outside I", s);
      return;
  }
}

bool is_integer_literal(const TermPtr& t) {
  return t->kind == Term::Kind::NumLit && !t->lit_ann &&
         t->num >= 0 && t->num == std::floor(t->num);
}

struct Checker {
  TypeEnv& env;

  Inferred infer(const TermPtr& t);
  TermPtr check(const TermPtr& t, const TypePtr& expected);

  Inferred infer_app(const TermPtr& t);
  Inferred resolve_arith(Prim op, const std::vector<TermPtr>& args,
                         const std::vector<Span>& spans, Span s);
  Inferred resolve_compare(Prim op, const std::vector<TermPtr>& args, Span s);
  TypePtr join(const TypePtr& a, const TypePtr& b, Span s);
};

TypePtr Checker::join(const TypePtr& a, const TypePtr& b, Span s) {
  if (type_equal(a, b)) return a;
  if (is_smooth_scalar(a) && is_smooth_scalar(b)) return Type::real();
  bool a_monadic = a->kind == Type::Kind::Prob || a->kind == Type::Kind::WProb;
  bool b_monadic = b->kind == Type::Kind::Prob || b->kind == Type::Kind::WProb;
  if (a_monadic && b_monadic) {
    TypePtr inner = join(a->fst, b->fst, s);
    bool wp = a->kind == Type::Kind::WProb || b->kind == Type::Kind::WProb;
    return wp ? Type::wprob(inner) : Type::prob(inner);
  }
  if (a->kind == Type::Kind::Product && b->kind == Type::Kind::Product)
    return Type::product(join(a->fst, b->fst, s), join(a->snd, b->snd, s));
  fail("branches have incompatible types " + pretty(a) + " and " + pretty(b), s);
}

Inferred Checker::resolve_arith(Prim op, const std::vector<TermPtr>& args,
                                const std::vector<Span>& spans, Span s) {
  if (args.size() < 2) fail("arithmetic operator applied to too few operands", s);
  // Nat instance when either operand is visibly Nat; otherwise smooth.
  auto tries_nat = [&](const TermPtr& a) -> bool {
    if (is_integer_literal(a)) return false;  // integer literals default to R
    TypeEnv probe = env;
    try {
      Checker c{probe};
      return c.infer(a).type->kind == Type::Kind::Nat;
    } catch (const TypeError&) {
      return false;
    }
  };
  bool nat = tries_nat(args[0]) || tries_nat(args[1]);
  Prim resolved;
  TypePtr operand;
  if (nat) {
    operand = Type::nat();
    switch (op) {
      case Prim::PolyAdd: resolved = Prim::AddNat; break;
      case Prim::PolySub: resolved = Prim::SubNat; break;
      case Prim::PolyMul: resolved = Prim::MulNat; break;
      default: resolved = Prim::DivNat; break;
    }
  } else {
    operand = Type::real();
    switch (op) {
      case Prim::PolyAdd: resolved = Prim::AddReal; break;
      case Prim::PolySub: resolved = Prim::SubReal; break;
      case Prim::PolyMul: resolved = Prim::MulReal; break;
      default: resolved = Prim::DivReal; break;
    }
  }
  TermPtr lhs = check(args[0], operand);
  TermPtr rhs = check(args[1], operand);
  TermPtr out = Term::apply2(Term::prim_ref(resolved, s), lhs, rhs, s);
  (void)spans;
  return {operand, out};
}

Inferred Checker::resolve_compare(Prim op, const std::vector<TermPtr>& args, Span s) {
  if (args.size() < 2) fail("comparison applied to too few operands", s);
  auto bad_smooth = [&](const TermPtr& t, const TypePtr& ty) -> std::string {
    std::string who = t->kind == Term::Kind::Var ? "variable '" + t->name + "' of "
                                                 : "a value of ";
    return who + "smooth type " + pretty(ty) + " cannot be cast to " +
           pretty(Type::star(ty->base)) +
           " (comparisons observe values non-smoothly)";
  };
  // Literals adopt the other operand's star type, so infer a non-literal side
  // first when there is one.
  bool lhs_lit = args[0]->kind == Term::Kind::NumLit && !args[0]->lit_ann;
  const TermPtr& anchor = lhs_lit ? args[1] : args[0];
  const TermPtr& other = lhs_lit ? args[0] : args[1];
  Inferred ai = infer(anchor);
  if (ai.type->kind == Type::Kind::Smooth) fail(bad_smooth(anchor, ai.type), anchor->span);
  if (ai.type->kind != Type::Kind::Star && ai.type->kind != Type::Kind::Nat &&
      ai.type->kind != Type::Kind::Bool)
    fail("comparisons need operands of a non-smooth scalar type, found " +
             pretty(ai.type),
         anchor->span);
  TermPtr oe;
  if (other->kind == Term::Kind::Var || other->kind == Term::Kind::NumLit) {
    oe = check(other, ai.type);
  } else {
    Inferred oi = infer(other);
    if (oi.type->kind == Type::Kind::Smooth) fail(bad_smooth(other, oi.type), other->span);
    if (!type_equal(oi.type, ai.type))
      fail(mismatch(ai.type, oi.type), other->span);
    oe = oi.term;
  }
  TermPtr lhs = lhs_lit ? oe : ai.term;
  TermPtr rhs = lhs_lit ? ai.term : oe;
  return {Type::boolean(), Term::apply2(Term::prim_ref(op, s), lhs, rhs, s)};
}

Inferred Checker::infer_app(const TermPtr& t) {
  // Collect the application spine.
  std::vector<TermPtr> args;
  std::vector<Span> spans;
  TermPtr head = t;
  while (head->kind == Term::Kind::App) {
    args.push_back(head->b);
    spans.push_back(head->span);
    head = head->a;
  }
  std::reverse(args.begin(), args.end());
  std::reverse(spans.begin(), spans.end());

  size_t consumed = 0;
  Inferred acc;

  auto generic_head = [&]() {
    acc = infer(head);
  };

  if (head->kind == Term::Kind::PrimRef) {
    switch (head->prim) {
      case Prim::PolyAdd: case Prim::PolySub: case Prim::PolyMul: case Prim::PolyDiv: {
        acc = resolve_arith(head->prim, args, spans, head->span);
        consumed = 2;
        break;
      }
      case Prim::Leq: case Prim::Eq: {
        acc = resolve_compare(head->prim, args, head->span);
        consumed = 2;
        break;
      }
      case Prim::Forget: {
        if (args.empty()) fail("forget needs an argument", head->span);
        Inferred ai = infer(args[0]);
        if (ai.type->kind != Type::Kind::Star)
          fail("forget expects a non-smooth scalar, found " + pretty(ai.type),
               args[0]->span);
        acc = {Type::smooth(ai.type->base),
               Term::app(head, ai.term, spans[0])};
        consumed = 1;
        break;
      }
      case Prim::Expect: {
        if (args.empty()) fail("E needs a probabilistic argument", head->span);
        Inferred mi = infer(args[0]);
        bool monadic = mi.type->kind == Type::Kind::Prob ||
                       mi.type->kind == Type::Kind::WProb;
        if (!monadic || !compatible(mi.type->fst, Type::real()))
          fail("E expects P R or WP R, found " + pretty(mi.type), args[0]->span);
        acc = {Type::est(), Term::app(head, mi.term, spans[0])};
        consumed = 1;
        break;
      }
      case Prim::ReinforceDensity: case Prim::Importance: case Prim::LeaveOneOut: {
        size_t need = head->prim == Prim::ReinforceDensity ? 2 : 3;
        if (args.size() < need)
          fail(std::string(prim_name(head->prim)) + " is under-applied", head->span);
        size_t di = 0;
        TermPtr count;
        if (head->prim == Prim::LeaveOneOut) {
          count = check(args[0], Type::nat());
          if (count->kind == Term::Kind::NatLit && count->nat < 2)
            fail("leave_one_out needs at least two particles", args[0]->span);
          di = 1;
        }
        Inferred d0 = infer(args[di]);
        if (d0.type->kind != Type::Kind::Dist)
          fail(std::string(prim_name(head->prim)) + " expects a D type, found " +
                   pretty(d0.type),
               args[di]->span);
        TermPtr second;
        size_t ki = di + 1;
        if (head->prim == Prim::Importance) {
          second = check(args[di + 1], d0.type);
          ki = di + 2;
        }
        TypePtr karg = star_of(d0.type->fst, args[ki]->span);
        TermPtr k = check(args[ki], Type::arrow(karg, Type::est()));
        TermPtr out = Term::app(head, count ? count : d0.term,
                                count ? spans[0] : spans[di]);
        if (count) out = Term::app(out, d0.term, spans[di]);
        if (second) out = Term::app(out, second, spans[di + 1]);
        out = Term::app(out, k, spans[ki]);
        acc = {Type::est(), out};
        consumed = ki + 1;
        break;
      }
      default: {
        TypePtr ft = fixed_prim_type(head->prim);
        if (!ft) fail("primitive cannot be typed here", head->span);
        acc = {ft, head};
        break;
      }
    }
  } else if (head->kind == Term::Kind::PrimDRef &&
             (head->prim_d == PrimD::ReinforceDensityD ||
              head->prim_d == PrimD::ImportanceD ||
              head->prim_d == PrimD::LeaveOneOutD)) {
    // Element-generic target primitives; their type follows the D argument.
    size_t need = head->prim_d == PrimD::ReinforceDensityD ? 2 : 3;
    if (args.size() < need)
      fail(std::string(prim_name(head->prim_d)) + " is under-applied", head->span);
    size_t di = 0;
    TermPtr count;
    if (head->prim_d == PrimD::LeaveOneOutD) {
      count = check(args[0], Type::nat());
      di = 1;
    }
    Inferred d0 = infer(args[di]);
    if (d0.type->kind != Type::Kind::Dist)
      fail(std::string(prim_name(head->prim_d)) + " expects a D type, found " +
               pretty(d0.type),
           args[di]->span);
    TermPtr second;
    size_t ki = di + 1;
    if (head->prim_d == PrimD::ImportanceD) {
      second = check(args[di + 1], d0.type);
      ki = di + 2;
    }
    TypePtr karg = star_of(d0.type->fst, args[ki]->span);
    TermPtr k = check(args[ki], Type::arrow(karg, est_translated()));
    TermPtr out = Term::app(head, count ? count : d0.term,
                            count ? spans[0] : spans[di]);
    if (count) out = Term::app(out, d0.term, spans[di]);
    if (second) out = Term::app(out, second, spans[di + 1]);
    out = Term::app(out, k, spans[ki]);
    acc = {est_translated(), out};
    consumed = ki + 1;
  } else {
    generic_head();
  }

  for (size_t i = consumed; i < args.size(); ++i) {
    TypePtr ft = acc.type;
    if (ft->kind == Type::Kind::ProbD) ft = unfold_probd(ft);
    if (ft->kind != Type::Kind::Arrow)
      fail("cannot apply a value of type " + pretty(acc.type), spans[i]);
    TermPtr arg = check(args[i], ft->fst);
    acc = {ft->snd, Term::app(acc.term, arg, spans[i])};
  }
  return acc;
}

Inferred Checker::infer(const TermPtr& t) {
  if (!t) fail("missing term", {});
  switch (t->kind) {
    case Term::Kind::Unit: return {Type::unit(), t};
    case Term::Kind::NumLit: {
      if (t->lit_ann) {
        check_literal_range(t->num, *t->lit_ann, t->span);
        return {*t->lit_ann, t};
      }
      check_literal_range(t->num, Type::real(), t->span);
      return {Type::real(), Term::num_lit(t->num, Type::real(), t->span)};
    }
    case Term::Kind::NatLit: return {Type::nat(), t};
    case Term::Kind::BoolLit: return {Type::boolean(), t};
    case Term::Kind::Var: {
      const TypePtr* ty = env.lookup(t->name);
      if (!ty) fail("unbound variable '" + t->name + "'", t->span);
      return {*ty, t};
    }
    case Term::Kind::PrimRef: {
      TypePtr ft = fixed_prim_type(t->prim);
      if (!ft)
        fail(std::string("operator '") + prim_name(t->prim) +
                 "' needs its operands to resolve",
             t->span);
      return {ft, t};
    }
    case Term::Kind::PrimDRef: {
      TypePtr ft = fixed_prim_d_type(t->prim_d);
      if (!ft) fail("target primitive needs applied typing", t->span);
      return {ft, t};
    }
    case Term::Kind::Lambda: {
      env.bind(t->name, t->ann);
      Inferred body = infer(t->a);
      env.pop();
      return {Type::arrow(t->ann, body.type),
              Term::lambda(t->name, t->ann, body.term, t->span)};
    }
    case Term::Kind::App: {
      // forget_D is the one target primitive whose type depends on its operand.
      if (t->a->kind == Term::Kind::PrimDRef && t->a->prim_d == PrimD::ForgetD) {
        Inferred ai = infer(t->b);
        if (ai.type->kind != Type::Kind::Star)
          fail("forget_D expects a non-smooth scalar", t->b->span);
        return {dual(Type::smooth(ai.type->base)),
                Term::app(t->a, ai.term, t->span)};
      }
      return infer_app(t);
    }
    case Term::Kind::Let: {
      Inferred bound = infer(t->a);
      env.bind(t->name, bound.type);
      Inferred body = infer(t->b);
      env.pop();
      return {body.type, Term::let(t->name, bound.term, body.term, t->span)};
    }
    case Term::Kind::If: {
      TermPtr c = check(t->a, Type::boolean());
      Inferred x = infer(t->b);
      Inferred y = infer(t->c);
      TypePtr j = join(x.type, y.type, t->span);
      return {j, Term::if_(c, x.term, y.term, t->span)};
    }
    case Term::Kind::Pair: {
      Inferred a = infer(t->a);
      Inferred b = infer(t->b);
      return {Type::product(a.type, b.type), Term::pair(a.term, b.term, t->span)};
    }
    case Term::Kind::DualLit: {
      Inferred a = infer(t->a);
      if (!is_smooth_scalar(a.type))
        fail("dual literal primal must be a smooth scalar", t->a->span);
      TermPtr b = check(t->b, Type::real());
      return {dual(a.type), Term::dual_lit(a.term, b, t->span)};
    }
    case Term::Kind::Fst: case Term::Kind::Snd: {
      Inferred p = infer(t->a);
      if (p.type->kind != Type::Kind::Product)
        fail("projection from non-product type " + pretty(p.type), t->span);
      TypePtr r = t->kind == Term::Kind::Fst ? p.type->fst : p.type->snd;
      TermPtr n = t->kind == Term::Kind::Fst ? Term::fst(p.term, t->span)
                                             : Term::snd(p.term, t->span);
      return {r, n};
    }
    case Term::Kind::Return: {
      Inferred v = infer(t->a);
      return {Type::prob(v.type), Term::ret(v.term, t->span)};
    }
    case Term::Kind::ReturnD: {
      Inferred v = infer(t->a);
      return {Type::prob_d(v.type), Term::ret_d(v.term, t->span)};
    }
    case Term::Kind::Do: case Term::Kind::DoD: {
      bool target = t->kind == Term::Kind::DoD;
      bool wp = false;
      std::vector<Term::DoItem> items;
      size_t pushed = 0;
      for (const auto& it : t->items) {
        if (it.kind != Term::DoItem::Kind::Bind)
          fail("do-block must be desugared before checking", it.span);
        Inferred v = infer(it.value);
        TypePtr elem;
        if (target) {
          if (v.type->kind != Type::Kind::ProbD)
            fail("do_D binds a non-probabilistic value of type " + pretty(v.type),
                 it.span);
          elem = v.type->fst;
        } else {
          if (v.type->kind == Type::Kind::Prob) {
            elem = v.type->fst;
          } else if (v.type->kind == Type::Kind::WProb) {
            elem = v.type->fst;
            wp = true;
          } else {
            fail("do binds a non-probabilistic value of type " + pretty(v.type),
                 it.span);
          }
        }
        items.push_back({Term::DoItem::Kind::Bind, it.name, v.term, it.span});
        env.bind(it.name, elem);
        pushed++;
      }
      Inferred tail = infer(t->tail);
      for (size_t i = 0; i < pushed; ++i) env.pop();
      TypePtr tt = tail.type;
      TypePtr elem;
      if (target) {
        if (tt->kind != Type::Kind::ProbD)
          fail("do_D tail must be probabilistic, found " + pretty(tt), t->tail->span);
        elem = tt->fst;
        return {Type::prob_d(elem), Term::do_d(std::move(items), tail.term, t->span)};
      }
      if (tt->kind == Type::Kind::Prob) {
        elem = tt->fst;
      } else if (tt->kind == Type::Kind::WProb) {
        elem = tt->fst;
        wp = true;
      } else {
        fail("do tail must be probabilistic, found " + pretty(tt), t->tail->span);
      }
      TypePtr res = wp ? Type::wprob(elem) : Type::prob(elem);
      return {res, Term::do_block(std::move(items), tail.term, t->span)};
    }
  }
  fail("unreachable term kind", t->span);
}

TermPtr Checker::check(const TermPtr& t, const TypePtr& expected) {
  switch (t->kind) {
    case Term::Kind::NumLit: {
      if (expected->kind == Type::Kind::Nat) {
        if (t->lit_ann) fail("annotated literal used at N", t->span);
        if (!is_integer_literal(t))
          fail("expected a natural number literal", t->span);
        return Term::nat_lit(static_cast<std::uint64_t>(t->num), t->span);
      }
      if (expected->kind == Type::Kind::Smooth || expected->kind == Type::Kind::Star) {
        if (t->lit_ann && !type_equal(*t->lit_ann, expected)) {
          // An explicitly annotated literal keeps its type; widening may
          // still apply below.
          break;
        }
        check_literal_range(t->num, expected, t->span);
        return Term::num_lit(t->num, expected, t->span);
      }
      break;
    }
    case Term::Kind::Lambda: {
      TypePtr ft = expected;
      if (ft->kind == Type::Kind::ProbD) ft = unfold_probd(ft);
      if (ft->kind == Type::Kind::Arrow) {
        if (!type_equal(t->ann, ft->fst))
          fail("binder annotation " + pretty(t->ann) +
                   " does not match expected domain " + pretty(ft->fst),
               t->span);
        env.bind(t->name, t->ann);
        TermPtr body = check(t->a, ft->snd);
        env.pop();
        return Term::lambda(t->name, t->ann, body, t->span);
      }
      break;
    }
    case Term::Kind::If: {
      TermPtr c = check(t->a, Type::boolean());
      TermPtr x = check(t->b, expected);
      TermPtr y = check(t->c, expected);
      return Term::if_(c, x, y, t->span);
    }
    case Term::Kind::Let: {
      Inferred bound = infer(t->a);
      env.bind(t->name, bound.type);
      TermPtr body = check(t->b, expected);
      env.pop();
      return Term::let(t->name, bound.term, body, t->span);
    }
    case Term::Kind::Return: {
      if (expected->kind == Type::Kind::Prob || expected->kind == Type::Kind::WProb) {
        TermPtr v = check(t->a, expected->fst);
        return Term::ret(v, t->span);
      }
      break;
    }
    case Term::Kind::Pair: {
      if (expected->kind == Type::Kind::Product) {
        TermPtr a = check(t->a, expected->fst);
        TermPtr b = check(t->b, expected->snd);
        return Term::pair(a, b, t->span);
      }
      break;
    }
    default:
      break;
  }
  Inferred got = infer(t);
  if (!compatible(got.type, expected))
    fail(mismatch(expected, got.type), t->span);
  return got.term;
}

}  // namespace

bool compatible(const TypePtr& found, const TypePtr& expected) {
  if (type_equal(found, expected)) return true;
  if (!found || !expected) return false;
  if (expected->kind == Type::Kind::Smooth && expected->base == BaseKind::Real &&
      found->kind == Type::Kind::Smooth)
    return true;  // Pos and I widen into R
  if (expected->kind == Type::Kind::Prob && found->kind == Type::Kind::Prob)
    return compatible(found->fst, expected->fst);
  if (expected->kind == Type::Kind::WProb &&
      (found->kind == Type::Kind::Prob || found->kind == Type::Kind::WProb))
    return compatible(found->fst, expected->fst);
  if (expected->kind == Type::Kind::Product && found->kind == Type::Kind::Product)
    return compatible(found->fst, expected->fst) && compatible(found->snd, expected->snd);
  return false;
}

Inferred infer(TypeEnv& env, const TermPtr& t) {
  Checker c{env};
  return c.infer(t);
}

TermPtr check(TypeEnv& env, const TermPtr& t, const TypePtr& expected) {
  Checker c{env};
  return c.check(t, expected);
}

EntryInfo check_entry(const Program& p) {
  TermPtr t = desugar(p.term);
  if (!t || t->kind != Term::Kind::Lambda)
    fail("the top level must be a lambda over the parameter", t ? t->span : Span{});
  if (!t->ann || t->ann->kind != Type::Kind::Smooth)
    fail("the entry parameter must have a smooth scalar type (R, Pos, or I)",
         t->span);
  TypeEnv env;
  env.bind(t->name, t->ann);
  Checker c{env};
  TermPtr body = c.check(t->a, Type::est());
  return EntryInfo{t->name, t->ann, Term::lambda(t->name, t->ann, body, t->span)};
}

}  // namespace adev
