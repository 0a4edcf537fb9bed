#include "adev/transform.hpp"

#include <set>
#include <unordered_set>

namespace adev {

namespace {

[[noreturn]] void reject(const std::string& msg) { throw TransformError(msg); }

PrimD derivative_of(Prim p) {
  switch (p) {
    case Prim::AddReal: return PrimD::AddD;
    case Prim::SubReal: return PrimD::SubD;
    case Prim::MulReal: return PrimD::MulD;
    case Prim::DivReal: return PrimD::DivD;
    case Prim::Exp: return PrimD::ExpD;
    case Prim::Log: return PrimD::LogD;
    case Prim::Sin: return PrimD::SinD;
    case Prim::Cos: return PrimD::CosD;
    case Prim::Pow: return PrimD::PowD;
    case Prim::NatToReal: return PrimD::NatToRealD;
    case Prim::Forget: return PrimD::ForgetD;
    case Prim::Exact: return PrimD::ExactD;
    case Prim::PlusEst: return PrimD::PlusEstD;
    case Prim::TimesEst: return PrimD::TimesEstD;
    case Prim::ExpEst: return PrimD::ExpEstD;
    case Prim::Minibatch: return PrimD::MinibatchD;
    case Prim::Expect: return PrimD::ExpectD;
    case Prim::FlipEnum: return PrimD::FlipEnumD;
    case Prim::FlipReinforce: return PrimD::FlipReinforceD;
    case Prim::Sample: return PrimD::SampleD;
    case Prim::NormalReparam: return PrimD::NormalReparamD;
    case Prim::NormalReinforce: return PrimD::NormalReinforceD;
    case Prim::GeometricReinforce: return PrimD::GeometricReinforceD;
    case Prim::Baseline: return PrimD::BaselineD;
    case Prim::Addcost: return PrimD::AddcostD;
    case Prim::ReinforceDensity: return PrimD::ReinforceDensityD;
    case Prim::LeaveOneOut: return PrimD::LeaveOneOutD;
    case Prim::Importance: return PrimD::ImportanceD;
    case Prim::ImplicitReparam: return PrimD::ImplicitReparamD;
    case Prim::PoissonWeak: return PrimD::PoissonWeakD;
    case Prim::BernoulliDist: return PrimD::BernoulliDistD;
    case Prim::NormalDist: return PrimD::NormalDistD;
    case Prim::ExponentialDist: return PrimD::ExponentialDistD;
    case Prim::PoissonDist: return PrimD::PoissonDistD;
    case Prim::NormalCdf: return PrimD::NormalCdfD;
    case Prim::ExponentialCdf: return PrimD::ExponentialCdfD;
    default:
      reject(std::string("primitive '") + prim_name(p) +
             "' must be resolved before translation");
  }
}

bool prim_unchanged(Prim p) {
  switch (p) {
    case Prim::AddNat: case Prim::SubNat: case Prim::MulNat: case Prim::DivNat:
    case Prim::Leq: case Prim::Eq:
      return true;
    default:
      return false;
  }
}

}  // namespace

TypePtr ad_type(const TypePtr& t) {
  if (!t) return t;
  switch (t->kind) {
    case Type::Kind::Unit:
    case Type::Kind::Nat:
    case Type::Kind::Bool:
    case Type::Kind::Star:
      return t;
    case Type::Kind::Smooth:
      return Type::product(t, Type::real());
    case Type::Kind::Product:
      return Type::product(ad_type(t->fst), ad_type(t->snd));
    case Type::Kind::Arrow:
      return Type::arrow(ad_type(t->fst), ad_type(t->snd));
    case Type::Kind::Prob:
    case Type::Kind::WProb:
      return Type::prob_d(ad_type(t->fst));
    case Type::Kind::Dist:
      return Type::dist(ad_type(t->fst));
    case Type::Kind::Cdf:
      return Type::cdf(ad_type(t->fst));
    case Type::Kind::Est:
      return est_translated();
    case Type::Kind::EstD:
    case Type::Kind::ProbD:
    case Type::Kind::SeedT:
      reject("type " + pretty(t) + " is already in the target language");
  }
  return t;
}

TermPtr ad_term(const TermPtr& t) {
  if (!t) return t;
  switch (t->kind) {
    case Term::Kind::Unit:
    case Term::Kind::NatLit:
    case Term::Kind::BoolLit:
    case Term::Kind::Var:
      return t;
    case Term::Kind::NumLit: {
      if (!t->lit_ann)
        reject("literal lacks a resolved type; translate elaborated terms only");
      if ((*t->lit_ann)->kind == Type::Kind::Star) return t;
      // Pos and I literals keep their annotation so the dual primal stays in
      // the parameter domain type; bare R literals print without one.
      std::optional<TypePtr> ann;
      if ((*t->lit_ann)->base != BaseKind::Real) ann = *t->lit_ann;
      return Term::dual_lit(Term::num_lit(t->num, ann, t->span),
                            Term::num_lit(0, {}, t->span), t->span);
    }
    case Term::Kind::PrimRef:
      if (prim_unchanged(t->prim)) return t;
      return Term::prim_d_ref(derivative_of(t->prim), t->span);
    case Term::Kind::Lambda:
      return Term::lambda(t->name, ad_type(t->ann), ad_term(t->a), t->span);
    case Term::Kind::App:
      return Term::app(ad_term(t->a), ad_term(t->b), t->span);
    case Term::Kind::Let:
      return Term::let(t->name, ad_term(t->a), ad_term(t->b), t->span);
    case Term::Kind::If:
      return Term::if_(ad_term(t->a), ad_term(t->b), ad_term(t->c), t->span);
    case Term::Kind::Pair:
      return Term::pair(ad_term(t->a), ad_term(t->b), t->span);
    case Term::Kind::Fst:
      return Term::fst(ad_term(t->a), t->span);
    case Term::Kind::Snd:
      return Term::snd(ad_term(t->a), t->span);
    case Term::Kind::Return:
      return Term::ret_d(ad_term(t->a), t->span);
    case Term::Kind::Do: {
      std::vector<Term::DoItem> items;
      items.reserve(t->items.size());
      for (const auto& it : t->items) {
        if (it.kind != Term::DoItem::Kind::Bind)
          reject("translate desugared do-blocks only");
        items.push_back({it.kind, it.name, ad_term(it.value), it.span});
      }
      return Term::do_d(std::move(items), ad_term(t->tail), t->span);
    }
    case Term::Kind::PrimDRef:
    case Term::Kind::ReturnD:
    case Term::Kind::DoD:
    case Term::Kind::DualLit:
      reject("term is already in the target language; refusing to translate twice");
  }
  return t;
}

DerivedPrograms wrap_derivative(const EntryInfo& entry) {
  const TermPtr& lam = entry.elaborated;
  if (!lam || lam->kind != Term::Kind::Lambda)
    reject("entry must be a lambda");
  DerivedPrograms out;
  out.translated = ad_term(lam);
  Span s = lam->span;
  auto applied = [&](const std::string& theta) {
    return Term::app(out.translated,
                     Term::dual_lit(Term::var(theta, s), Term::num_lit(1, {}, s), s),
                     s);
  };
  const std::string theta = entry.param;
  out.derivative = Term::lambda(
      theta, entry.param_type,
      Term::app(Term::prim_d_ref(PrimD::SndStar, s), Term::fst(applied(theta), s), s),
      s);
  out.primal = Term::lambda(
      theta, entry.param_type,
      Term::app(Term::prim_d_ref(PrimD::FstStar, s), Term::fst(applied(theta), s), s),
      s);
  out.witness = Term::lambda(
      theta, entry.param_type,
      Term::lambda("s", Type::seed(),
                   Term::app(Term::snd(applied(theta), s), Term::var("s", s), s), s),
      s);
  return out;
}

// --- normalization -----------------------------------------------------------

namespace {

void free_vars(const TermPtr& t, std::set<std::string>& out) {
  if (!t) return;
  switch (t->kind) {
    case Term::Kind::Var: out.insert(t->name); return;
    case Term::Kind::Lambda: {
      std::set<std::string> inner;
      free_vars(t->a, inner);
      inner.erase(t->name);
      out.insert(inner.begin(), inner.end());
      return;
    }
    case Term::Kind::Let: {
      free_vars(t->a, out);
      std::set<std::string> inner;
      free_vars(t->b, inner);
      inner.erase(t->name);
      out.insert(inner.begin(), inner.end());
      return;
    }
    case Term::Kind::Do:
    case Term::Kind::DoD: {
      std::set<std::string> bound;
      for (const auto& it : t->items) {
        std::set<std::string> vs;
        free_vars(it.value, vs);
        for (const auto& v : vs)
          if (!bound.count(v)) out.insert(v);
        bound.insert(it.name);
      }
      std::set<std::string> vs;
      free_vars(t->tail, vs);
      for (const auto& v : vs)
        if (!bound.count(v)) out.insert(v);
      return;
    }
    default:
      free_vars(t->a, out);
      free_vars(t->b, out);
      free_vars(t->c, out);
      return;
  }
}

bool is_value(const TermPtr& t) {
  switch (t->kind) {
    case Term::Kind::Unit:
    case Term::Kind::NumLit:
    case Term::Kind::NatLit:
    case Term::Kind::BoolLit:
    case Term::Kind::Var:
    case Term::Kind::PrimRef:
    case Term::Kind::PrimDRef:
    case Term::Kind::Lambda:
      return true;
    case Term::Kind::DualLit:
    case Term::Kind::Pair:
      return is_value(t->a) && is_value(t->b);
    default:
      return false;
  }
}

struct Normalizer {
  int fresh_counter = 0;
  int steps = 0;

  std::string fresh(const std::string& base, const std::set<std::string>& avoid) {
    std::string name = base;
    while (avoid.count(name)) name = base + std::to_string(fresh_counter++);
    return name;
  }

  TermPtr subst(const TermPtr& t, const std::string& x, const TermPtr& v) {
    if (!t) return t;
    switch (t->kind) {
      case Term::Kind::Var:
        return t->name == x ? v : t;
      case Term::Kind::Lambda: {
        if (t->name == x) return t;
        std::set<std::string> fv;
        free_vars(v, fv);
        if (fv.count(t->name)) {
          std::set<std::string> avoid = fv;
          std::set<std::string> bodyfv;
          free_vars(t->a, bodyfv);
          avoid.insert(bodyfv.begin(), bodyfv.end());
          std::string nn = fresh(t->name, avoid);
          TermPtr renamed = subst(t->a, t->name, Term::var(nn, t->span));
          return Term::lambda(nn, t->ann, subst(renamed, x, v), t->span);
        }
        return Term::lambda(t->name, t->ann, subst(t->a, x, v), t->span);
      }
      case Term::Kind::Let: {
        TermPtr bound = subst(t->a, x, v);
        if (t->name == x) return Term::let(t->name, bound, t->b, t->span);
        std::set<std::string> fv;
        free_vars(v, fv);
        if (fv.count(t->name)) {
          std::set<std::string> avoid = fv;
          std::string nn = fresh(t->name, avoid);
          TermPtr renamed = subst(t->b, t->name, Term::var(nn, t->span));
          return Term::let(nn, bound, subst(renamed, x, v), t->span);
        }
        return Term::let(t->name, bound, subst(t->b, x, v), t->span);
      }
      case Term::Kind::App:
        return Term::app(subst(t->a, x, v), subst(t->b, x, v), t->span);
      case Term::Kind::Pair:
        return Term::pair(subst(t->a, x, v), subst(t->b, x, v), t->span);
      case Term::Kind::DualLit:
        return Term::dual_lit(subst(t->a, x, v), subst(t->b, x, v), t->span);
      case Term::Kind::If:
        return Term::if_(subst(t->a, x, v), subst(t->b, x, v), subst(t->c, x, v),
                         t->span);
      case Term::Kind::Fst: return Term::fst(subst(t->a, x, v), t->span);
      case Term::Kind::Snd: return Term::snd(subst(t->a, x, v), t->span);
      case Term::Kind::Return: return Term::ret(subst(t->a, x, v), t->span);
      case Term::Kind::ReturnD: return Term::ret_d(subst(t->a, x, v), t->span);
      case Term::Kind::Do:
      case Term::Kind::DoD: {
        std::vector<Term::DoItem> items;
        bool shadowed = false;
        for (const auto& it : t->items) {
          TermPtr nv = shadowed ? it.value : subst(it.value, x, v);
          items.push_back({it.kind, it.name, nv, it.span});
          if (it.name == x) shadowed = true;
        }
        TermPtr tail = shadowed ? t->tail : subst(t->tail, x, v);
        return t->kind == Term::Kind::Do
                   ? Term::do_block(std::move(items), tail, t->span)
                   : Term::do_d(std::move(items), tail, t->span);
      }
      default:
        return t;
    }
  }

  // Unfolds do_D and return_D into explicit continuation form. The type
  // environment supplies binder annotations for the introduced lambdas.
  TermPtr cps(const TermPtr& t, TypeEnv& env) {
    if (!t) return t;
    switch (t->kind) {
      case Term::Kind::ReturnD: {
        TermPtr v = cps(t->a, env);
        TypePtr vt = infer(env, v).type;
        std::set<std::string> fv;
        free_vars(v, fv);
        std::string k = fresh("k", fv);
        return Term::lambda(k, Type::arrow(vt, est_translated()),
                            Term::app(Term::var(k, t->span), v, t->span), t->span);
      }
      case Term::Kind::DoD: {
        // Forward pass: bind elem types feed both the introduced lambdas and
        // the env for later items.
        std::vector<TypePtr> elems;
        std::vector<TermPtr> vals;
        for (const auto& it : t->items) {
          TypePtr vt = infer(env, it.value).type;
          if (vt->kind != Type::Kind::ProbD)
            reject("do_D binds a non-probabilistic value");
          vals.push_back(cps(it.value, env));
          elems.push_back(vt->fst);
          env.bind(it.name, vt->fst);
        }
        TypePtr tail_ty = infer(env, t->tail).type;
        if (tail_ty->kind != Type::Kind::ProbD)
          reject("do_D tail must be probabilistic");
        TermPtr body = cps(t->tail, env);
        for (size_t i = 0; i < t->items.size(); ++i) env.pop();
        std::set<std::string> fv;
        free_vars(t, fv);
        std::string k = fresh("k", fv);
        TermPtr chain = Term::app(body, Term::var(k, t->span), t->span);
        for (size_t i = t->items.size(); i-- > 0;) {
          chain = Term::app(
              vals[i],
              Term::lambda(t->items[i].name, elems[i], chain, t->items[i].span),
              t->items[i].span);
        }
        return Term::lambda(k, Type::arrow(tail_ty->fst, est_translated()), chain,
                            t->span);
      }
      case Term::Kind::Lambda: {
        env.bind(t->name, t->ann);
        TermPtr body = cps(t->a, env);
        env.pop();
        return Term::lambda(t->name, t->ann, body, t->span);
      }
      case Term::Kind::Let: {
        TermPtr bound = cps(t->a, env);
        env.bind(t->name, infer(env, t->a).type);
        TermPtr body = cps(t->b, env);
        env.pop();
        return Term::let(t->name, bound, body, t->span);
      }
      case Term::Kind::App:
        return Term::app(cps(t->a, env), cps(t->b, env), t->span);
      case Term::Kind::If:
        return Term::if_(cps(t->a, env), cps(t->b, env), cps(t->c, env), t->span);
      case Term::Kind::Pair:
        return Term::pair(cps(t->a, env), cps(t->b, env), t->span);
      case Term::Kind::DualLit:
        return Term::dual_lit(cps(t->a, env), cps(t->b, env), t->span);
      case Term::Kind::Fst: return Term::fst(cps(t->a, env), t->span);
      case Term::Kind::Snd: return Term::snd(cps(t->a, env), t->span);
      default:
        return t;
    }
  }

  // One bottom-up simplification pass; sets changed when a rule fired.
  TermPtr simplify(const TermPtr& t, bool& changed) {
    if (!t) return t;
    if (++steps > 100000)
      reject("normalization did not converge");
    auto go = [&](const TermPtr& u) { return simplify(u, changed); };
    switch (t->kind) {
      case Term::Kind::App: {
        TermPtr f = go(t->a);
        TermPtr x = go(t->b);
        if (f->kind == Term::Kind::PrimDRef && f->prim_d == PrimD::ExpectD) {
          changed = true;
          return Term::app(x, Term::prim_d_ref(PrimD::ExactD, t->span), t->span);
        }
        if (f->kind == Term::Kind::Lambda && is_value(x)) {
          changed = true;
          return subst(f->a, f->name, x);
        }
        if (f->kind == Term::Kind::If && is_value(x)) {
          changed = true;
          return Term::if_(f->a, Term::app(f->b, x, t->span),
                           Term::app(f->c, x, t->span), t->span);
        }
        return Term::app(f, x, t->span);
      }
      case Term::Kind::Fst: {
        TermPtr p = go(t->a);
        if (p->kind == Term::Kind::Pair || p->kind == Term::Kind::DualLit) {
          changed = true;
          return p->a;
        }
        return Term::fst(p, t->span);
      }
      case Term::Kind::Snd: {
        TermPtr p = go(t->a);
        if (p->kind == Term::Kind::Pair || p->kind == Term::Kind::DualLit) {
          changed = true;
          return p->b;
        }
        return Term::snd(p, t->span);
      }
      case Term::Kind::Lambda:
        return Term::lambda(t->name, t->ann, go(t->a), t->span);
      case Term::Kind::Let:
        return Term::let(t->name, go(t->a), go(t->b), t->span);
      case Term::Kind::If:
        return Term::if_(go(t->a), go(t->b), go(t->c), t->span);
      case Term::Kind::Pair:
        return Term::pair(go(t->a), go(t->b), t->span);
      case Term::Kind::DualLit:
        return Term::dual_lit(go(t->a), go(t->b), t->span);
      case Term::Kind::Return: return Term::ret(go(t->a), t->span);
      case Term::Kind::ReturnD: return Term::ret_d(go(t->a), t->span);
      default:
        return t;
    }
  }
};

}  // namespace

TermPtr normalize(const TermPtr& t, TypeEnv env) {
  Normalizer n;
  TermPtr cur = n.cps(t, env);
  for (;;) {
    bool changed = false;
    cur = n.simplify(cur, changed);
    if (!changed) return cur;
  }
}

}  // namespace adev
