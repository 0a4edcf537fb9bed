#include "adev/runtime.hpp"

#include <cmath>
#include <limits>

#include "adev/primitives.hpp"

namespace adev {

// --- dual arithmetic ---------------------------------------------------------

void ensure_finite(const Dual& d, const char* op) {
  if (!std::isfinite(d.primal) || !std::isfinite(d.tangent)) {
    throw RuntimeError(std::string("non-finite value produced by ") + op);
  }
}

Dual add_d(const Dual& x, const Dual& y) {
  Dual r{x.primal + y.primal, x.tangent + y.tangent};
  ensure_finite(r, "+_D");
  return r;
}

Dual sub_d(const Dual& x, const Dual& y) {
  Dual r{x.primal - y.primal, x.tangent - y.tangent};
  ensure_finite(r, "-_D");
  return r;
}

Dual mul_d(const Dual& x, const Dual& y) {
  Dual r{x.primal * y.primal, x.tangent * y.primal + x.primal * y.tangent};
  ensure_finite(r, "*_D");
  return r;
}

Dual div_d(const Dual& x, const Dual& y) {
  if (y.primal == 0) throw RuntimeError("division by zero in /_D");
  Dual r{x.primal / y.primal,
         (x.tangent * y.primal - x.primal * y.tangent) / (y.primal * y.primal)};
  ensure_finite(r, "/_D");
  return r;
}

Dual exp_d(const Dual& x) {
  double e = std::exp(x.primal);
  Dual r{e, e * x.tangent};
  ensure_finite(r, "exp_D");
  return r;
}

Dual log_d(const Dual& x) {
  if (!(x.primal > 0)) throw RuntimeError("log_D of a non-positive primal");
  Dual r{std::log(x.primal), x.tangent / x.primal};
  ensure_finite(r, "log_D");
  return r;
}

Dual sin_d(const Dual& x) {
  Dual r{std::sin(x.primal), std::cos(x.primal) * x.tangent};
  ensure_finite(r, "sin_D");
  return r;
}

Dual cos_d(const Dual& x) {
  Dual r{std::cos(x.primal), -std::sin(x.primal) * x.tangent};
  ensure_finite(r, "cos_D");
  return r;
}

Dual pow_d(const Dual& x, std::uint64_t n) {
  Dual acc{1, 0};
  for (std::uint64_t i = 0; i < n; ++i) acc = mul_d(acc, x);
  return acc;
}

Dual scale_d(const Dual& x, double c) {
  Dual r{x.primal * c, x.tangent * c};
  ensure_finite(r, "scale");
  return r;
}

Dual div_by_scalar_d(const Dual& x, double c) {
  if (c == 0) throw RuntimeError("division by zero in /_D");
  Dual r{x.primal / c, x.tangent / c};
  ensure_finite(r, "/_D");
  return r;
}

// --- seeds --------------------------------------------------------------------

namespace {

constexpr std::uint64_t kDrawSalt = 0xA0761D6478BD642FULL;
constexpr std::uint64_t kLeftSalt = 0xE7037ED1A0B428DBULL;
constexpr std::uint64_t kRightSalt = 0x8EBC6AF09C88C6E3ULL;
constexpr std::uint64_t kDeriveSalt = 0x589965CC75374CC3ULL;

std::uint64_t mix64(std::uint64_t x) {
  std::uint64_t z = x + 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double bits_to_unit(std::uint64_t bits) {
  // 53 high bits, offset by half a step: strictly inside (0, 1).
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

double Seed::uniform() const {
  if (forced_) return sigmoid(*forced_);
  return bits_to_unit(mix64(key_ ^ mix64(counter_ + kDrawSalt)));
}

Seed Seed::next() const {
  Seed s(key_);
  s.counter_ = counter_ + 1;
  return s;
}

std::pair<Seed, Seed> Seed::split() const {
  Seed l(mix64(key_ ^ mix64(counter_ + kLeftSalt)));
  Seed r(mix64(key_ ^ mix64(counter_ + kRightSalt)));
  l.forced_ = forced_;
  return {l, r};
}

Seed Seed::derive(std::uint64_t index) const {
  return Seed(mix64(mix64(key_ + counter_) ^ mix64(index + kDeriveSalt)));
}

double Seed::real_view() const {
  if (forced_) return *forced_;
  double u = uniform();
  return std::log(u) - std::log1p(-u);
}

Seed Seed::with_real_view(double r, const Seed& rest) {
  Seed s = rest;
  s.forced_ = r;
  return s;
}

// --- scalar distributions -------------------------------------------------------

double inv_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw RuntimeError("inverse normal CDF requires an argument in (0, 1)");
  }
  const double q = p - 0.5;
  double r;
  if (std::fabs(q) <= 0.425) {
    r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                 6.7265770927008700853e+4) *
                    r +
                4.5921953931549871457e+4) *
                   r +
               1.3731693765509461125e+4) *
                  r +
              1.9715909503065514427e+3) *
                 r +
             1.3314166789178437745e+2) *
                r +
            3.3871328727963666080e+0) /
           (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                 3.9307895800092710610e+4) *
                    r +
                2.1213794301586595867e+4) *
                   r +
               5.3941960214247511077e+3) *
                  r +
              6.8718700749205790830e+2) *
                 r +
             4.2313330701600911252e+1) *
                r +
            1.0);
  }
  r = q < 0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double value;
  if (r <= 5.0) {
    r -= 1.6;
    value = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) *
                     r +
                 1.27045825245236838258e+0) *
                    r +
                3.64784832476320460504e+0) *
                   r +
               5.76949722146069140550e+0) *
                  r +
              4.63033784615654529590e+0) *
                 r +
             1.42343711074968357734e+0) /
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) *
                     r +
                 1.48103976427480074590e-1) *
                    r +
                6.89767334985100004550e-1) *
                   r +
               1.67638483018380384940e+0) *
                  r +
              2.05319162663775882187e+0) *
                 r +
             1.0);
  } else {
    r -= 5.0;
    value = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) *
                     r +
                 2.65321895265761230930e-2) *
                    r +
                2.96560571828504891230e-1) *
                   r +
               1.78482653991729133580e+0) *
                  r +
              5.46378491116411436990e+0) *
                 r +
             6.65790464350110377720e+0) /
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) *
                     r +
                 7.86869131145613259100e-4) *
                    r +
                1.48753612908506148525e-2) *
                   r +
               1.36929880922735805310e-1) *
                  r +
              5.99832206555887937690e-1) *
                 r +
             1.0);
  }
  return q < 0 ? -value : value;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_pdf(double z) {
  static const double kInvSqrt2Pi = 0.3989422804014326779;
  return kInvSqrt2Pi * std::exp(-0.5 * z * z);
}

double sample_normal(double mu, double sigma, double u) {
  return mu + sigma * inv_normal_cdf(u);
}

double sample_exponential(double rate, double u) {
  if (!(rate > 0)) throw RuntimeError("exponential rate must be positive");
  return -std::log1p(-u) / rate;
}

std::uint64_t sample_poisson(double rate, double u) {
  if (!(rate > 0)) throw RuntimeError("poisson rate must be positive");
  double p = std::exp(-rate);
  double cum = p;
  std::uint64_t n = 0;
  while (u > cum) {
    ++n;
    if (n > 100000000ULL) throw RuntimeError("poisson inversion did not terminate");
    p *= rate / static_cast<double>(n);
    cum += p;
  }
  return n;
}

std::uint64_t sample_geometric(double p, double u) {
  if (!(p > 0 && p < 1)) throw RuntimeError("geometric parameter must lie in (0, 1)");
  double n = std::floor(std::log1p(-u) / std::log1p(-p));
  if (!(n >= 0)) n = 0;
  return static_cast<std::uint64_t>(n);
}

// --- values ---------------------------------------------------------------------

Value Value::pair(Value a, Value b) {
  Value v;
  v.data_ = std::make_shared<const PairVal>(PairVal{std::move(a), std::move(b)});
  return v;
}

Value Value::closure(Env env, std::string param, TermPtr body, EvalConfig cfg) {
  Value v;
  v.data_ = std::make_shared<const ClosureVal>(
      ClosureVal{std::move(env), std::move(param), std::move(body), cfg});
  return v;
}

Value Value::native(std::string name, std::function<Value(const Value&)> fn) {
  Value v;
  v.data_ = std::make_shared<const NativeVal>(NativeVal{std::move(name), std::move(fn)});
  return v;
}

Value Value::prim(Prim p, EvalConfig cfg) {
  PrimAppVal app;
  app.is_d = false;
  app.p = p;
  app.arity = prim_arity(p);
  app.cfg = cfg;
  Value v;
  v.data_ = std::make_shared<const PrimAppVal>(std::move(app));
  return v;
}

Value Value::prim_d(PrimD p, EvalConfig cfg) {
  PrimAppVal app;
  app.is_d = true;
  app.d = p;
  app.arity = prim_d_arity(p);
  app.cfg = cfg;
  Value v;
  v.data_ = std::make_shared<const PrimAppVal>(std::move(app));
  return v;
}

Value Value::estimator(EstimatorFn fn) {
  Value v;
  v.data_ = std::make_shared<const EstVal>(EstVal{std::move(fn)});
  return v;
}

Value Value::witness(WitnessFn fn) {
  Value v;
  v.data_ = std::make_shared<const WitVal>(WitVal{std::move(fn), {}});
  return v;
}

Value Value::witness_unavailable(std::string reason) {
  Value v;
  v.data_ = std::make_shared<const WitVal>(WitVal{{}, std::move(reason)});
  return v;
}

Value Value::dist(std::shared_ptr<const DensityDist> d) {
  Value v;
  v.data_ = std::move(d);
  return v;
}

Value Value::cdf_dist(std::shared_ptr<const CdfDist> c) {
  Value v;
  v.data_ = std::move(c);
  return v;
}

bool Value::is_pair() const {
  return std::holds_alternative<std::shared_ptr<const PairVal>>(data_);
}
bool Value::is_estimator() const {
  return std::holds_alternative<std::shared_ptr<const EstVal>>(data_);
}
bool Value::is_witness() const {
  return std::holds_alternative<std::shared_ptr<const WitVal>>(data_);
}
bool Value::is_dist() const {
  return std::holds_alternative<std::shared_ptr<const DensityDist>>(data_);
}
bool Value::is_cdf() const {
  return std::holds_alternative<std::shared_ptr<const CdfDist>>(data_);
}
bool Value::is_callable() const {
  return std::holds_alternative<std::shared_ptr<const ClosureVal>>(data_) ||
         std::holds_alternative<std::shared_ptr<const NativeVal>>(data_) ||
         std::holds_alternative<std::shared_ptr<const PrimAppVal>>(data_);
}

namespace {

[[noreturn]] void expected(const char* what, const Value& got) {
  throw RuntimeError(std::string("expected ") + what + ", got " + got.describe());
}

}  // namespace

bool Value::as_bool(const char* what) const {
  if (auto* b = std::get_if<bool>(&data_)) return *b;
  expected(what, *this);
}

std::uint64_t Value::as_nat(const char* what) const {
  if (auto* n = std::get_if<std::uint64_t>(&data_)) return *n;
  expected(what, *this);
}

double Value::as_real(const char* what) const {
  if (auto* r = std::get_if<double>(&data_)) return *r;
  expected(what, *this);
}

Dual Value::as_dual(const char* what) const {
  if (auto* d = std::get_if<Dual>(&data_)) return *d;
  expected(what, *this);
}

const PairVal& Value::as_pair(const char* what) const {
  if (auto* p = std::get_if<std::shared_ptr<const PairVal>>(&data_)) return **p;
  expected(what, *this);
}

const EstVal& Value::as_estimator(const char* what) const {
  if (auto* e = std::get_if<std::shared_ptr<const EstVal>>(&data_)) return **e;
  expected(what, *this);
}

const WitVal& Value::as_witness(const char* what) const {
  if (auto* w = std::get_if<std::shared_ptr<const WitVal>>(&data_)) return **w;
  expected(what, *this);
}

const DensityDist& Value::as_dist(const char* what) const {
  if (auto* d = std::get_if<std::shared_ptr<const DensityDist>>(&data_)) return **d;
  expected(what, *this);
}

const CdfDist& Value::as_cdf(const char* what) const {
  if (auto* c = std::get_if<std::shared_ptr<const CdfDist>>(&data_)) return **c;
  expected(what, *this);
}

std::string Value::describe() const {
  switch (data_.index()) {
    case 0: return "unit";
    case 1: return "a boolean";
    case 2: return "a natural";
    case 3: return "a real";
    case 4: return "a dual number";
    case 5: return "a pair";
    case 6: return "a function";
    case 7: return "a function";
    case 8: {
      const auto& app = *std::get<std::shared_ptr<const PrimAppVal>>(data_);
      std::string name = app.is_d ? prim_name(app.d) : prim_name(app.p);
      return "the primitive " + name;
    }
    case 9: return "an estimator";
    case 10: return "a witness";
    case 11: return "a distribution";
    case 12: return "a parametric CDF";
  }
  return "a value";
}

Env Env::extend(std::string name, Value v) const {
  Env e;
  e.head_ = std::make_shared<const Node>(Node{std::move(name), std::move(v), head_});
  return e;
}

const Value* Env::lookup(const std::string& name) const {
  for (const Node* n = head_.get(); n != nullptr; n = n->next.get()) {
    if (n->name == name) return &n->value;
  }
  return nullptr;
}

// --- evaluation ------------------------------------------------------------------

Value apply_value(const Value& f, const Value& x) {
  if (auto* c = std::get_if<std::shared_ptr<const ClosureVal>>(&f.data_)) {
    const ClosureVal& cl = **c;
    return eval(cl.env.extend(cl.param, x), cl.body, Seed(0), cl.cfg);
  }
  if (auto* n = std::get_if<std::shared_ptr<const NativeVal>>(&f.data_)) {
    return (*n)->fn(x);
  }
  if (auto* p = std::get_if<std::shared_ptr<const PrimAppVal>>(&f.data_)) {
    PrimAppVal app = **p;
    app.args.push_back(x);
    if (static_cast<int>(app.args.size()) == app.arity) {
      return app.is_d ? apply_primitive_d(app.d, app.args, app.cfg)
                      : apply_primitive(app.p, app.args, app.cfg);
    }
    Value v = f;
    v.data_ = std::make_shared<const PrimAppVal>(std::move(app));
    return v;
  }
  throw RuntimeError("application of a non-function (" + f.describe() + ")");
}

Value eval(const Env& env, const TermPtr& t, const Seed& s, const EvalConfig& cfg) {
  switch (t->kind) {
    case Term::Kind::Unit:
      return Value::unit();
    case Term::Kind::NumLit:
      return Value::real(t->num);
    case Term::Kind::NatLit:
      return Value::nat(t->nat);
    case Term::Kind::BoolLit:
      return Value::boolean(t->truth);
    case Term::Kind::Var: {
      if (const Value* v = env.lookup(t->name)) return *v;
      throw RuntimeError("unbound variable '" + t->name + "'");
    }
    case Term::Kind::PrimRef: {
      if (prim_arity(t->prim) == 0) return apply_primitive(t->prim, {}, cfg);
      return Value::prim(t->prim, cfg);
    }
    case Term::Kind::PrimDRef: {
      if (prim_d_arity(t->prim_d) == 0) return apply_primitive_d(t->prim_d, {}, cfg);
      return Value::prim_d(t->prim_d, cfg);
    }
    case Term::Kind::Lambda:
      return Value::closure(env, t->name, t->a, cfg);
    case Term::Kind::App: {
      Value f = eval(env, t->a, s, cfg);
      Value x = eval(env, t->b, s, cfg);
      return apply_value(f, x);
    }
    case Term::Kind::Let: {
      Value v = eval(env, t->a, s, cfg);
      return eval(env.extend(t->name, v), t->b, s, cfg);
    }
    case Term::Kind::If: {
      bool c = eval(env, t->a, s, cfg).as_bool("a boolean condition");
      return eval(env, c ? t->b : t->c, s, cfg);
    }
    case Term::Kind::Pair:
      return Value::pair(eval(env, t->a, s, cfg), eval(env, t->b, s, cfg));
    case Term::Kind::DualLit: {
      double primal = eval(env, t->a, s, cfg).as_real("a real primal component");
      double tangent = eval(env, t->b, s, cfg).as_real("a real tangent component");
      return Value::dual(Dual{primal, tangent});
    }
    case Term::Kind::Fst: {
      Value v = eval(env, t->a, s, cfg);
      if (v.is_dual()) return Value::real(v.as_dual("a dual").primal);
      return v.as_pair("a pair").first;
    }
    case Term::Kind::Snd: {
      Value v = eval(env, t->a, s, cfg);
      if (v.is_dual()) return Value::real(v.as_dual("a dual").tangent);
      return v.as_pair("a pair").second;
    }
    case Term::Kind::ReturnD: {
      Value v = eval(env, t->a, s, cfg);
      return Value::native("return_D",
                           [v](const Value& k) { return apply_value(k, v); });
    }
    case Term::Kind::DoD: {
      auto items = std::make_shared<const std::vector<Term::DoItem>>(t->items);
      TermPtr tail = t->tail;
      Seed s0 = s;
      EvalConfig cfg0 = cfg;
      auto step = std::make_shared<
          std::function<Value(std::size_t, Env, const Value&)>>();
      *step = [items, tail, s0, cfg0, step](std::size_t i, Env e,
                                            const Value& k) -> Value {
        if (i == items->size()) return apply_value(eval(e, tail, s0, cfg0), k);
        const Term::DoItem& item = (*items)[i];
        if (item.kind != Term::DoItem::Kind::Bind) {
          throw RuntimeError("do-block must be desugared before evaluation");
        }
        Value m = eval(e, item.value, s0, cfg0);
        std::string name = item.name;
        Value cont = Value::native(
            "do-bind", [step, i, e, name, k](const Value& x) {
              return (*step)(i + 1, e.extend(name, x), k);
            });
        return apply_value(m, cont);
      };
      Env base = env;
      return Value::native("do-block", [step, base](const Value& k) {
        return (*step)(0, base, k);
      });
    }
    case Term::Kind::Return:
    case Term::Kind::Do:
      throw RuntimeError(
          "probabilistic source term reached the runtime; translate it first");
  }
  throw RuntimeError("unhandled term kind in eval");
}

Dual sample_estimator(const Value& est, const Seed& s) {
  const EstVal* e = nullptr;
  if (est.is_estimator()) {
    e = &est.as_estimator("an estimator");
  } else if (est.is_pair()) {
    e = &est.as_pair("an estimator pair").first.as_estimator("an estimator");
  } else {
    throw RuntimeError("expected an estimator, got " + est.describe());
  }
  Dual r = e->fn(s);
  ensure_finite(r, "estimator sample");
  return r;
}

}  // namespace adev
