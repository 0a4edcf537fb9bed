#include "adev/primitives.hpp"

#include <cmath>
#include <string>

#include "adev/extensions.hpp"

namespace adev {

namespace {

const Dual kOne{1, 0};
const Dual kZero{0, 0};

[[noreturn]] void no_runtime_semantics(Prim p) {
  throw RuntimeError(std::string(prim_name(p)) +
                     " has no direct runtime semantics; translate the program first");
}

double checked(double v, const char* op) {
  if (!std::isfinite(v)) {
    throw RuntimeError(std::string("non-finite value produced by ") + op);
  }
  return v;
}

const Value& arg(const std::vector<Value>& args, std::size_t i) { return args[i]; }

// Availability of a per-point continuation witness is decided by probing the
// continuation at one representative argument. A continuation whose witness
// availability varies across arguments raises when that point is evaluated.
Value continuation_witness(const Value& k, const Value& representative,
                           WitnessFn fn) {
  const WitVal& probe = parts_of(apply_value(k, representative))
                            .wit.as_witness("a witness");
  if (!probe.available()) return Value::witness_unavailable(probe.unavailable_reason);
  return Value::witness(std::move(fn));
}

// Shared by both flip variants: mix the two branch witnesses at the same
// point, weighted by the dual probabilities. No coordinate is consumed.
Value flip_witness(const Dual& dp, const Value& wit_true, const Value& wit_false) {
  const WitVal& wt = wit_true.as_witness("a witness");
  const WitVal& wf = wit_false.as_witness("a witness");
  if (!wt.available()) return Value::witness_unavailable(wt.unavailable_reason);
  if (!wf.available()) return Value::witness_unavailable(wf.unavailable_reason);
  WitnessFn ft = wt.fn;
  WitnessFn ff = wf.fn;
  return Value::witness([dp, ft, ff](const WitnessPoint& pt) {
    return add_d(mul_d(ft(pt), dp), mul_d(ff(pt), sub_d(kOne, dp)));
  });
}

Dual require_interval(const Value& v, const char* who) {
  Dual d = v.as_dual("a dual probability");
  if (!(d.primal > 0 && d.primal < 1)) {
    throw RuntimeError(std::string(who) + " needs a probability strictly inside (0, 1)");
  }
  return d;
}

Dual require_positive(const Value& v, const char* who) {
  Dual d = v.as_dual("a dual scale");
  if (!(d.primal > 0)) {
    throw RuntimeError(std::string(who) + " needs a positive parameter");
  }
  return d;
}

}  // namespace

Dual normal_pdf_dual(double x, const Dual& mu, const Dual& sigma) {
  static const double kInvSqrt2Pi = 0.3989422804014326779;
  Dual z = div_d(sub_d(Dual{x, 0}, mu), sigma);
  Dual bell = exp_d(scale_d(mul_d(z, z), -0.5));
  return div_d(scale_d(bell, kInvSqrt2Pi), sigma);
}

double normal_score_tangent(double x, const Dual& mu, const Dual& sigma) {
  Dual z = div_d(sub_d(Dual{x, 0}, mu), sigma);
  Dual lp = sub_d(scale_d(log_d(sigma), -1.0), scale_d(mul_d(z, z), 0.5));
  return lp.tangent;
}

ProbParts parts_of(const Value& v) {
  const PairVal& p = v.as_pair("an estimator/witness pair");
  return {p.first.as_estimator("a dual estimator").fn, p.second};
}

Dual run_witness(const Value& wit, const WitnessPoint& pt) {
  const WitVal& w = wit.as_witness("a witness");
  if (!w.available()) {
    throw RuntimeError("witness unavailable: " + w.unavailable_reason);
  }
  return w.fn(pt);
}

Value exact_pair(const Dual& d) {
  ensure_finite(d, "exact_D");
  EstimatorFn fn = [d](const Seed&) { return d; };
  WitnessFn wfn = [d](const WitnessPoint& pt) {
    if (pt.unit_leaf_weight) return d;
    return scale_d(d, normal_pdf(pt.real()));
  };
  return Value::pair(Value::estimator(fn), Value::witness(wfn));
}

int prim_arity(Prim p) {
  switch (p) {
    case Prim::Exp: case Prim::Log: case Prim::Sin: case Prim::Cos:
    case Prim::NatToReal: case Prim::Forget: case Prim::Exact:
    case Prim::ExpEst: case Prim::Expect: case Prim::FlipEnum:
    case Prim::FlipReinforce: case Prim::GeometricReinforce: case Prim::Addcost:
    case Prim::BernoulliDist: case Prim::ExponentialDist: case Prim::PoissonDist:
    case Prim::ExponentialCdf:
      return 1;
    case Prim::Sample:
      return 0;
    case Prim::Minibatch: case Prim::LeaveOneOut: case Prim::Importance:
      return 3;
    default:
      return 2;
  }
}

int prim_d_arity(PrimD p) {
  switch (p) {
    case PrimD::ExpD: case PrimD::LogD: case PrimD::SinD: case PrimD::CosD:
    case PrimD::NatToRealD: case PrimD::ForgetD: case PrimD::ExactD:
    case PrimD::ExpEstD: case PrimD::ExpectD: case PrimD::SampleD:
    case PrimD::BernoulliDistD: case PrimD::ExponentialDistD:
    case PrimD::PoissonDistD: case PrimD::ExponentialCdfD:
    case PrimD::FstStar: case PrimD::SndStar:
      return 1;
    case PrimD::MinibatchD: case PrimD::NormalReparamD: case PrimD::NormalReinforceD:
    case PrimD::LeaveOneOutD: case PrimD::ImportanceD:
      return 3;
    default:
      return 2;
  }
}

Value apply_primitive(Prim p, const std::vector<Value>& args, const EvalConfig& cfg) {
  (void)cfg;
  switch (p) {
    case Prim::PolyAdd: case Prim::PolySub: case Prim::PolyMul: case Prim::PolyDiv:
      throw RuntimeError("unresolved overloaded operator; type-check the program first");
    case Prim::AddReal:
      return Value::real(checked(
          arg(args, 0).as_real("a real") + arg(args, 1).as_real("a real"), "+"));
    case Prim::SubReal:
      return Value::real(checked(
          arg(args, 0).as_real("a real") - arg(args, 1).as_real("a real"), "-"));
    case Prim::MulReal:
      return Value::real(checked(
          arg(args, 0).as_real("a real") * arg(args, 1).as_real("a real"), "*"));
    case Prim::DivReal: {
      double d = arg(args, 1).as_real("a real");
      if (d == 0) throw RuntimeError("division by zero");
      return Value::real(checked(arg(args, 0).as_real("a real") / d, "/"));
    }
    case Prim::Exp:
      return Value::real(checked(std::exp(arg(args, 0).as_real("a real")), "exp"));
    case Prim::Log: {
      double x = arg(args, 0).as_real("a real");
      if (!(x > 0)) throw RuntimeError("log of a non-positive value");
      return Value::real(checked(std::log(x), "log"));
    }
    case Prim::Sin:
      return Value::real(std::sin(arg(args, 0).as_real("a real")));
    case Prim::Cos:
      return Value::real(std::cos(arg(args, 0).as_real("a real")));
    case Prim::Pow: {
      double x = arg(args, 0).as_real("a real");
      std::uint64_t n = arg(args, 1).as_nat("a natural exponent");
      double acc = 1;
      for (std::uint64_t i = 0; i < n; ++i) acc *= x;
      return Value::real(checked(acc, "pow"));
    }
    case Prim::NatToReal:
      return Value::real(static_cast<double>(arg(args, 0).as_nat("a natural")));
    case Prim::AddNat:
      return Value::nat(arg(args, 0).as_nat("a natural") + arg(args, 1).as_nat("a natural"));
    case Prim::SubNat: {
      std::uint64_t a = arg(args, 0).as_nat("a natural");
      std::uint64_t b = arg(args, 1).as_nat("a natural");
      return Value::nat(a >= b ? a - b : 0);  // truncated at zero
    }
    case Prim::MulNat:
      return Value::nat(arg(args, 0).as_nat("a natural") * arg(args, 1).as_nat("a natural"));
    case Prim::DivNat: {
      std::uint64_t b = arg(args, 1).as_nat("a natural");
      if (b == 0) throw RuntimeError("division by zero");
      return Value::nat(arg(args, 0).as_nat("a natural") / b);
    }
    case Prim::Leq: {
      if (arg(args, 0).is_nat() && arg(args, 1).is_nat()) {
        return Value::boolean(arg(args, 0).as_nat("a natural") <=
                              arg(args, 1).as_nat("a natural"));
      }
      return Value::boolean(arg(args, 0).as_real("a scalar") <=
                            arg(args, 1).as_real("a scalar"));
    }
    case Prim::Eq: {
      if (arg(args, 0).is_nat() && arg(args, 1).is_nat()) {
        return Value::boolean(arg(args, 0).as_nat("a natural") ==
                              arg(args, 1).as_nat("a natural"));
      }
      return Value::boolean(arg(args, 0).as_real("a scalar") ==
                            arg(args, 1).as_real("a scalar"));
    }
    default:
      no_runtime_semantics(p);
  }
}

Value apply_primitive_d(PrimD p, const std::vector<Value>& args, const EvalConfig& cfg) {
  switch (p) {
    case PrimD::AddD:
      return Value::dual(add_d(arg(args, 0).as_dual("a dual"), arg(args, 1).as_dual("a dual")));
    case PrimD::SubD:
      return Value::dual(sub_d(arg(args, 0).as_dual("a dual"), arg(args, 1).as_dual("a dual")));
    case PrimD::MulD:
      return Value::dual(mul_d(arg(args, 0).as_dual("a dual"), arg(args, 1).as_dual("a dual")));
    case PrimD::DivD:
      return Value::dual(div_d(arg(args, 0).as_dual("a dual"), arg(args, 1).as_dual("a dual")));
    case PrimD::ExpD:
      return Value::dual(exp_d(arg(args, 0).as_dual("a dual")));
    case PrimD::LogD:
      return Value::dual(log_d(arg(args, 0).as_dual("a dual")));
    case PrimD::SinD:
      return Value::dual(sin_d(arg(args, 0).as_dual("a dual")));
    case PrimD::CosD:
      return Value::dual(cos_d(arg(args, 0).as_dual("a dual")));
    case PrimD::PowD:
      return Value::dual(pow_d(arg(args, 0).as_dual("a dual"),
                               arg(args, 1).as_nat("a natural exponent")));
    case PrimD::NatToRealD:
      return Value::dual(Dual{static_cast<double>(arg(args, 0).as_nat("a natural")), 0});
    case PrimD::ForgetD:
      return Value::dual(Dual{arg(args, 0).as_real("a non-smooth scalar"), 0});

    case PrimD::ExactD:
      return exact_pair(arg(args, 0).as_dual("a dual"));

    case PrimD::PlusEstD: {
      ProbParts a = parts_of(arg(args, 0));
      ProbParts b = parts_of(arg(args, 1));
      EstimatorFn ea = a.est, eb = b.est;
      bool both = cfg.plus_est_both_arms;
      EstimatorFn fn = [ea, eb, both](const Seed& s) {
        auto [s1, s2] = s.split();
        if (both) return add_d(ea(s1), eb(s2));
        bool first = s1.uniform() < 0.5;
        Dual armv = first ? ea(s2) : eb(s2);
        return mul_d(Dual{2, 0}, armv);
      };
      return Value::pair(Value::estimator(fn),
                         Value::witness_unavailable("plus_est has no witness translation"));
    }

    case PrimD::TimesEstD: {
      ProbParts a = parts_of(arg(args, 0));
      ProbParts b = parts_of(arg(args, 1));
      EstimatorFn ea = a.est, eb = b.est;
      EstimatorFn fn = [ea, eb](const Seed& s) {
        auto [s1, s2] = s.split();
        return mul_d(ea(s1), eb(s2));
      };
      return Value::pair(Value::estimator(fn),
                         Value::witness_unavailable("times_est has no witness translation"));
    }

    case PrimD::ExpEstD: {
      ProbParts a = parts_of(arg(args, 0));
      EstimatorFn ea = a.est;
      double rate = cfg.exp_est_rate;
      if (!(rate > 0)) throw RuntimeError("exp_est order rate must be positive");
      EstimatorFn fn = [ea, rate](const Seed& s) {
        auto [s1, rest] = s.split();
        Dual dr = ea(s1);
        auto [sn, sx] = rest.split();
        std::uint64_t order = sample_poisson(rate, sn.uniform());
        double prod = std::exp(rate);
        Seed cursor = sx;
        for (std::uint64_t i = 0; i < order; ++i) {
          auto [draw, next] = cursor.split();
          prod *= ea(draw).primal / rate;
          cursor = next;
        }
        Dual out{prod, dr.tangent * prod};
        ensure_finite(out, "exp_est");
        return out;
      };
      return Value::pair(Value::estimator(fn),
                         Value::witness_unavailable("exp_est has no witness translation"));
    }

    case PrimD::MinibatchD: {
      std::uint64_t total = arg(args, 0).as_nat("a natural");
      std::uint64_t batch = arg(args, 1).as_nat("a natural");
      Value f = arg(args, 2);
      EstimatorFn fn = [total, batch, f](const Seed& s) {
        auto term = [&f](std::uint64_t i) {
          return apply_value(f, Value::nat(i)).as_dual("a summand");
        };
        if (total == 0) return kZero;
        if (batch == 0) {
          // Full deterministic sum; no randomness consumed.
          Dual acc = kZero;
          for (std::uint64_t i = 1; i <= total; ++i) acc = add_d(acc, term(i));
          return acc;
        }
        Dual acc = kZero;
        for (std::uint64_t j = 0; j < batch; ++j) {
          auto idx = static_cast<std::uint64_t>(s.derive(j).uniform() *
                                                static_cast<double>(total));
          if (idx >= total) idx = total - 1;
          acc = add_d(acc, term(idx + 1));
        }
        return scale_d(acc, static_cast<double>(total) / static_cast<double>(batch));
      };
      return Value::pair(Value::estimator(fn),
                         Value::witness_unavailable("minibatch has no witness translation"));
    }

    case PrimD::ExpectD:
      return apply_value(arg(args, 0), Value::prim_d(PrimD::ExactD, cfg));

    case PrimD::FstStar: case PrimD::SndStar: {
      EstimatorFn e = arg(args, 0).as_estimator("a dual estimator").fn;
      bool first = p == PrimD::FstStar;
      return Value::estimator([e, first](const Seed& s) {
        Dual d = e(s);
        return Dual{first ? d.primal : d.tangent, 0};
      });
    }

    case PrimD::FlipEnumD: {
      Dual dp = require_interval(arg(args, 0), "flip_enum");
      const Value& k = arg(args, 1);
      ProbParts on_true = parts_of(apply_value(k, Value::boolean(true)));
      ProbParts on_false = parts_of(apply_value(k, Value::boolean(false)));
      EstimatorFn et = on_true.est, ef = on_false.est;
      EstimatorFn fn = [dp, et, ef](const Seed& s) {
        auto [s1, s2] = s.split();
        return add_d(mul_d(dp, et(s1)), mul_d(sub_d(kOne, dp), ef(s2)));
      };
      return Value::pair(Value::estimator(fn),
                         flip_witness(dp, on_true.wit, on_false.wit));
    }

    case PrimD::FlipReinforceD: {
      Dual dp = require_interval(arg(args, 0), "flip_reinforce");
      const Value& k = arg(args, 1);
      ProbParts on_true = parts_of(apply_value(k, Value::boolean(true)));
      ProbParts on_false = parts_of(apply_value(k, Value::boolean(false)));
      EstimatorFn et = on_true.est, ef = on_false.est;
      EstimatorFn fn = [dp, et, ef](const Seed& s) {
        auto [s1, s2] = s.split();
        bool bit = s1.uniform() < dp.primal;
        Dual l = bit ? et(s2) : ef(s2);
        double score = bit ? log_d(dp).tangent : log_d(sub_d(kOne, dp)).tangent;
        return Dual{l.primal, l.tangent + l.primal * score};
      };
      return Value::pair(Value::estimator(fn),
                         flip_witness(dp, on_true.wit, on_false.wit));
    }

    case PrimD::SampleD: {
      Value k = arg(args, 0);
      EstimatorFn fn = [k](const Seed& s) {
        auto [s1, s2] = s.split();
        return parts_of(apply_value(k, Value::real(s1.uniform()))).est(s2);
      };
      WitnessFn wfn = [k](const WitnessPoint& pt) {
        auto [p1, p2] = pt.split();
        double x = p1.real();
        if (x <= 0 || x >= 1) return kZero;  // uniform density vanishes outside
        return run_witness(parts_of(apply_value(k, Value::real(x))).wit, p2);
      };
      return Value::pair(Value::estimator(fn),
                         continuation_witness(k, Value::real(0.5), wfn));
    }

    case PrimD::NormalReparamD: {
      Dual mu = arg(args, 0).as_dual("a dual mean");
      Dual sigma = require_positive(arg(args, 1), "normal_reparam");
      Value k = arg(args, 2);
      EstimatorFn fn = [mu, sigma, k](const Seed& s) {
        auto [s1, s2] = s.split();
        double eps = inv_normal_cdf(s1.uniform());
        Dual x = add_d(mul_d(Dual{eps, 0}, sigma), mu);
        return parts_of(apply_value(k, Value::dual(x))).est(s2);
      };
      WitnessFn wfn = [mu, sigma, k](const WitnessPoint& pt) {
        auto [p1, p2] = pt.split();
        double z = p1.real();
        Dual x = add_d(mul_d(Dual{z, 0}, sigma), mu);
        Dual w = run_witness(parts_of(apply_value(k, Value::dual(x))).wit, p2);
        return mul_d(Dual{normal_pdf(z), 0}, w);
      };
      return Value::pair(Value::estimator(fn),
                         continuation_witness(k, Value::dual(mu), wfn));
    }

    case PrimD::NormalReinforceD: {
      Dual mu = arg(args, 0).as_dual("a dual mean");
      Dual sigma = require_positive(arg(args, 1), "normal_reinforce");
      Value k = arg(args, 2);
      EstimatorFn fn = [mu, sigma, k](const Seed& s) {
        auto [s1, s2] = s.split();
        double x = mu.primal + sigma.primal * inv_normal_cdf(s1.uniform());
        Dual l = parts_of(apply_value(k, Value::real(x))).est(s2);
        double score = normal_score_tangent(x, mu, sigma);
        return Dual{l.primal, l.tangent + l.primal * score};
      };
      WitnessFn wfn = [mu, sigma, k](const WitnessPoint& pt) {
        auto [p1, p2] = pt.split();
        double x = p1.real();
        Dual w = run_witness(parts_of(apply_value(k, Value::real(x))).wit, p2);
        return mul_d(normal_pdf_dual(x, mu, sigma), w);
      };
      return Value::pair(Value::estimator(fn),
                         continuation_witness(k, Value::real(mu.primal), wfn));
    }

    case PrimD::GeometricReinforceD: {
      Dual dp = require_interval(arg(args, 0), "geometric_reinforce");
      Value k = arg(args, 1);
      EstimatorFn fn = [dp, k](const Seed& s) {
        auto [s1, s2] = s.split();
        std::uint64_t n = sample_geometric(dp.primal, s1.uniform());
        Dual l = parts_of(apply_value(k, Value::nat(n))).est(s2);
        double score = log_d(mul_d(pow_d(sub_d(kOne, dp), n), dp)).tangent;
        return Dual{l.primal, l.tangent + l.primal * score};
      };
      WitnessFn wfn = [dp, k](const WitnessPoint& pt) {
        auto [p1, p2] = pt.split();
        double r = p1.real();
        if (r < 0) return kZero;
        auto n = static_cast<std::uint64_t>(std::floor(r));
        Dual pdf = mul_d(pow_d(sub_d(kOne, dp), n), dp);
        Dual w = run_witness(parts_of(apply_value(k, Value::nat(n))).wit, p2);
        return mul_d(pdf, w);
      };
      return Value::pair(Value::estimator(fn),
                         continuation_witness(k, Value::nat(0), wfn));
    }

    case PrimD::BaselineD: case PrimD::AddcostD: case PrimD::ReinforceDensityD:
    case PrimD::LeaveOneOutD: case PrimD::ImportanceD: case PrimD::ImplicitReparamD:
    case PrimD::PoissonWeakD: case PrimD::BernoulliDistD: case PrimD::NormalDistD:
    case PrimD::ExponentialDistD: case PrimD::PoissonDistD: case PrimD::NormalCdfD:
    case PrimD::ExponentialCdfD:
      return apply_extension_d(p, args, cfg);
  }
  throw RuntimeError("unhandled target primitive");
}

}  // namespace adev
