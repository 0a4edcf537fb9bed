#include "adev/extensions.hpp"

#include <cmath>
#include <vector>

namespace adev {

namespace {

const Dual kOne{1, 0};

Value unavailable(const char* name) {
  return Value::witness_unavailable(std::string(name) + " has no witness translation");
}

Dual as_dual_arg(const Value& v, const char* what) { return v.as_dual(what); }

std::shared_ptr<const DensityDist> bernoulli_dist(const Dual& p) {
  if (!(p.primal > 0 && p.primal < 1)) {
    throw RuntimeError("bernoulli_d needs a probability strictly inside (0, 1)");
  }
  auto d = std::make_shared<DensityDist>();
  d->name = "bernoulli";
  d->sample = [p](const Seed& s) { return Value::boolean(s.uniform() < p.primal); };
  d->density = [p](const Value& v) {
    return v.as_bool("a boolean sample") ? p : sub_d(kOne, p);
  };
  d->log_density = [p](const Value& v) {
    return log_d(v.as_bool("a boolean sample") ? p : sub_d(kOne, p));
  };
  return d;
}

std::shared_ptr<const DensityDist> normal_dist(const Dual& mu, const Dual& sigma) {
  if (!(sigma.primal > 0)) throw RuntimeError("normal_d needs a positive scale");
  auto d = std::make_shared<DensityDist>();
  d->name = "normal";
  d->sample = [mu, sigma](const Seed& s) {
    return Value::real(mu.primal + sigma.primal * inv_normal_cdf(s.uniform()));
  };
  d->density = [mu, sigma](const Value& v) {
    return normal_pdf_dual(v.as_real("a real sample"), mu, sigma);
  };
  d->log_density = [mu, sigma](const Value& v) {
    return log_d(normal_pdf_dual(v.as_real("a real sample"), mu, sigma));
  };
  return d;
}

std::shared_ptr<const DensityDist> exponential_dist(const Dual& rate) {
  if (!(rate.primal > 0)) throw RuntimeError("exponential_d needs a positive rate");
  auto d = std::make_shared<DensityDist>();
  d->name = "exponential";
  d->sample = [rate](const Seed& s) {
    return Value::real(sample_exponential(rate.primal, s.uniform()));
  };
  auto dens = [rate](const Value& v) {
    double x = v.as_real("a real sample");
    if (x < 0) return Dual{0, 0};
    return mul_d(rate, exp_d(scale_d(rate, -x)));
  };
  d->density = dens;
  d->log_density = [dens](const Value& v) { return log_d(dens(v)); };
  return d;
}

std::shared_ptr<const DensityDist> poisson_dist(const Dual& rate) {
  if (!(rate.primal > 0)) throw RuntimeError("poisson_d needs a positive rate");
  auto d = std::make_shared<DensityDist>();
  d->name = "poisson";
  d->sample = [rate](const Seed& s) {
    return Value::nat(sample_poisson(rate.primal, s.uniform()));
  };
  auto logp = [rate](const Value& v) {
    auto n = static_cast<double>(v.as_nat("a natural sample"));
    Dual lp = sub_d(scale_d(log_d(rate), n), rate);
    return sub_d(lp, Dual{std::lgamma(n + 1), 0});
  };
  d->log_density = logp;
  d->density = [logp](const Value& v) { return exp_d(logp(v)); };
  return d;
}

std::shared_ptr<const CdfDist> normal_cdf_dist(const Dual& mu, const Dual& sigma) {
  if (!(sigma.primal > 0)) throw RuntimeError("normal_c needs a positive scale");
  auto c = std::make_shared<CdfDist>();
  c->name = "normal";
  c->sample = [mu, sigma](const Seed& s) {
    return mu.primal + sigma.primal * inv_normal_cdf(s.uniform());
  };
  c->cdf = [mu, sigma](const Dual& x, bool with_param_tangents) {
    Dual m = with_param_tangents ? mu : Dual{mu.primal, 0};
    Dual sg = with_param_tangents ? sigma : Dual{sigma.primal, 0};
    Dual z = div_d(sub_d(x, m), sg);
    return Dual{normal_cdf(z.primal), normal_pdf(z.primal) * z.tangent};
  };
  return c;
}

std::shared_ptr<const CdfDist> exponential_cdf_dist(const Dual& rate) {
  if (!(rate.primal > 0)) throw RuntimeError("exponential_c needs a positive rate");
  auto c = std::make_shared<CdfDist>();
  c->name = "exponential";
  c->sample = [rate](const Seed& s) {
    return sample_exponential(rate.primal, s.uniform());
  };
  c->cdf = [rate](const Dual& x, bool with_param_tangents) {
    Dual lam = with_param_tangents ? rate : Dual{rate.primal, 0};
    if (x.primal < 0) return Dual{0, 0};
    return sub_d(kOne, exp_d(scale_d(mul_d(lam, x), -1.0)));
  };
  return c;
}

}  // namespace

Value apply_extension_d(PrimD p, const std::vector<Value>& args, const EvalConfig& cfg) {
  (void)cfg;
  switch (p) {
    case PrimD::BaselineD: {
      // Subtract the control before the leaf, add it back outside: the score
      // multiplies the centered return only.
      Dual control = as_dual_arg(args[1], "a dual baseline");
      Value center = Value::native("baseline-center", [control](const Value& dx) {
        return exact_pair(sub_d(dx.as_dual("a dual return"), control));
      });
      ProbParts inner = parts_of(apply_value(args[0], center));
      EstimatorFn ie = inner.est;
      EstimatorFn fn = [ie, control](const Seed& s) {
        return add_d(ie(s), control);
      };
      return Value::pair(Value::estimator(fn), unavailable("baseline"));
    }

    case PrimD::AddcostD: {
      // Cost attaches outside the continuation's estimator, so scores sampled
      // later never multiply costs recorded earlier.
      Dual cost = as_dual_arg(args[0], "a dual cost");
      Value k = args[1];
      EstimatorFn fn = [cost, k](const Seed& s) {
        return add_d(parts_of(apply_value(k, Value::unit())).est(s), cost);
      };
      return Value::pair(Value::estimator(fn), unavailable("addcost"));
    }

    case PrimD::ReinforceDensityD: {
      Value dv = args[0];
      Value k = args[1];
      EstimatorFn fn = [dv, k](const Seed& s) {
        const DensityDist& d = dv.as_dist("a distribution");
        auto [s1, s2] = s.split();
        Value x = d.sample(s1);
        Dual l = parts_of(apply_value(k, x)).est(s2);
        double score = d.log_density(x).tangent;
        return Dual{l.primal, score * l.primal + l.tangent};
      };
      return Value::pair(Value::estimator(fn), unavailable("reinforce_density"));
    }

    case PrimD::LeaveOneOutD: {
      std::uint64_t particles = args[0].as_nat("a particle count");
      if (particles < 2) throw RuntimeError("leave_one_out needs at least two particles");
      Value dv = args[1];
      Value k = args[2];
      EstimatorFn fn = [particles, dv, k](const Seed& s) {
        const DensityDist& d = dv.as_dist("a distribution");
        std::vector<double> value(particles), tangent(particles), score(particles);
        double sum = 0;
        for (std::uint64_t i = 0; i < particles; ++i) {
          auto [sx, sk] = s.derive(i).split();
          Value x = d.sample(sx);
          Dual l = parts_of(apply_value(k, x)).est(sk);
          value[i] = l.primal;
          tangent[i] = l.tangent;
          score[i] = d.log_density(x).tangent;
          sum += l.primal;
        }
        double grad = 0;
        for (std::uint64_t i = 0; i < particles; ++i) {
          double others = (sum - value[i]) / static_cast<double>(particles - 1);
          grad += score[i] * (value[i] - others) + tangent[i];
        }
        auto n = static_cast<double>(particles);
        Dual out{sum / n, grad / n};
        ensure_finite(out, "leave_one_out");
        return out;
      };
      return Value::pair(Value::estimator(fn), unavailable("leave_one_out"));
    }

    case PrimD::ImportanceD: {
      Value pv = args[0];
      Value qv = args[1];
      Value k = args[2];
      EstimatorFn fn = [pv, qv, k](const Seed& s) {
        const DensityDist& target = pv.as_dist("a distribution");
        const DensityDist& proposal = qv.as_dist("a distribution");
        auto [s1, s2] = s.split();
        Value x = proposal.sample(s1);
        // Proposal enters primally; with target == proposal this reduces
        // bit-for-bit to the reinforce-density estimator.
        Dual weight = div_by_scalar_d(target.density(x), proposal.density(x).primal);
        Dual l = parts_of(apply_value(k, x)).est(s2);
        return mul_d(weight, l);
      };
      return Value::pair(Value::estimator(fn), unavailable("importance"));
    }

    case PrimD::ImplicitReparamD: {
      Value cv = args[0];
      Value k = args[1];
      EstimatorFn fn = [cv, k](const Seed& s) {
        const CdfDist& c = cv.as_cdf("a parametric CDF");
        auto [s1, s2] = s.split();
        double x = c.sample(s1);
        double dtheta = c.cdf(Dual{x, 0}, true).tangent;
        double dx = c.cdf(Dual{x, 1}, false).tangent;
        if (dx == 0) throw RuntimeError("implicit_reparam needs a positive density at the sample");
        Dual point{x, -dtheta / dx};
        ensure_finite(point, "implicit_reparam");
        return parts_of(apply_value(k, Value::dual(point))).est(s2);
      };
      return Value::pair(Value::estimator(fn), unavailable("implicit_reparam"));
    }

    case PrimD::PoissonWeakD: {
      Dual rate = args[0].as_dual("a dual rate");
      if (!(rate.primal > 0)) throw RuntimeError("poisson_weak needs a positive rate");
      Value k = args[1];
      EstimatorFn fn = [rate, k](const Seed& s) {
        auto [s1, s2] = s.split();
        std::uint64_t low = sample_poisson(rate.primal, s1.uniform());
        // Both arms reuse the same stream, so their draws are correlated.
        Dual at_low = parts_of(apply_value(k, Value::nat(low))).est(s2);
        Dual at_high = parts_of(apply_value(k, Value::nat(low + 1))).est(s2);
        Dual out{at_low.primal,
                 at_low.tangent + (at_high.primal - at_low.primal) * rate.tangent};
        ensure_finite(out, "poisson_weak");
        return out;
      };
      return Value::pair(Value::estimator(fn), unavailable("poisson_weak"));
    }

    case PrimD::BernoulliDistD:
      return Value::dist(bernoulli_dist(args[0].as_dual("a dual probability")));
    case PrimD::NormalDistD:
      return Value::dist(normal_dist(args[0].as_dual("a dual mean"),
                                     args[1].as_dual("a dual scale")));
    case PrimD::ExponentialDistD:
      return Value::dist(exponential_dist(args[0].as_dual("a dual rate")));
    case PrimD::PoissonDistD:
      return Value::dist(poisson_dist(args[0].as_dual("a dual rate")));
    case PrimD::NormalCdfD:
      return Value::cdf_dist(normal_cdf_dist(args[0].as_dual("a dual mean"),
                                             args[1].as_dual("a dual scale")));
    case PrimD::ExponentialCdfD:
      return Value::cdf_dist(exponential_cdf_dist(args[0].as_dual("a dual rate")));

    default:
      throw RuntimeError("primitive is not an estimator extension");
  }
}

}  // namespace adev
