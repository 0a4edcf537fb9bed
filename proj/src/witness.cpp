#include "adev/witness.hpp"

#include <cmath>
#include <utility>
#include <vector>

#include "adev/primitives.hpp"

namespace adev {

namespace {

// Gauss-Legendre nodes and weights on (0, 1).
std::vector<std::pair<double, double>> legendre_rule(int n) {
  std::vector<std::pair<double, double>> rule(n);
  for (int i = 1; i <= n; ++i) {
    double x = std::cos(M_PI * (i - 0.25) / (n + 0.5));
    double dp = 0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double pk = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      dp = n * (x * p1 - p0) / (x * x - 1);
      double step = p1 / dp;
      x -= step;
      if (std::fabs(step) < 1e-15) break;
    }
    double w = 2.0 / ((1 - x * x) * dp * dp);
    rule[i - 1] = {(x + 1) / 2, w / 2};
  }
  return rule;
}

Value witness_at(const TermPtr& translated, double theta, const EvalConfig& cfg) {
  return parts_of(translated_pair_at(translated, theta, cfg)).wit;
}

}  // namespace

Value translated_pair_at(const TermPtr& translated, double theta,
                         const EvalConfig& cfg) {
  Env empty;
  Value fn = eval(empty, translated, Seed(0), cfg);
  return apply_value(fn, Value::dual(Dual{theta, 1}));
}

WitnessProbeReport probe_witness(const TermPtr& translated, double theta,
                                 const WitnessProbeConfig& pc,
                                 const EvalConfig& cfg) {
  WitnessProbeReport report;
  report.points = pc.points;

  Value at_theta = witness_at(translated, theta, cfg);
  const WitVal& w = at_theta.as_witness("a witness");
  if (!w.available()) {
    report.unavailable_reason = w.unavailable_reason;
    return report;
  }
  report.available = true;

  Value plus = witness_at(translated, theta + pc.fd_step, cfg);
  Value minus = witness_at(translated, theta - pc.fd_step, cfg);
  Value shifted = witness_at(translated, theta + pc.theta_step, cfg);

  Seed base(pc.seed);
  for (int i = 0; i < pc.points; ++i) {
    WitnessPoint pt{base.derive(static_cast<std::uint64_t>(i)), false};
    Dual here = run_witness(at_theta, pt);
    double fd = (run_witness(plus, pt).primal - run_witness(minus, pt).primal) /
                (2 * pc.fd_step);
    double err = std::fabs(here.tangent - fd);
    if (err > report.max_fd_error) report.max_fd_error = err;
    double jump = std::fabs(run_witness(shifted, pt).primal - here.primal);
    if (jump > report.max_theta_jump) report.max_theta_jump = jump;
  }
  report.fd_ok = report.max_fd_error <= pc.fd_tol;
  report.continuity_ok = report.max_theta_jump <= pc.theta_tol;
  return report;
}

double integrate_witness(const TermPtr& translated, double theta, int nodes,
                         const EvalConfig& cfg) {
  Value wit = witness_at(translated, theta, cfg);
  Seed base(0);
  double acc = 0;
  for (const auto& [u, w] : legendre_rule(nodes)) {
    WitnessPoint pt{Seed::with_real_view(u, base), true};
    acc += w * run_witness(wit, pt).primal;
  }
  return acc;
}

double integrate_estimator(const TermPtr& translated, double theta, int nodes,
                           const EvalConfig& cfg) {
  Value pair = translated_pair_at(translated, theta, cfg);
  EstimatorFn est = parts_of(pair).est;
  Seed base(0);
  double acc = 0;
  for (const auto& [u, w] : legendre_rule(nodes)) {
    // Forcing the real view to logit(u) forces the first uniform to u.
    double real = std::log(u) - std::log1p(-u);
    acc += w * est(Seed::with_real_view(real, base)).primal;
  }
  return acc;
}

}  // namespace adev
