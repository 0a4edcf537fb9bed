#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <string>

#include "adev/extensions.hpp"
#include "adev/harness.hpp"
#include "adev/primitives.hpp"
#include "test_util.hpp"

using namespace adev;

namespace {

Compiled from_corpus(const std::string& stem) {
  return compile_program(testutil::load_corpus(stem));
}

Compiled compiled(const std::string& src) {
  return compile_program(parse_program(src, "inline"));
}

McResult grad_mc(const Compiled& c, double theta, std::uint64_t n) {
  return mc_mean(c.gradient_estimator(theta), McConfig{n, 20260814, 1});
}

McResult value_mc(const Compiled& c, double theta, std::uint64_t n) {
  return mc_mean(c.primal_estimator(theta), McConfig{n, 20260814, 1});
}

void expect_near(const McResult& r, double oracle) {
  double tol = std::max(4 * r.stderr_of_mean, 1e-3);
  CAPTURE(r.mean);
  CAPTURE(r.stderr_of_mean);
  CAPTURE(oracle);
  CHECK(std::fabs(r.mean - oracle) <= tol);
}

}  // namespace

TEST_CASE("baseline recenters without changing the gradient") {
  Compiled c = from_corpus("baseline_prog");
  expect_near(grad_mc(c, 0.3, 50000), -0.2);
  expect_near(value_mc(c, 0.3, 50000), 9.895);
}

TEST_CASE("baseline shrinks reinforce variance on shifted returns") {
  McResult with = grad_mc(from_corpus("baseline_prog"), 0.3, 50000);
  McResult without = grad_mc(from_corpus("flip_shifted_reinforce"), 0.3, 50000);
  expect_near(without, -0.2);
  CHECK(with.stderr_of_mean < without.stderr_of_mean);
  // The gap is decades, not percent.
  CHECK(with.stderr_of_mean * 10 < without.stderr_of_mean);
}

TEST_CASE("costs accumulate with the gradient of the tail") {
  Compiled c = from_corpus("addcost_prog");
  expect_near(grad_mc(c, 0.3, 100000), 1.6);
  expect_near(value_mc(c, 0.3, 50000), 1.39);
}

TEST_CASE("per-step costs give tighter credit than a monolithic return") {
  Compiled credit = from_corpus("two_step_credit");
  Compiled mono = from_corpus("two_step_monolithic");
  McResult rc = grad_mc(credit, 0.3, 100000);
  McResult rm = grad_mc(mono, 0.3, 100000);
  expect_near(rc, 1.6);
  expect_near(rm, 1.6);
  expect_near(value_mc(credit, 0.3, 50000), 5.39);
  expect_near(value_mc(mono, 0.3, 50000), 5.39);
  CHECK(rc.stderr_of_mean < rm.stderr_of_mean);
}

TEST_CASE("reinforce_density generalizes the builtin score estimators") {
  expect_near(grad_mc(from_corpus("reinforce_density_normal"), 2.0, 100000),
              -0.24197072451914337);
  expect_near(grad_mc(from_corpus("reinforce_density_bernoulli"), 0.3, 100000),
              -0.2);
}

TEST_CASE("leave-one-out baselines keep the mean") {
  Compiled c = from_corpus("leave_one_out_prog");
  expect_near(grad_mc(c, 0.3, 50000), -0.2);
  expect_near(value_mc(c, 0.3, 50000), 9.895);
}

TEST_CASE("leave_one_out needs two particles at runtime too") {
  // A non-literal count dodges the static check and fails at construction.
  Compiled c = compiled(
      "\\theta : I. (\\n : N. leave_one_out n (bernoulli_d theta)"
      " (\\b : B. exact (if b then 1 else 0))) 1");
  CHECK_THROWS_AS(c.gradient_estimator(0.3), RuntimeError);
}

TEST_CASE("importance reweights a mismatched proposal") {
  Compiled c = from_corpus("importance_prog");
  expect_near(grad_mc(c, 1.0, 100000), 1.0);
  expect_near(value_mc(c, 1.0, 100000), 1.0);
}

TEST_CASE("importance with the target as proposal matches reinforce_density") {
  struct Pair {
    std::string imp;
    std::string rd;
    double theta;
  };
  const std::vector<Pair> pairs = {
      {"\\theta : R. importance (normal_d theta 1) (normal_d theta 1)"
       " (\\x : R*. exact (forget x))",
       "\\theta : R. reinforce_density (normal_d theta 1)"
       " (\\x : R*. exact (forget x))",
       1.5},
      {"\\theta : I. importance (bernoulli_d theta) (bernoulli_d theta)"
       " (\\b : B. exact (if b then 1 else (0 - theta)))",
       "\\theta : I. reinforce_density (bernoulli_d theta)"
       " (\\b : B. exact (if b then 1 else (0 - theta)))",
       0.3},
  };
  for (const Pair& p : pairs) {
    Compiled ci = compiled(p.imp);
    Compiled cr = compiled(p.rd);
    EstimatorFn ei = parts_of(ci.translated_pair(p.theta)).est;
    EstimatorFn er = parts_of(cr.translated_pair(p.theta)).est;
    for (std::uint64_t k = 0; k < 200; ++k) {
      Dual a = ei(Seed(k));
      Dual b = er(Seed(k));
      CAPTURE(k);
      CHECK(a == b);
    }
  }
}

TEST_CASE("implicit reparameterization through a CDF") {
  Compiled c = from_corpus("implicit_reparam_prog");
  expect_near(grad_mc(c, 2.0, 50000), -0.25);
  expect_near(value_mc(c, 2.0, 50000), 0.5);
}

TEST_CASE("implicit reparameterization of a location family moves unit-for-unit") {
  // dCDF/dtheta and dCDF/dx cancel exactly, sample by sample.
  Compiled c = compiled("\\theta : R. implicit_reparam (normal_c theta 1) (\\x : R. exact x)");
  Value est = c.gradient_estimator(0.7);
  for (std::uint64_t k = 0; k < 100; ++k) {
    CHECK(sample_estimator(est, Seed(k)).primal == 1.0);
  }
}

TEST_CASE("weak derivative of a poisson rate") {
  Compiled c = from_corpus("poisson_weak_prog");
  expect_near(grad_mc(c, 2.0, 100000), 5.0);
  expect_near(value_mc(c, 2.0, 100000), 6.0);
}

TEST_CASE("density objects expose dual densities") {
  EvalConfig cfg;
  Value vn = apply_extension_d(PrimD::NormalDistD,
                               {Value::dual(Dual{0, 1}), Value::dual(Dual{1, 0})}, cfg);
  const DensityDist& n = vn.as_dist("a distribution");
  CHECK(n.density(Value::real(0)).primal == doctest::Approx(0.3989422804014327));
  CHECK(n.density(Value::real(0)).tangent == doctest::Approx(0.0));
  CHECK(n.density(Value::real(1)).primal == doctest::Approx(0.24197072451914337));
  CHECK(n.log_density(Value::real(1)).tangent == doctest::Approx(1.0));

  Value vb = apply_extension_d(PrimD::BernoulliDistD, {Value::dual(Dual{0.3, 1})}, cfg);
  const DensityDist& b = vb.as_dist("a distribution");
  CHECK(b.density(Value::boolean(true)) == Dual{0.3, 1});
  CHECK(b.density(Value::boolean(false)).primal == doctest::Approx(0.7));
  CHECK(b.log_density(Value::boolean(false)).tangent ==
        doctest::Approx(-1.4285714285714286));

  Value vp = apply_extension_d(PrimD::PoissonDistD, {Value::dual(Dual{2, 1})}, cfg);
  const DensityDist& p = vp.as_dist("a distribution");
  CHECK(p.log_density(Value::nat(3)).tangent == doctest::Approx(0.5));
  CHECK(p.density(Value::nat(0)).primal == doctest::Approx(std::exp(-2.0)));

  Value ve = apply_extension_d(PrimD::ExponentialDistD, {Value::dual(Dual{2, 1})}, cfg);
  const DensityDist& e = ve.as_dist("a distribution");
  CHECK(e.density(Value::real(0.5)).primal == doctest::Approx(0.7357588823428847));
  CHECK(e.density(Value::real(0.5)).tangent == doctest::Approx(0.0));
  CHECK(e.density(Value::real(-1)).primal == 0.0);
}

TEST_CASE("CDF objects separate parameter and argument derivatives") {
  EvalConfig cfg;
  Value vn = apply_extension_d(PrimD::NormalCdfD,
                               {Value::dual(Dual{0, 1}), Value::dual(Dual{1, 0})}, cfg);
  const CdfDist& n = vn.as_cdf("a parametric CDF");
  Dual by_theta = n.cdf(Dual{1, 0}, true);
  CHECK(by_theta.primal == doctest::Approx(0.8413447460685429));
  CHECK(by_theta.tangent == doctest::Approx(-0.24197072451914337));
  Dual by_x = n.cdf(Dual{1, 1}, false);
  CHECK(by_x.tangent == doctest::Approx(0.24197072451914337));

  Value ve = apply_extension_d(PrimD::ExponentialCdfD, {Value::dual(Dual{2, 1})}, cfg);
  const CdfDist& e = ve.as_cdf("a parametric CDF");
  Dual c = e.cdf(Dual{0.5, 0}, true);
  CHECK(c.primal == doctest::Approx(0.6321205588285577));
  CHECK(c.tangent == doctest::Approx(0.18393972058572117));
  CHECK(e.cdf(Dual{-1, 0}, true).primal == 0.0);
}

TEST_CASE("distribution parameters are validated") {
  EvalConfig cfg;
  CHECK_THROWS_AS(
      apply_extension_d(PrimD::BernoulliDistD, {Value::dual(Dual{1.5, 0})}, cfg),
      RuntimeError);
  CHECK_THROWS_AS(
      apply_extension_d(PrimD::NormalDistD,
                        {Value::dual(Dual{0, 0}), Value::dual(Dual{-1, 0})}, cfg),
      RuntimeError);
  CHECK_THROWS_AS(
      apply_extension_d(PrimD::ExponentialCdfD, {Value::dual(Dual{0, 0})}, cfg),
      RuntimeError);
}
