#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "adev/runtime.hpp"
#include "adev/typecheck.hpp"
#include "test_util.hpp"

using namespace adev;

TEST_CASE("dual arithmetic") {
  Dual x{2, 1};
  CHECK(add_d(x, Dual{3, 5}) == Dual{5, 6});
  CHECK(sub_d(x, Dual{3, 5}) == Dual{-1, -4});
  CHECK(mul_d(x, Dual{3, 5}) == Dual{6, 13});
  Dual q = div_d(Dual{1, 0}, x);
  CHECK(q.primal == doctest::Approx(0.5));
  CHECK(q.tangent == doctest::Approx(-0.25));
  CHECK(pow_d(x, 3) == Dual{8, 12});
  CHECK(pow_d(x, 1) == Dual{2, 1});
  CHECK(pow_d(x, 0) == Dual{1, 0});
  CHECK(pow_d(Dual{0, 1}, 0) == Dual{1, 0});
  CHECK(exp_d(Dual{0, 2}).tangent == doctest::Approx(2));
  CHECK(log_d(Dual{2, 1}).tangent == doctest::Approx(0.5));
  CHECK(sin_d(Dual{0, 1}).tangent == doctest::Approx(1));
  CHECK(cos_d(Dual{0, 1}).tangent == doctest::Approx(0));
}

TEST_CASE("dual tangents agree with centered differences") {
  struct Op {
    const char* name;
    Dual (*f)(const Dual&);
    double (*g)(double);
    double lo, hi;
  };
  const std::vector<Op> ops = {
      {"exp", exp_d, [](double v) { return std::exp(v); }, -2, 2},
      {"log", log_d, [](double v) { return std::log(v); }, 0.2, 3},
      {"sin", sin_d, [](double v) { return std::sin(v); }, -3, 3},
      {"cos", cos_d, [](double v) { return std::cos(v); }, -3, 3},
  };
  const double h = 1e-4;
  for (const Op& op : ops) {
    for (int i = 0; i < 100; ++i) {
      double v = op.lo + (op.hi - op.lo) * (i + 0.5) / 100;
      double fd = (op.g(v + h) - op.g(v - h)) / (2 * h);
      CAPTURE(op.name);
      CAPTURE(v);
      CHECK(op.f(Dual{v, 1}).tangent == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}

TEST_CASE("domain errors") {
  CHECK_THROWS_AS(div_d(Dual{1, 0}, Dual{0, 1}), RuntimeError);
  CHECK_THROWS_AS(log_d(Dual{0, 1}), RuntimeError);
  CHECK_THROWS_AS(log_d(Dual{-1, 0}), RuntimeError);
  // Overflow is reported with the operation's name.
  try {
    mul_d(Dual{1e308, 0}, Dual{1e308, 0});
    FAIL("expected overflow");
  } catch (const RuntimeError& e) {
    CHECK(std::string(e.what()).find("*_D") != std::string::npos);
  }
}

TEST_CASE("seed streams are deterministic and well distributed") {
  Seed a(42), b(42);
  CHECK(a.uniform() == b.uniform());
  CHECK(Seed(42).next().uniform() != Seed(42).uniform());
  CHECK(Seed(1).uniform() != Seed(2).uniform());

  double sum = 0;
  const int n = 10000;
  std::vector<double> xs;
  xs.reserve(n);
  Seed base(7);
  for (int i = 0; i < n; ++i) {
    double u = base.derive(static_cast<std::uint64_t>(i)).uniform();
    CHECK(u > 0);
    CHECK(u < 1);
    xs.push_back(u);
    sum += u;
  }
  double mean = sum / n;
  CHECK(std::fabs(mean - 0.5) < 0.02);

  // Lag-1 autocorrelation across derived substreams.
  double num = 0, den = 0;
  for (int i = 0; i + 1 < n; ++i) {
    num += (xs[i] - mean) * (xs[i + 1] - mean);
  }
  for (double x : xs) den += (x - mean) * (x - mean);
  CHECK(std::fabs(num / den) < 0.05);

  // Split halves look independent too.
  double cross = 0, dl = 0, dr = 0;
  for (int i = 0; i < n; ++i) {
    auto [l, r] = base.derive(static_cast<std::uint64_t>(i)).split();
    double ul = l.uniform() - 0.5, ur = r.uniform() - 0.5;
    cross += ul * ur;
    dl += ul * ul;
    dr += ur * ur;
  }
  CHECK(std::fabs(cross / std::sqrt(dl * dr)) < 0.05);
}

TEST_CASE("forced real views for quadrature") {
  Seed s = Seed::with_real_view(0.3, Seed(9));
  CHECK(s.real_view() == 0.3);
  // The forced uniform is the logistic image of the view.
  CHECK(s.uniform() == doctest::Approx(1 / (1 + std::exp(-0.3))));
  // Forcing survives the left split only.
  auto [l, r] = s.split();
  CHECK(l.real_view() == 0.3);
  CHECK(r.real_view() != 0.3);
  // Unforced views are the logit of the uniform draw.
  Seed t(11);
  double u = t.uniform();
  CHECK(t.real_view() == doctest::Approx(std::log(u) - std::log1p(-u)));
}

TEST_CASE("inverse normal CDF") {
  for (int i = 1; i < 2000; ++i) {
    double u = i / 2000.0;
    double z = inv_normal_cdf(u);
    CHECK(normal_cdf(z) == doctest::Approx(u).epsilon(1e-9));
  }
  CHECK(inv_normal_cdf(0.5) == doctest::Approx(0).epsilon(1e-12));
  CHECK(inv_normal_cdf(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-9));
  CHECK_THROWS_AS(inv_normal_cdf(0), RuntimeError);
  CHECK_THROWS_AS(inv_normal_cdf(1), RuntimeError);
}

TEST_CASE("samplers match their moments") {
  const int n = 20000;
  Seed base(5);
  double se = 0, sp = 0, sg = 0, sn = 0;
  for (int i = 0; i < n; ++i) {
    Seed s = base.derive(static_cast<std::uint64_t>(i));
    se += sample_exponential(2.0, s.uniform());
    sp += static_cast<double>(sample_poisson(3.0, s.next().uniform()));
    sg += static_cast<double>(sample_geometric(0.25, s.next().next().uniform()));
    sn += sample_normal(1.0, 2.0, s.next().next().next().uniform());
  }
  CHECK(se / n == doctest::Approx(0.5).epsilon(0.03));
  CHECK(sp / n == doctest::Approx(3.0).epsilon(0.03));
  CHECK(sg / n == doctest::Approx(3.0).epsilon(0.05));
  CHECK(sn / n == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("values guard their accessors") {
  Value v = Value::real(1.5);
  CHECK(v.as_real("a real") == 1.5);
  CHECK_THROWS_AS(Value::boolean(true).as_real("a real"), RuntimeError);
  CHECK_THROWS_AS(v.as_pair("a pair"), RuntimeError);
  try {
    Value::nat(3).as_dual("a dual");
    FAIL("expected an error");
  } catch (const RuntimeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("a dual") != std::string::npos);
  }
}

TEST_CASE("evaluating elaborated pure terms") {
  Program p = parse_program("\\x : R. x * x + 1", "t");
  TypeEnv tenv;
  TermPtr elab = check(tenv, desugar(p.term), Type::arrow(Type::real(), Type::real()));
  Env env;
  Value f = eval(env, elab, Seed(0));
  CHECK(apply_value(f, Value::real(3)).as_real("a real") == 10);

  // Unresolved overloads never reach the evaluator through the checker, but
  // raw parsed terms do not evaluate.
  Env env2;
  Value g = eval(env2, desugar(p.term), Seed(0));
  CHECK_THROWS_AS(apply_value(g, Value::real(3)), RuntimeError);
}

TEST_CASE("source probabilistic terms do not evaluate directly") {
  Program p = testutil::load_corpus("fig2_flip_reinforce");
  EntryInfo e = check_entry(p);
  Env env;
  Value f = eval(env, e.elaborated, Seed(0));
  CHECK_THROWS_AS(apply_value(f, Value::real(0.5)), RuntimeError);
}
