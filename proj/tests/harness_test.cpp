#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN

#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#include "adev/harness.hpp"
#include "adev/runtime.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace adev;
using namespace adev::testutil;

namespace {

Compiled from_corpus(const std::string& stem) {
  return compile_program(load_corpus(stem));
}

Compiled compiled(const std::string& src) {
  return compile_program(parse_program(src, "inline"));
}

}  // namespace

TEST_CASE("enumeration reproduces closed forms on flip programs") {
  EnumOracle flips = enumerate_expectation(load_corpus("fig2_flip_enum"), 0.3);
  CHECK(std::abs(flips.value - (-0.105)) <= 1e-12);
  CHECK(std::abs(flips.derivative - (-0.2)) <= 1e-12);
  CHECK(std::abs(flips.fd_derivative - (-0.2)) <= 1e-6);
  CHECK(flips.paths == 2);

  EnumOracle shifted = enumerate_expectation(load_corpus("flip_shifted_reinforce"), 0.3);
  CHECK(std::abs(shifted.value - 9.895) <= 1e-12);
  CHECK(std::abs(shifted.derivative - (-0.2)) <= 1e-12);
  CHECK(shifted.paths == 2);

  EnumOracle credit = enumerate_expectation(load_corpus("two_step_credit"), 0.3);
  CHECK(std::abs(credit.value - 5.39) <= 1e-12);
  CHECK(std::abs(credit.derivative - 1.6) <= 1e-12);
  CHECK(credit.paths == 4);

  EnumOracle mono = enumerate_expectation(load_corpus("two_step_monolithic"), 0.3);
  CHECK(std::abs(mono.value - 5.39) <= 1e-12);
  CHECK(std::abs(mono.derivative - 1.6) <= 1e-12);

  EnumOracle costed = enumerate_expectation(load_corpus("addcost_prog"), 0.3);
  CHECK(std::abs(costed.value - 1.39) <= 1e-12);
  CHECK(std::abs(costed.derivative - 1.6) <= 1e-12);
  CHECK(costed.paths == 2);
}

TEST_CASE("enumeration refuses programs it cannot exhaust") {
  CHECK_THROWS_WITH_AS(enumerate_expectation(load_corpus("geometric_mean"), 0.5),
                       doctest::Contains("geometric_reinforce"), OracleUnsupported);
  CHECK_THROWS_WITH_AS(enumerate_expectation(load_corpus("baseline_prog"), 0.3),
                       doctest::Contains("baseline"), OracleUnsupported);

  CHECK(enumeration_supported(load_corpus("fig2_flip_enum")));
  CHECK(enumeration_supported(load_corpus("fig2_flip_reinforce")));
  CHECK(enumeration_supported(load_corpus("addcost_prog")));
  CHECK(enumeration_supported(load_corpus("two_step_credit")));
  CHECK_FALSE(enumeration_supported(load_corpus("smooth_branch")));
  CHECK_FALSE(enumeration_supported(load_corpus("minibatch_sum")));
  CHECK_FALSE(enumeration_supported(load_corpus("baseline_prog")));
}

TEST_CASE("mc_mean is bitwise invariant under the thread count") {
  Compiled c = from_corpus("fig2_flip_reinforce");
  Value est = c.gradient_estimator(0.3);
  McResult one = mc_mean(est, {.samples = 20000, .seed = 3, .threads = 1});
  for (int threads : {2, 4, 8}) {
    McResult r = mc_mean(est, {.samples = 20000, .seed = 3, .threads = threads});
    CHECK(r.mean == one.mean);
    CHECK(r.stderr_of_mean == one.stderr_of_mean);
    CHECK(r.samples == one.samples);
  }
}

TEST_CASE("mc_mean seeds deterministically and reports zero spread for constants") {
  Compiled c = from_corpus("fig2_flip_reinforce");
  Value est = c.gradient_estimator(0.3);
  McResult a = mc_mean(est, {.samples = 5000, .seed = 3});
  McResult b = mc_mean(est, {.samples = 5000, .seed = 3});
  McResult other = mc_mean(est, {.samples = 5000, .seed = 4});
  CHECK(a.mean == b.mean);
  CHECK(a.stderr_of_mean == b.stderr_of_mean);
  CHECK(a.mean != other.mean);

  Compiled id = compiled("\\theta : R. exact theta");
  McResult grad = mc_mean(id.gradient_estimator(1.0), {.samples = 1000});
  CHECK(grad.mean == 1.0);
  CHECK(grad.stderr_of_mean == 0.0);
  McResult val = mc_mean(id.primal_estimator(2.5), {.samples = 1000});
  CHECK(val.mean == 2.5);
  CHECK(val.stderr_of_mean == 0.0);

  CHECK_THROWS_AS(mc_mean(est, {.samples = 0}), RuntimeError);
}

TEST_CASE("sgd is reproducible and seed sensitive") {
  Compiled c = from_corpus("fig2_flip_reinforce");
  SgdConfig cfg{.learning_rate = 0.2, .steps = 30, .seed = 9};
  SgdResult a = sgd(c, 0.2, cfg);
  SgdResult b = sgd(c, 0.2, cfg);
  CHECK(a.theta == b.theta);
  CHECK(a.trace == b.trace);
  cfg.seed = 10;
  SgdResult other = sgd(c, 0.2, cfg);
  CHECK(a.theta != other.theta);
}

TEST_CASE("sgd drives the exact flip gradient to the optimum") {
  Compiled c = from_corpus("fig2_flip_enum");
  SgdResult r = sgd(c, 0.2, {.learning_rate = 0.2, .steps = 200, .seed = 1});
  CHECK(r.trace.size() == 200);
  CHECK(std::abs(r.theta - 0.5) <= 1e-3);
}

TEST_CASE("sgd clips iterates back into the parameter domain") {
  Compiled interval = from_corpus("fig2_flip_enum");
  SgdConfig wild{.learning_rate = 50.0, .steps = 10, .seed = 2};
  SgdResult r = sgd(interval, 0.2, wild);
  for (double t : r.trace) {
    CHECK(t >= wild.clip_margin);
    CHECK(t <= 1 - wild.clip_margin);
  }

  Compiled pos = from_corpus("sample_scale");
  SgdConfig heavy{.learning_rate = 10.0, .steps = 5, .seed = 2};
  SgdResult p = sgd(pos, 1.0, heavy);
  for (double t : p.trace) CHECK(t >= heavy.clip_margin);
  CHECK(p.theta < 1.0);
}

TEST_CASE("sgd recovers the optimum from reinforce gradients on most seeds") {
  Compiled c = from_corpus("fig2_flip_reinforce");
  int hits = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    SgdResult r = sgd(c, 0.2, {.learning_rate = 0.2, .steps = 100, .seed = seed});
    if (std::abs(r.theta - 0.5) <= 0.1) ++hits;
  }
  CHECK(hits >= 17);
}

TEST_CASE("the corpus manifest loads with per-program settings") {
  Manifest m = corpus_manifest();
  const ManifestEntry* flips = m.find("fig2_flip_enum");
  REQUIRE(flips != nullptr);
  CHECK(flips->theta == 0.5);
  CHECK(flips->samples == 1000);
  REQUIRE(flips->derivative.has_value());
  CHECK(std::abs(eval_oracle_expr(*flips->derivative, 0.3) - (-0.2)) <= 1e-12);
  REQUIRE(flips->value.has_value());
  CHECK(std::abs(eval_oracle_expr(*flips->value, 0.3) - (-0.105)) <= 1e-12);
  CHECK_FALSE(flips->reject);

  const ManifestEntry* rejected = m.find(kRejected);
  REQUIRE(rejected != nullptr);
  CHECK(rejected->reject);
  REQUIRE(rejected->note.has_value());
  CHECK(rejected->note->find("reparameterized") != std::string::npos);

  CHECK(m.find("no_such_program") == nullptr);
}

TEST_CASE("manifest parsing flags malformed input with its origin and line") {
  Manifest ok = parse_manifest("# header comment\n[p]\ntheta = 0.25 # inline\n", "m");
  REQUIRE(ok.find("p") != nullptr);
  CHECK(ok.find("p")->theta == 0.25);

  CHECK_THROWS_WITH_AS(parse_manifest("theta = 0.3\n", "m"),
                       doctest::Contains("m:1: key outside any [section]"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(parse_manifest("[p]\nfoo = 1\n", "m"),
                       doctest::Contains("m:2: unknown key 'foo'"), std::runtime_error);
  CHECK_THROWS_WITH_AS(parse_manifest("[p\ntheta = 1\n", "m"),
                       doctest::Contains("m:1: unterminated section header"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(parse_manifest("[p]\njust words\n", "m"),
                       doctest::Contains("m:2: expected key = value"), std::runtime_error);
}

TEST_CASE("oracle expressions evaluate closed forms") {
  CHECK(std::abs(eval_oracle_expr("theta - 0.5", 0.3) - (-0.2)) <= 1e-15);
  CHECK(std::abs(eval_oracle_expr("phi(1)", 0) - 0.24197072451914337) <= 1e-15);
  CHECK(eval_oracle_expr("Phi(0)", 0) == 0.5);
  CHECK(std::abs(eval_oracle_expr("-phi(3 - theta)", 2.0) - (-0.24197072451914337)) <= 1e-15);
  CHECK(eval_oracle_expr("2 ^ 3", 0) == 8.0);
  CHECK(eval_oracle_expr("2 ^ 2 ^ 3", 0) == 256.0);  // right associative
  CHECK(eval_oracle_expr("sqrt(4)", 0) == 2.0);
  CHECK(eval_oracle_expr("1 - theta ^ 2", 2.0) == -3.0);
  CHECK(std::abs(eval_oracle_expr("exp(log(7))", 0) - 7.0) <= 1e-12);
  CHECK(std::abs(eval_oracle_expr("sin(0) + cos(0)", 0) - 1.0) <= 1e-15);

  CHECK_THROWS_WITH_AS(eval_oracle_expr("bogus(1)", 0),
                       doctest::Contains("unknown function 'bogus'"), std::runtime_error);
  CHECK_THROWS_WITH_AS(eval_oracle_expr("1 +", 0), doctest::Contains("unexpected end"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(eval_oracle_expr("1 2", 0),
                       doctest::Contains("trailing characters"), std::runtime_error);
}

TEST_CASE("validation picks the strongest available oracle") {
  Manifest m = corpus_manifest();

  ValidationResult enumerated =
      validate_program(from_corpus("fig2_flip_enum"), 0.3, {.samples = 2000, .seed = 5}, &m);
  CHECK(enumerated.oracle_kind == "enumeration");
  CHECK(enumerated.pass);
  CHECK(enumerated.stderr_of_mean == 0.0);
  CHECK(std::abs(enumerated.oracle - (-0.2)) <= 1e-12);

  ValidationResult from_manifest =
      validate_program(from_corpus("smooth_branch"), 2.0, {.samples = 50000, .seed = 2}, &m);
  CHECK(from_manifest.oracle_kind == "manifest");
  CHECK(from_manifest.pass);

  ValidationResult fallback =
      validate_program(from_corpus("reparam_square"), 1.0, {.samples = 20000, .seed = 2}, nullptr);
  CHECK(fallback.oracle_kind == "finite-difference");
  CHECK(fallback.pass);
  CHECK(std::abs(fallback.oracle - 2.0) <= 0.05);
}

TEST_CASE("read_file errors name the missing path") {
  CHECK_THROWS_WITH_AS(read_file("/nonexistent/adev/path"),
                       doctest::Contains("cannot open"), std::runtime_error);
  CHECK_FALSE(read_file(corpus_path("fig2_flip_enum.adev")).empty());
}
