// Acceptance gate for the gradient pipeline. Each criterion prints one
// [PASS]/[FAIL] line with its measurements; the exit code is the number of
// failing criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "adev/harness.hpp"
#include "adev/primitives.hpp"
#include "adev/runtime.hpp"
#include "adev/syntax.hpp"
#include "adev/transform.hpp"
#include "adev/typecheck.hpp"
#include "adev/witness.hpp"
#include "test_util.hpp"

using namespace adev;
using namespace adev::testutil;

namespace {

using Clock = std::chrono::steady_clock;

Compiled from_corpus(const std::string& stem) {
  return compile_program(load_corpus(stem));
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

// One z-test: the Monte Carlo gradient mean against the strongest oracle,
// |mean - oracle| <= max(4 stderr, 1e-3).
struct ZCase {
  std::string name;
  double theta;
  std::uint64_t samples;
};

const char* kTranslateGolden =
    "\\theta : I * R. E_D (do_D { b <- flip_reinforce_D theta; "
    "if b then return_D (0, 0) else return_D ((0, 0) -_D (theta /_D (2, 0))) })";

const char* kNormalizeGolden =
    "\\theta : I * R. flip_reinforce_D theta (\\b : B. "
    "if b then exact_D (0, 0) else exact_D ((0, 0) -_D (theta /_D (2, 0))))";

}  // namespace

int main() {
  int failures = 0;
  auto run = [&](int idx, const char* label,
                 const std::function<bool(std::ostringstream&)>& fn) {
    auto t0 = Clock::now();
    bool pass = false;
    std::ostringstream detail;
    try {
      pass = fn(detail);
    } catch (const std::exception& e) {
      pass = false;
      detail << "exception: " << e.what();
    }
    std::printf("[%s] %d %s (%s; %.2fs)\n", pass ? "PASS" : "FAIL", idx, label,
                detail.str().c_str(), seconds_since(t0));
    std::fflush(stdout);
    if (!pass) ++failures;
  };

  Manifest manifest = corpus_manifest();

  run(1, "enumeration gradients are exact at machine precision", [&](std::ostringstream& d) {
    auto t0 = Clock::now();
    Compiled c = from_corpus("fig2_flip_enum");
    double max_err = 0;
    bool spread_free = true;
    for (int k = 1; k <= 9; ++k) {
      double theta = k / 10.0;
      McResult r = mc_mean(c.gradient_estimator(theta), {.samples = 1000, .seed = 1});
      max_err = std::max(max_err, std::fabs(r.mean - (theta - 0.5)));
      spread_free = spread_free && r.stderr_of_mean == 0;
    }
    double secs = seconds_since(t0);
    d << "max error " << fmt(max_err) << " over theta 0.1..0.9, stderr all zero: "
      << (spread_free ? "yes" : "no") << ", " << fmt(secs) << "s";
    return max_err <= 1e-12 && spread_free && secs < 1.0;
  });

  run(2, "core estimators pass z-tests at full sample counts", [&](std::ostringstream& d) {
    const std::vector<ZCase> cases = {
        {"fig2_flip_reinforce", 0.3, 200000}, {"fig2_flip_reinforce", 0.7, 200000},
        {"smooth_branch", 2.0, 500000},       {"smooth_branch", 3.0, 500000},
        {"reparam_square", 1.0, 100000},      {"geometric_mean", 0.5, 500000},
        {"exp_est_prog", 1.0, 200000},        {"minibatch_sum", 0.7, 100000},
    };
    bool all = true;
    double worst_z = 0, slowest = 0;
    for (const ZCase& zc : cases) {
      auto t0 = Clock::now();
      Compiled c = from_corpus(zc.name);
      ValidationResult r = validate_program(
          c, zc.theta, {.samples = zc.samples, .seed = 20260814, .threads = 1}, &manifest);
      double secs = seconds_since(t0);
      slowest = std::max(slowest, secs);
      if (std::isfinite(r.z)) worst_z = std::max(worst_z, std::fabs(r.z));
      if (!r.pass || secs >= 60.0) {
        all = false;
        d << zc.name << " theta " << zc.theta << ": mean " << r.mean << " vs "
          << r.oracle_kind << " oracle " << r.oracle << " in " << fmt(secs) << "s; ";
      }
    }
    d << cases.size() << " tests, worst |z| " << fmt(worst_z) << ", slowest "
      << fmt(slowest) << "s";
    return all;
  });

  run(3, "extension estimators pass z-tests and variance orderings", [&](std::ostringstream& d) {
    const std::vector<std::string> programs = {
        "baseline_prog",        "flip_shifted_reinforce",
        "addcost_prog",         "two_step_credit",
        "two_step_monolithic",  "reinforce_density_normal",
        "reinforce_density_bernoulli", "leave_one_out_prog",
        "importance_prog",      "implicit_reparam_prog",
        "poisson_weak_prog",
    };
    bool all = true;
    double worst_z = 0;
    McConfig mc{.samples = 100000, .seed = 20260814, .threads = 1};
    std::map<std::string, McResult> grads;
    for (const std::string& name : programs) {
      const ManifestEntry* entry = manifest.find(name);
      Compiled c = from_corpus(name);
      ValidationResult r = validate_program(c, entry->theta, mc, &manifest);
      grads[name] = mc_mean(c.gradient_estimator(entry->theta), mc);
      if (std::isfinite(r.z)) worst_z = std::max(worst_z, std::fabs(r.z));
      if (!r.pass) {
        all = false;
        d << name << ": mean " << r.mean << " vs " << r.oracle_kind << " oracle "
          << r.oracle << "; ";
      }
    }
    double base = grads["baseline_prog"].stderr_of_mean;
    double plain = grads["flip_shifted_reinforce"].stderr_of_mean;
    double credit = grads["two_step_credit"].stderr_of_mean;
    double mono = grads["two_step_monolithic"].stderr_of_mean;
    bool orderings = base < plain && credit < mono;
    d << programs.size() << " tests, worst |z| " << fmt(worst_z)
      << "; stderr baseline " << fmt(base) << " < plain " << fmt(plain)
      << ", credit " << fmt(credit) << " < monolithic " << fmt(mono);
    return all && orderings;
  });

  run(4, "sgd reaches the optimum", [&](std::ostringstream& d) {
    Compiled reinforce = from_corpus("fig2_flip_reinforce");
    int hits = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
      SgdResult r = sgd(reinforce, 0.2, {.learning_rate = 0.2, .steps = 100, .seed = seed});
      if (std::fabs(r.theta - 0.5) <= 0.1) ++hits;
    }
    Compiled enumerated = from_corpus("fig2_flip_enum");
    SgdResult exact = sgd(enumerated, 0.2, {.learning_rate = 0.2, .steps = 200, .seed = 1});
    double exact_err = std::fabs(exact.theta - 0.5);
    d << "reinforce within 0.1 of 0.5 on " << hits
      << "/100 seeds; exact run error " << fmt(exact_err);
    return hits >= 95 && exact_err <= 1e-3;
  });

  run(5, "the type checker accepts the smooth programs and rejects the non-smooth one",
      [&](std::ostringstream& d) {
        for (const char* name : {"fig2_flip_reinforce", "fig12_l1", "fig12_l2"}) {
          check_entry(load_corpus(name));
        }
        std::string message;
        try {
          check_entry(load_corpus(kRejected));
        } catch (const TypeError& e) {
          message = e.what();
        }
        bool rejected = !message.empty() && message.find("'y'") != std::string::npos;
        d << "3 accepted; rejection: "
          << (message.empty() ? std::string("missing") : message);
        return rejected;
      });

  run(6, "the flagship translation matches its frozen rendering", [&](std::ostringstream& d) {
    DerivedPrograms derived = wrap_derivative(check_entry(load_corpus("fig2_flip_reinforce")));
    bool translated = pretty(derived.translated) == kTranslateGolden;
    bool normalized = pretty(normalize(derived.translated)) == kNormalizeGolden;
    d << "translated " << (translated ? "matches" : "differs") << ", normalized "
      << (normalized ? "matches" : "differs");
    return translated && normalized;
  });

  run(7, "witnesses differentiate correctly and integrate to the loss", [&](std::ostringstream& d) {
    int probed = 0, missing = 0;
    bool all = true;
    double worst = 0;
    for (const std::string& name : corpus_accepted()) {
      const ManifestEntry* entry = manifest.find(name);
      Compiled c = from_corpus(name);
      WitnessProbeReport r = probe_witness(c.derived.translated, entry->theta);
      if (!r.available) {
        ++missing;
        continue;
      }
      ++probed;
      worst = std::max(worst, r.max_fd_error);
      if (!r.ok() || r.max_fd_error > 1e-5) {
        all = false;
        d << name << ": fd error " << r.max_fd_error << ", jump " << r.max_theta_jump
          << "; ";
      }
    }
    Compiled scale = from_corpus("sample_scale");
    double integral = integrate_witness(scale.derived.translated, 2.0, 64);
    double quad_err = std::fabs(integral - 1.0);
    d << probed << " witnesses probed (" << missing
      << " without witness), worst fd error " << fmt(worst)
      << "; sample_scale integral error " << fmt(quad_err);
    return all && probed == 10 && quad_err <= 1e-6;
  });

  run(8, "printer, duals, and seeds hold their contracts", [&](std::ostringstream& d) {
    TermGen gen(2026);
    int round_trips = 0;
    for (int i = 0; i < 1000; ++i) {
      TermPtr t = gen.term();
      Program back = parse_program(pretty(t), "generated");
      if (alpha_equal(t, back.term)) ++round_trips;
    }

    const double h = 1e-4;
    double worst_fd = 0;
    auto probe = [&](const std::function<Dual(const Dual&)>& f,
                     const std::function<double(double)>& g, double lo, double hi) {
      for (int i = 0; i < 100; ++i) {
        double x = lo + (hi - lo) * (i + 0.5) / 100.0;
        double fd = (g(x + h) - g(x - h)) / (2 * h);
        worst_fd = std::max(worst_fd, std::fabs(f({x, 1}).tangent - fd));
      }
    };
    probe([](const Dual& x) { return exp_d(x); }, [](double x) { return std::exp(x); }, -2, 2);
    probe([](const Dual& x) { return log_d(x); }, [](double x) { return std::log(x); }, 0.1, 4);
    probe([](const Dual& x) { return sin_d(x); }, [](double x) { return std::sin(x); }, -3, 3);
    probe([](const Dual& x) { return cos_d(x); }, [](double x) { return std::cos(x); }, -3, 3);
    probe([](const Dual& x) { return add_d(x, {1.7, 0}); }, [](double x) { return x + 1.7; }, -2, 2);
    probe([](const Dual& x) { return sub_d({1.7, 0}, x); }, [](double x) { return 1.7 - x; }, -2, 2);
    probe([](const Dual& x) { return mul_d(x, {1.7, 0}); }, [](double x) { return x * 1.7; }, -2, 2);
    probe([](const Dual& x) { return div_d({1.7, 0}, x); }, [](double x) { return 1.7 / x; }, 0.5, 3);
    probe([](const Dual& x) { return div_d(x, {1.7, 0}); }, [](double x) { return x / 1.7; }, -2, 2);
    probe([](const Dual& x) { return pow_d(x, 3); }, [](double x) { return x * x * x; }, -1.5, 1.5);

    bool replay_ok = true;
    for (const std::string& name : corpus_accepted()) {
      const ManifestEntry* entry = manifest.find(name);
      Compiled c = from_corpus(name);
      Value est = c.gradient_estimator(entry->theta);
      Dual a = sample_estimator(est, Seed(5));
      Dual b = sample_estimator(est, Seed(5));
      Dual fresh = sample_estimator(c.gradient_estimator(entry->theta), Seed(5));
      if (!(a == b && a == fresh)) {
        replay_ok = false;
        d << name << " replay differs; ";
      }
    }

    Compiled enumerated = from_corpus("fig2_flip_enum");
    bool spread_free = true;
    for (double theta : {0.2, 0.5, 0.8}) {
      McResult r = mc_mean(enumerated.gradient_estimator(theta), {.samples = 4096, .seed = 2});
      spread_free = spread_free && r.stderr_of_mean == 0;
    }

    d << round_trips << "/1000 round trips, worst dual fd error " << fmt(worst_fd)
      << ", replay " << (replay_ok ? "bit-exact" : "broken") << ", enumeration stderr zero: "
      << (spread_free ? "yes" : "no");
    return round_trips == 1000 && worst_fd <= 1e-5 && replay_ok && spread_free;
  });

  if (failures == 0) {
    std::printf("all acceptance criteria pass\n");
  } else {
    std::printf("%d acceptance criteria failing\n", failures);
  }
  return failures;
}
