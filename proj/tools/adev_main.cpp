// Command line front end: type checking, translation, gradient estimation,
// optimization, validation against oracles, and witness probing.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "adev/harness.hpp"
#include "adev/transform.hpp"
#include "adev/witness.hpp"

namespace {

using nlohmann::json;

struct CommonOpts {
  std::string file;
  double theta = 0.5;
  std::uint64_t samples = 100000;
  std::uint64_t seed = 1;
  int threads = 1;
  bool fresh_seed = false;
  bool json_out = false;
  std::string plus_est = "coin";
  std::string csv_path;
  std::string manifest_path;
};

adev::Program load_program(const std::string& path) {
  std::string name = std::filesystem::path(path).stem().string();
  return adev::parse_program(adev::read_file(path), name);
}

adev::EvalConfig eval_config(const CommonOpts& o) {
  adev::EvalConfig cfg;
  cfg.plus_est_both_arms = o.plus_est == "both-arms";
  return cfg;
}

std::uint64_t effective_seed(const CommonOpts& o) {
  if (!o.fresh_seed) return o.seed;
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

std::string fmt(double v, int digits = 10) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

int run_check(const CommonOpts& o) {
  adev::Program p = load_program(o.file);
  adev::EntryInfo entry = adev::check_entry(p);
  std::cout << "ok: " << p.name << " (" << entry.param << " : "
            << adev::pretty(entry.param_type) << ")\n";
  return 0;
}

int run_translate(const CommonOpts& o, bool do_normalize) {
  adev::Program p = load_program(o.file);
  adev::EntryInfo entry = adev::check_entry(p);
  adev::DerivedPrograms d = adev::wrap_derivative(entry);
  adev::TermPtr shown = do_normalize ? adev::normalize(d.translated) : d.translated;
  std::cout << adev::pretty(shown) << "\n";
  return 0;
}

int run_grad(const CommonOpts& o) {
  adev::Compiled c = adev::compile_program(load_program(o.file), eval_config(o));
  adev::McConfig mc{o.samples, effective_seed(o), o.threads};
  adev::McResult r = adev::mc_mean(c.gradient_estimator(o.theta), mc);
  if (o.json_out) {
    json row = {{"program", c.program.name}, {"theta", o.theta},
                {"n", r.samples},           {"mean", r.mean},
                {"stderr", r.stderr_of_mean}};
    std::cout << row.dump() << "\n";
  } else {
    std::cout << c.program.name << "  theta=" << fmt(o.theta)
              << "  n=" << r.samples << "  grad=" << fmt(r.mean)
              << "  stderr=" << fmt(r.stderr_of_mean, 4) << "\n";
  }
  return 0;
}

int run_optimize(const CommonOpts& o, double lr, int steps) {
  adev::Compiled c = adev::compile_program(load_program(o.file), eval_config(o));
  adev::SgdConfig cfg;
  cfg.learning_rate = lr;
  cfg.steps = steps;
  cfg.seed = effective_seed(o);
  adev::SgdResult r = adev::sgd(c, o.theta, cfg);
  if (!o.csv_path.empty()) {
    std::ofstream out(o.csv_path);
    if (!out) throw std::runtime_error("cannot write " + o.csv_path);
    out << "step,theta\n";
    for (std::size_t i = 0; i < r.trace.size(); ++i) {
      out << i + 1 << "," << fmt(r.trace[i], 17) << "\n";
    }
  }
  if (o.json_out) {
    json row = {{"program", c.program.name}, {"theta0", o.theta}, {"lr", lr},
                {"steps", steps},            {"theta", r.theta}};
    std::cout << row.dump() << "\n";
  } else {
    std::cout << c.program.name << "  theta0=" << fmt(o.theta) << "  lr=" << fmt(lr)
              << "  steps=" << steps << "  theta=" << fmt(r.theta) << "\n";
  }
  return 0;
}

int run_validate(const CommonOpts& o, bool theta_given, bool samples_given) {
  adev::Compiled c = adev::compile_program(load_program(o.file), eval_config(o));

  std::optional<adev::Manifest> manifest;
  if (!o.manifest_path.empty()) manifest = adev::load_manifest(o.manifest_path);

  double theta = o.theta;
  std::uint64_t samples = o.samples;
  if (manifest) {
    if (const adev::ManifestEntry* e = manifest->find(c.program.name)) {
      if (!theta_given) theta = e->theta;
      if (!samples_given) samples = e->samples;
    }
  }

  adev::McConfig mc{samples, effective_seed(o), o.threads};
  adev::ValidationResult r =
      adev::validate_program(c, theta, mc, manifest ? &*manifest : nullptr);

  if (o.json_out) {
    json row = {{"program", r.program}, {"theta", r.theta}, {"n", r.samples},
                {"mean", r.mean},       {"stderr", r.stderr_of_mean},
                {"oracle", r.oracle},   {"z", r.z},         {"pass", r.pass}};
    std::cout << row.dump() << "\n";
  } else {
    std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.program
              << "  theta=" << fmt(r.theta) << "  n=" << r.samples
              << "  mean=" << fmt(r.mean) << "  oracle=" << fmt(r.oracle) << " ("
              << r.oracle_kind << ")"
              << "  z=" << fmt(r.z, 3) << "\n";
  }
  if (!o.csv_path.empty()) {
    bool fresh = !std::filesystem::exists(o.csv_path);
    std::ofstream out(o.csv_path, std::ios::app);
    if (!out) throw std::runtime_error("cannot write " + o.csv_path);
    if (fresh) out << "program,theta,n,mean,stderr,oracle,oracle_kind,z,tolerance,pass\n";
    out << r.program << "," << fmt(r.theta, 17) << "," << r.samples << ","
        << fmt(r.mean, 17) << "," << fmt(r.stderr_of_mean, 17) << ","
        << fmt(r.oracle, 17) << "," << r.oracle_kind << "," << fmt(r.z, 17) << ","
        << fmt(r.tolerance, 17) << "," << (r.pass ? "true" : "false") << "\n";
  }
  return r.pass ? 0 : 1;
}

int run_witness(const CommonOpts& o, int points) {
  adev::Compiled c = adev::compile_program(load_program(o.file), eval_config(o));
  adev::WitnessProbeConfig pc;
  pc.points = points;
  pc.seed = effective_seed(o);
  adev::WitnessProbeReport r = adev::probe_witness(c.derived.translated, o.theta, pc, c.cfg);

  if (o.json_out) {
    json row = {{"program", c.program.name},
                {"theta", o.theta},
                {"points", r.points},
                {"available", r.available},
                {"max_fd_error", r.max_fd_error},
                {"max_theta_jump", r.max_theta_jump},
                {"pass", r.ok()}};
    if (!r.available) row["reason"] = r.unavailable_reason;
    std::cout << row.dump() << "\n";
  } else if (!r.available) {
    std::cout << "[FAIL] " << c.program.name << "  witness unavailable: "
              << r.unavailable_reason << "\n";
  } else {
    std::cout << (r.ok() ? "[PASS] " : "[FAIL] ") << c.program.name
              << "  theta=" << fmt(o.theta) << "  points=" << r.points
              << "  max_fd_error=" << fmt(r.max_fd_error, 4)
              << "  max_theta_jump=" << fmt(r.max_theta_jump, 4) << "\n";
  }
  return r.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adev: unbiased gradient estimation for probabilistic programs"};
  app.require_subcommand(1);

  CommonOpts o;
  double lr = 0.2;
  int steps = 100;
  int points = 100;
  bool do_normalize = false;

  auto add_file = [&](CLI::App* sub) {
    sub->add_option("file", o.file, "program file")->required()->check(CLI::ExistingFile);
  };
  auto add_sampling = [&](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "base seed for the sample streams");
    sub->add_flag("--fresh-seed", o.fresh_seed, "seed from the system entropy source");
    sub->add_option("--plus-est", o.plus_est, "plus_est strategy")
        ->check(CLI::IsMember({"coin", "both-arms"}));
    sub->add_flag("--json", o.json_out, "one JSON object per line");
  };

  CLI::App* check = app.add_subcommand("check", "type check a program");
  add_file(check);

  CLI::App* translate = app.add_subcommand("translate", "print the dual-number translation");
  add_file(translate);
  translate->add_flag("--normalize", do_normalize, "apply the CPS normalizer first");

  CLI::App* grad = app.add_subcommand("grad", "estimate the derivative at theta");
  add_file(grad);
  grad->add_option("--theta", o.theta, "parameter value");
  grad->add_option("--n", o.samples, "sample count");
  grad->add_option("--threads", o.threads, "worker threads (the mean is thread-count independent)");
  add_sampling(grad);

  CLI::App* optimize = app.add_subcommand("optimize", "run SGD from theta");
  add_file(optimize);
  optimize->add_option("--theta", o.theta, "starting parameter value");
  optimize->add_option("--lr", lr, "learning rate");
  optimize->add_option("--steps", steps, "SGD steps");
  optimize->add_option("--csv", o.csv_path, "write the iterate trace as CSV");
  add_sampling(optimize);

  CLI::App* validate = app.add_subcommand("validate", "compare the estimator mean to an oracle");
  add_file(validate);
  CLI::Option* theta_opt = validate->add_option("--theta", o.theta, "parameter value");
  CLI::Option* n_opt = validate->add_option("--n", o.samples, "sample count");
  validate->add_option("--threads", o.threads, "worker threads");
  validate->add_option("--manifest", o.manifest_path, "oracle manifest file")
      ->check(CLI::ExistingFile);
  validate->add_option("--csv", o.csv_path, "append the result row to a CSV file");
  add_sampling(validate);

  CLI::App* witness = app.add_subcommand("witness", "probe the witness function");
  add_file(witness);
  witness->add_option("--theta", o.theta, "parameter value");
  witness->add_option("--points", points, "probe points");
  add_sampling(witness);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (check->parsed()) return run_check(o);
    if (translate->parsed()) return run_translate(o, do_normalize);
    if (grad->parsed()) return run_grad(o);
    if (optimize->parsed()) return run_optimize(o, lr, steps);
    if (validate->parsed()) return run_validate(o, theta_opt->count() > 0, n_opt->count() > 0);
    if (witness->parsed()) return run_witness(o, points);
  } catch (const adev::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const adev::TypeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const adev::TransformError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
