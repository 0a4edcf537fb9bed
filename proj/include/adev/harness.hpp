#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "adev/runtime.hpp"
#include "adev/syntax.hpp"
#include "adev/transform.hpp"
#include "adev/typecheck.hpp"

namespace adev {

// A program taken through the whole pipeline, with the derived lambdas
// evaluated once so per-theta instantiation is a single application.
struct Compiled {
  Program program;
  EntryInfo entry;
  DerivedPrograms derived;
  EvalConfig cfg;
  Value translated_fn;
  Value derivative_fn;
  Value primal_fn;

  void require_theta(double theta) const;
  Value gradient_estimator(double theta) const;
  Value primal_estimator(double theta) const;
  Value translated_pair(double theta) const;
};

Compiled compile_program(const Program& p, const EvalConfig& cfg = {});

struct McConfig {
  std::uint64_t samples = 100000;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct McResult {
  double mean = 0;
  double stderr_of_mean = 0;
  std::uint64_t samples = 0;
};

// Mean of the estimator's primal output across per-index seed substreams.
// Work is chunked (4096 samples each, Kahan-summed) and chunk totals combine
// in index order, so the result is bitwise identical for every thread count.
McResult mc_mean(const Value& estimator, const McConfig& cfg);

struct SgdConfig {
  double learning_rate = 0.2;
  int steps = 100;
  std::uint64_t seed = 1;
  double clip_margin = 1e-6;  // distance kept from open parameter-domain edges
};

struct SgdResult {
  double theta = 0;
  std::vector<double> trace;
};

// Plain single-sample SGD on the gradient estimator; each step draws from its
// own substream and the iterate is clipped back into the parameter domain.
SgdResult sgd(const Compiled& c, double theta0, const SgdConfig& cfg);

class OracleUnsupported : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EnumOracle {
  double value = 0;
  double derivative = 0;     // forward-mode enumeration
  double fd_derivative = 0;  // centered difference, step 1e-6
  std::uint64_t paths = 0;
};

// Exact expectation by enumerating every flip path, with a 2^20 path budget.
// This interpreter works on the elaborated source term and shares nothing
// with the translation pipeline; it is the oracle the pipeline is checked
// against. Supports flips, costs, and deterministic arithmetic only; raises
// OracleUnsupported otherwise.
EnumOracle enumerate_expectation(const Program& p, double theta);
bool enumeration_supported(const Program& p);

struct ManifestEntry {
  std::string name;
  double theta = 0.5;
  std::uint64_t samples = 100000;
  std::optional<std::string> derivative;  // closed-form expression in theta
  std::optional<std::string> value;
  bool reject = false;  // the program is expected to fail the type checker
  std::optional<std::string> note;
};

struct Manifest {
  std::map<std::string, ManifestEntry> entries;
  const ManifestEntry* find(const std::string& name) const;
};

Manifest parse_manifest(const std::string& text, const std::string& origin);
Manifest load_manifest(const std::string& path);

// Grammar: + - * / ^ with unary minus, parentheses, numbers, theta, and
// exp log sin cos sqrt phi Phi (standard normal pdf/cdf).
double eval_oracle_expr(const std::string& expr, double theta);

struct ValidationResult {
  std::string program;
  double theta = 0;
  std::uint64_t samples = 0;
  double mean = 0;
  double stderr_of_mean = 0;
  double oracle = 0;
  std::string oracle_kind;  // enumeration | manifest | finite-difference
  double z = 0;
  double tolerance = 0;
  bool pass = false;
};

// Oracle preference: exact enumeration when the program is flip-only, then a
// manifest expression, then a common-random-number centered difference of the
// primal estimator.
ValidationResult validate_program(const Compiled& c, double theta,
                                  const McConfig& mc,
                                  const Manifest* manifest = nullptr);

std::string read_file(const std::string& path);

}  // namespace adev
