#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "adev/syntax.hpp"

namespace adev {

class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- dual numbers -----------------------------------------------------------

struct Dual {
  double primal = 0;
  double tangent = 0;
};

inline bool operator==(const Dual& a, const Dual& b) {
  return a.primal == b.primal && a.tangent == b.tangent;
}

// Each operation checks its result for NaN/Inf and raises naming the op.
Dual add_d(const Dual& x, const Dual& y);
Dual sub_d(const Dual& x, const Dual& y);
Dual mul_d(const Dual& x, const Dual& y);
Dual div_d(const Dual& x, const Dual& y);
Dual exp_d(const Dual& x);
Dual log_d(const Dual& x);  // requires primal > 0
Dual sin_d(const Dual& x);
Dual cos_d(const Dual& x);
Dual pow_d(const Dual& x, std::uint64_t n);  // pow_d(x, 0) = (1, 0)
// Scale by a tangent-free scalar; divides componentwise so that weight
// ratios with an identical denominator stay exact.
Dual scale_d(const Dual& x, double c);
Dual div_by_scalar_d(const Dual& x, double c);

void ensure_finite(const Dual& d, const char* op);

// --- splittable seeds ---------------------------------------------------------

// Counter-based: an opaque key plus a draw counter, hashed per draw. split and
// derive are O(1) and independent of the values drawn. The optional forced
// real view is probe-only machinery (witness quadrature); it overrides the
// first draw on the left split spine and is never set by sampling code.
class Seed {
 public:
  Seed() : Seed(0) {}
  explicit Seed(std::uint64_t key) : key_(key), counter_(0) {}

  double uniform() const;              // current draw, strictly inside (0, 1)
  Seed next() const;                   // advance to the following draw
  std::pair<Seed, Seed> split() const;
  Seed derive(std::uint64_t index) const;  // per-sample substream

  // The seed viewed as a real number: logit of the current uniform.
  double real_view() const;
  static Seed with_real_view(double r, const Seed& rest);
  bool forced() const { return forced_.has_value(); }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
  std::optional<double> forced_;
};

// Inverse standard normal CDF (Wichura's PPND16); |error| well under 1e-9.
double inv_normal_cdf(double p);
double normal_cdf(double z);
double normal_pdf(double z);

double sample_normal(double mu, double sigma, double u);
double sample_exponential(double rate, double u);
std::uint64_t sample_poisson(double rate, double u);      // by inversion
std::uint64_t sample_geometric(double p, double u);       // failures before success

// --- values -------------------------------------------------------------------

class Value;
class Env;

struct EvalConfig {
  bool plus_est_both_arms = false;  // estimate both arms instead of coin-flipping
  double exp_est_rate = 2.0;        // Poisson order rate of the product estimator
};

// A point the witness is evaluated at. Splitting follows the seed; the unit
// leaf flag makes exact's leaf weigh 1, which quadrature uses to integrate the
// unused trailing coordinates out analytically.
struct WitnessPoint {
  Seed seed;
  bool unit_leaf_weight = false;

  std::pair<WitnessPoint, WitnessPoint> split() const {
    auto [l, r] = seed.split();
    return {WitnessPoint{l, unit_leaf_weight}, WitnessPoint{r, unit_leaf_weight}};
  }
  double real() const { return seed.real_view(); }
};

using EstimatorFn = std::function<Dual(const Seed&)>;
using WitnessFn = std::function<Dual(const WitnessPoint&)>;

struct EstVal {
  EstimatorFn fn;
};

// fn empty means the witness is unavailable; reason names the primitive that
// has no witness translation.
struct WitVal {
  WitnessFn fn;
  std::string unavailable_reason;
  bool available() const { return static_cast<bool>(fn); }
};

struct DensityDist {
  std::string name;
  std::function<Value(const Seed&)> sample;           // primal draw
  std::function<Dual(const Value&)> density;          // dual in the parameters
  std::function<Dual(const Value&)> log_density;
};

struct CdfDist {
  std::string name;
  std::function<double(const Seed&)> sample;          // primal draw
  // Dual CDF at a dual point; with_param_tangents false zeroes the parameter
  // directions so the x-derivative can be read off alone.
  std::function<Dual(const Dual& x, bool with_param_tangents)> cdf;
};

struct PairVal;
struct ClosureVal;
struct NativeVal;
struct PrimAppVal;

class Value {
 public:
  struct UnitTag {};

  Value() : data_(UnitTag{}) {}

  static Value unit() { return Value(); }
  static Value boolean(bool b) { return Value(b); }
  static Value nat(std::uint64_t n) { return Value(n); }
  static Value real(double r) { return Value(r); }
  static Value dual(Dual d) { return Value(d); }
  static Value pair(Value a, Value b);
  static Value closure(Env env, std::string param, TermPtr body, EvalConfig cfg);
  static Value native(std::string name, std::function<Value(const Value&)> fn);
  static Value prim(Prim p, EvalConfig cfg);
  static Value prim_d(PrimD p, EvalConfig cfg);
  static Value estimator(EstimatorFn fn);
  static Value witness(WitnessFn fn);
  static Value witness_unavailable(std::string reason);
  static Value dist(std::shared_ptr<const DensityDist> d);
  static Value cdf_dist(std::shared_ptr<const CdfDist> c);

  bool is_unit() const { return std::holds_alternative<UnitTag>(data_); }
  bool is_bool() const { return std::holds_alternative<bool>(data_); }
  bool is_nat() const { return std::holds_alternative<std::uint64_t>(data_); }
  bool is_real() const { return std::holds_alternative<double>(data_); }
  bool is_dual() const { return std::holds_alternative<Dual>(data_); }
  bool is_pair() const;
  bool is_estimator() const;
  bool is_witness() const;
  bool is_dist() const;
  bool is_cdf() const;
  bool is_callable() const;

  bool as_bool(const char* what) const;
  std::uint64_t as_nat(const char* what) const;
  double as_real(const char* what) const;
  Dual as_dual(const char* what) const;
  const PairVal& as_pair(const char* what) const;
  const EstVal& as_estimator(const char* what) const;
  const WitVal& as_witness(const char* what) const;
  const DensityDist& as_dist(const char* what) const;
  const CdfDist& as_cdf(const char* what) const;

  std::string describe() const;

  friend Value apply_value(const Value& f, const Value& x);

 private:
  explicit Value(bool b) : data_(b) {}
  explicit Value(std::uint64_t n) : data_(n) {}
  explicit Value(double r) : data_(r) {}
  explicit Value(Dual d) : data_(d) {}

  std::variant<UnitTag, bool, std::uint64_t, double, Dual,
               std::shared_ptr<const PairVal>, std::shared_ptr<const ClosureVal>,
               std::shared_ptr<const NativeVal>, std::shared_ptr<const PrimAppVal>,
               std::shared_ptr<const EstVal>, std::shared_ptr<const WitVal>,
               std::shared_ptr<const DensityDist>, std::shared_ptr<const CdfDist>>
      data_;
};

struct PairVal {
  Value first;
  Value second;
};

class Env {
 public:
  Env() = default;
  Env extend(std::string name, Value v) const;
  const Value* lookup(const std::string& name) const;

 private:
  struct Node {
    std::string name;
    Value value;
    std::shared_ptr<const Node> next;
  };
  std::shared_ptr<const Node> head_;
};

struct ClosureVal {
  Env env;
  std::string param;
  TermPtr body;
  EvalConfig cfg;
};

struct NativeVal {
  std::string name;
  std::function<Value(const Value&)> fn;
};

struct PrimAppVal {
  bool is_d = false;
  Prim p = Prim::PolyAdd;
  PrimD d = PrimD::AddD;
  std::vector<Value> args;
  int arity = 0;
  EvalConfig cfg;
};

// Evaluates a translated (target-language) term. Evaluation itself is pure:
// the seed is threaded for primitives that draw at construction time (none of
// the current set does); all sampling happens when estimators built by the
// primitives are invoked through sample_estimator.
Value eval(const Env& env, const TermPtr& t, const Seed& s,
           const EvalConfig& cfg = {});

Value apply_value(const Value& f, const Value& x);

Dual sample_estimator(const Value& est, const Seed& s);

}  // namespace adev
