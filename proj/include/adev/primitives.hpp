#pragma once

#include <vector>

#include "adev/runtime.hpp"
#include "adev/syntax.hpp"

namespace adev {

int prim_arity(Prim p);
int prim_d_arity(PrimD p);

// Applies a saturated primitive to its collected arguments. Source primitives
// other than the discrete arithmetic and comparisons have no direct runtime
// semantics and raise; programs go through the translation first.
Value apply_primitive(Prim p, const std::vector<Value>& args, const EvalConfig& cfg);
Value apply_primitive_d(PrimD p, const std::vector<Value>& args, const EvalConfig& cfg);

// The translated probability representation: a pair of dual estimator and
// witness. These helpers pack and unpack it.
struct ProbParts {
  EstimatorFn est;
  Value wit;
};

ProbParts parts_of(const Value& v);
Value exact_pair(const Dual& d);
Dual run_witness(const Value& wit, const WitnessPoint& pt);

}  // namespace adev
