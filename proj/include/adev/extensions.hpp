#pragma once

#include <vector>

#include "adev/primitives.hpp"
#include "adev/runtime.hpp"

namespace adev {

// Estimator extensions: baselines, cost accumulation, density-driven
// reinforce and its variance-reduced and importance-weighted variants,
// implicit reparameterization through a CDF, and the weak-derivative Poisson
// estimator. None of these defines a witness.
Value apply_extension_d(PrimD p, const std::vector<Value>& args, const EvalConfig& cfg);

// Dual densities used by tests alongside the distribution constructors.
Dual normal_pdf_dual(double x, const Dual& mu, const Dual& sigma);
double normal_score_tangent(double x, const Dual& mu, const Dual& sigma);

}  // namespace adev
