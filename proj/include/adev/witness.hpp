#pragma once

#include <cstdint>
#include <string>

#include "adev/runtime.hpp"
#include "adev/syntax.hpp"

namespace adev {

// Applies the translated program to (theta, 1), yielding the runtime pair of
// dual estimator and witness.
Value translated_pair_at(const TermPtr& translated, double theta,
                         const EvalConfig& cfg = {});

struct WitnessProbeConfig {
  int points = 100;
  double fd_step = 1e-4;     // centered difference step in theta
  double fd_tol = 1e-5;
  double theta_step = 1e-6;  // continuity probe shift
  double theta_tol = 1e-3;
  std::uint64_t seed = 7;
};

struct WitnessProbeReport {
  bool available = false;
  std::string unavailable_reason;
  int points = 0;
  double max_fd_error = 0;
  double max_theta_jump = 0;
  bool fd_ok = false;
  bool continuity_ok = false;
  bool ok() const { return available && fd_ok && continuity_ok; }
};

// At each probe point the witness tangent is compared against a centered
// difference of its primal in theta, and the primal is checked for jumps
// under a tiny theta shift (a jump means a branch flipped, i.e. the program
// observes the parameter non-smoothly despite its type).
WitnessProbeReport probe_witness(const TermPtr& translated, double theta,
                                 const WitnessProbeConfig& pc = {},
                                 const EvalConfig& cfg = {});

// Gauss-Legendre integral of the witness primal over the first coordinate of
// the seed space; trailing coordinates are integrated out analytically (unit
// leaf weights). For a program whose only draw is one uniform, this recovers
// the expectation.
double integrate_witness(const TermPtr& translated, double theta, int nodes,
                         const EvalConfig& cfg = {});

// The same integral taken on the estimator side, by forcing the estimator's
// first uniform draw to each quadrature node.
double integrate_estimator(const TermPtr& translated, double theta, int nodes,
                           const EvalConfig& cfg = {});

}  // namespace adev
