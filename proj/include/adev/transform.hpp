#pragma once

#include <stdexcept>

#include "adev/syntax.hpp"
#include "adev/typecheck.hpp"

namespace adev {

class TransformError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Forward-mode translation on types: smooth scalars become primal/tangent
// pairs, discrete and non-smooth types are untouched, connectives map
// structurally, P and WP become the target continuation connective.
TypePtr ad_type(const TypePtr& t);

// Structural translation on elaborated, desugared source terms. Rejects terms
// that already contain target constructs, so accidental double translation
// fails loudly.
TermPtr ad_term(const TermPtr& t);

struct DerivedPrograms {
  TermPtr translated;  // lambda over the dualized parameter
  TermPtr derivative;  // \theta. snd_* (fst (translated (theta, 1)))
  TermPtr primal;      // \theta. fst_* (fst (translated (theta, 1)))
  TermPtr witness;     // \theta. \s. snd (translated (theta, 1)) s
};

DerivedPrograms wrap_derivative(const EntryInfo& entry);

// Administrative cleanup for display: unfolds do_D/return_D into continuation
// form, applies the expectation head to the exact continuation, commutes
// applications into if-branches, and beta-reduces value arguments. Semantics
// preserving; used by `translate --normalize`.
TermPtr normalize(const TermPtr& t, TypeEnv env = {});

}  // namespace adev
