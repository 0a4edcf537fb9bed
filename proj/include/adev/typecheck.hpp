#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "adev/syntax.hpp"

namespace adev {

class TypeError : public std::runtime_error {
 public:
  TypeError(const std::string& msg, Span where)
      : std::runtime_error(where.line > 0
                               ? msg + " (line " + std::to_string(where.line) +
                                     ", column " + std::to_string(where.col) + ")"
                               : msg),
        span_(where) {}
  const Span& where() const { return span_; }

 private:
  Span span_;
};

class TypeEnv {
 public:
  void bind(std::string name, TypePtr type) {
    entries_.emplace_back(std::move(name), std::move(type));
  }
  void pop() { entries_.pop_back(); }
  const TypePtr* lookup(const std::string& name) const {
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it)
      if (it->first == name) return &it->second;
    return nullptr;
  }

 private:
  std::vector<std::pair<std::string, TypePtr>> entries_;
};

// found may be used where expected is required: equality, the implicit
// widening of Pos and I into R, shallow covariance through P/WP/Product, and
// the lift of P into WP.
bool compatible(const TypePtr& found, const TypePtr& expected);

struct Inferred {
  TypePtr type;
  TermPtr term;  // elaborated: overloads resolved, literal sorts fixed
};

// Works on both source and translated terms (the latter backs the property
// that translation preserves typability).
Inferred infer(TypeEnv& env, const TermPtr& t);
TermPtr check(TypeEnv& env, const TermPtr& t, const TypePtr& expected);

struct EntryInfo {
  std::string param;
  TypePtr param_type;   // one of R, Pos, I
  TermPtr elaborated;   // full lambda, desugared
};

// The top level must be a lambda from a smooth scalar to an estimator.
EntryInfo check_entry(const Program& p);

}  // namespace adev
