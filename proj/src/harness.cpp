#include "adev/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "adev/primitives.hpp"

namespace adev {

// --- compiled pipeline -------------------------------------------------------

Compiled compile_program(const Program& p, const EvalConfig& cfg) {
  Compiled c;
  c.program = p;
  c.entry = check_entry(p);
  c.derived = wrap_derivative(c.entry);
  c.cfg = cfg;
  Env empty;
  c.translated_fn = eval(empty, c.derived.translated, Seed(0), cfg);
  c.derivative_fn = eval(empty, c.derived.derivative, Seed(0), cfg);
  c.primal_fn = eval(empty, c.derived.primal, Seed(0), cfg);
  return c;
}

void Compiled::require_theta(double theta) const {
  if (!std::isfinite(theta)) throw RuntimeError("theta must be finite");
  switch (entry.param_type->base) {
    case BaseKind::Real:
      return;
    case BaseKind::PosReal:
      if (theta > 0) return;
      break;
    case BaseKind::Interval:
      if (theta > 0 && theta < 1) return;
      break;
  }
  std::ostringstream os;
  os << "theta = " << theta << " is outside the parameter domain "
     << pretty(entry.param_type);
  throw RuntimeError(os.str());
}

Value Compiled::gradient_estimator(double theta) const {
  require_theta(theta);
  return apply_value(derivative_fn, Value::real(theta));
}

Value Compiled::primal_estimator(double theta) const {
  require_theta(theta);
  return apply_value(primal_fn, Value::real(theta));
}

Value Compiled::translated_pair(double theta) const {
  require_theta(theta);
  return apply_value(translated_fn, Value::dual(Dual{theta, 1}));
}

// --- Monte Carlo driver --------------------------------------------------------

namespace {

constexpr std::uint64_t kChunk = 4096;

struct Kahan {
  double sum = 0;
  double comp = 0;
  void add(double x) {
    double y = x - comp;
    double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
};

}  // namespace

McResult mc_mean(const Value& estimator, const McConfig& cfg) {
  if (cfg.samples == 0) throw RuntimeError("sample count must be positive");
  const std::uint64_t chunks = (cfg.samples + kChunk - 1) / kChunk;
  std::vector<double> sums(chunks), squares(chunks);
  Seed base(cfg.seed);

  std::atomic<std::uint64_t> cursor{0};
  std::mutex failure_mutex;
  std::exception_ptr failure;

  auto worker = [&]() {
    try {
      for (;;) {
        std::uint64_t c = cursor.fetch_add(1);
        if (c >= chunks) return;
        std::uint64_t lo = c * kChunk;
        std::uint64_t hi = std::min(cfg.samples, lo + kChunk);
        Kahan sum, square;
        for (std::uint64_t i = lo; i < hi; ++i) {
          double g = sample_estimator(estimator, base.derive(i)).primal;
          sum.add(g);
          square.add(g * g);
        }
        sums[c] = sum.sum;
        squares[c] = square.sum;
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  };

  int threads = std::max(1, cfg.threads);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  Kahan total, total_sq;
  for (std::uint64_t c = 0; c < chunks; ++c) {
    total.add(sums[c]);
    total_sq.add(squares[c]);
  }
  auto n = static_cast<double>(cfg.samples);
  double mean = total.sum / n;
  double variance = total_sq.sum / n - mean * mean;
  if (variance < 0) variance = 0;
  return {mean, std::sqrt(variance / n), cfg.samples};
}

SgdResult sgd(const Compiled& c, double theta0, const SgdConfig& cfg) {
  auto clip = [&](double th) {
    switch (c.entry.param_type->base) {
      case BaseKind::Real:
        return th;
      case BaseKind::PosReal:
        return std::max(th, cfg.clip_margin);
      case BaseKind::Interval:
        return std::min(std::max(th, cfg.clip_margin), 1 - cfg.clip_margin);
    }
    return th;
  };
  double theta = clip(theta0);
  Seed base(cfg.seed);
  SgdResult out;
  out.trace.reserve(static_cast<std::size_t>(cfg.steps));
  for (int k = 0; k < cfg.steps; ++k) {
    Value est = c.gradient_estimator(theta);
    double g = sample_estimator(est, base.derive(static_cast<std::uint64_t>(k))).primal;
    theta = clip(theta - cfg.learning_rate * g);
    out.trace.push_back(theta);
  }
  out.theta = theta;
  return out;
}

// --- enumeration oracle ----------------------------------------------------------
//
// A second interpreter, deliberately separate from the runtime: forward-mode
// scalars with their own operator definitions, plain environments, and flips
// resolved by enumerating both branches with weights.

namespace {

struct OD {
  double v = 0;
  double d = 0;
  OD() = default;
  OD(double v) : v(v) {}  // NOLINT: implicit constants
  OD(double v, double d) : v(v), d(d) {}
};

OD operator+(OD a, OD b) { return {a.v + b.v, a.d + b.d}; }
OD operator-(OD a, OD b) { return {a.v - b.v, a.d - b.d}; }
OD operator*(OD a, OD b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
OD operator/(OD a, OD b) {
  return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)};
}
OD exp(OD a) {
  double e = std::exp(a.v);
  return {e, e * a.d};
}
OD log(OD a) { return {std::log(a.v), a.d / a.v}; }
OD sin(OD a) { return {std::sin(a.v), std::cos(a.v) * a.d}; }
OD cos(OD a) { return {std::cos(a.v), -std::sin(a.v) * a.d}; }

double primal_of(double x) { return x; }
double primal_of(OD x) { return x.v; }

[[noreturn]] void unsupported(const std::string& what) {
  throw OracleUnsupported("enumeration oracle does not support " + what);
}

template <class T>
struct EV {
  enum class K { Unit, Bool, Nat, Num, Pair, Fun };
  using Env = std::map<std::string, EV<T>>;

  K k = K::Unit;
  bool b = false;
  std::uint64_t n = 0;
  T num{};
  std::shared_ptr<EV> first, second;
  std::string param;
  TermPtr body;
  std::shared_ptr<Env> env;

  static EV unit() { return {}; }
  static EV boolean(bool v) {
    EV e;
    e.k = K::Bool;
    e.b = v;
    return e;
  }
  static EV nat(std::uint64_t v) {
    EV e;
    e.k = K::Nat;
    e.n = v;
    return e;
  }
  static EV number(T v) {
    EV e;
    e.k = K::Num;
    e.num = v;
    return e;
  }
};

template <class T>
class Enumerator {
 public:
  using V = EV<T>;
  using Env = typename EV<T>::Env;

  static constexpr std::uint64_t kBudget = 1ull << 20;

  std::uint64_t paths = 0;

  T run_entry(const TermPtr& lambda_term, T theta) {
    Env empty;
    V fn = pure(empty, lambda_term);
    V out = apply(fn, V::number(theta));
    return as_num(out, "the program result");
  }

 private:
  T as_num(const V& v, const std::string& what) {
    if (v.k != V::K::Num) unsupported(what + " of a non-numeric kind");
    return v.num;
  }

  V apply(const V& f, const V& x) {
    if (f.k != V::K::Fun) unsupported("application of a non-function");
    Env env = *f.env;
    env.erase(f.param);
    env.emplace(f.param, x);
    return pure(env, f.body);
  }

  // Sum of weight * (cost + result) over all flip paths of a monadic term.
  T expectation(const Env& env, const TermPtr& m) {
    T total{};
    run(env, m, T(1.0), T(0.0), [&](const V& result, T weight, T cost) {
      if (++paths > kBudget) unsupported("programs beyond the flip path budget");
      total = total + weight * (cost + as_num(result, "an expectation body"));
    });
    return total;
  }

  void run(const Env& env, const TermPtr& t, T weight, T cost,
           const std::function<void(const V&, T, T)>& k) {
    switch (t->kind) {
      case Term::Kind::Return:
        k(pure(env, t->a), weight, cost);
        return;
      case Term::Kind::Do: {
        run_items(env, t, 0, weight, cost, k);
        return;
      }
      case Term::Kind::If: {
        V c = pure(env, t->a);
        if (c.k != V::K::Bool) unsupported("a non-boolean condition");
        run(env, c.b ? t->b : t->c, weight, cost, k);
        return;
      }
      case Term::Kind::Let: {
        Env inner = env;
        inner.erase(t->name);
        inner.emplace(t->name, pure(env, t->a));
        run(inner, t->b, weight, cost, k);
        return;
      }
      case Term::Kind::App: {
        std::vector<TermPtr> args;
        TermPtr head = t;
        while (head->kind == Term::Kind::App) {
          args.push_back(head->b);
          head = head->a;
        }
        std::reverse(args.begin(), args.end());
        if (head->kind == Term::Kind::PrimRef && args.size() == 1) {
          if (head->prim == Prim::FlipEnum || head->prim == Prim::FlipReinforce) {
            T p = as_num(pure(env, args[0]), "a flip probability");
            k(V::boolean(true), weight * p, cost);
            k(V::boolean(false), weight * (T(1.0) - p), cost);
            return;
          }
          if (head->prim == Prim::Addcost) {
            T c = as_num(pure(env, args[0]), "a cost");
            k(V::unit(), weight, cost + c);
            return;
          }
        }
        unsupported("sampling from " + describe_head(head));
      }
      default:
        unsupported("this probabilistic form");
    }
  }

  void run_items(const Env& env, const TermPtr& do_term, std::size_t i, T weight,
                 T cost, const std::function<void(const V&, T, T)>& k) {
    if (i == do_term->items.size()) {
      run(env, do_term->tail, weight, cost, k);
      return;
    }
    const Term::DoItem& item = do_term->items[i];
    if (item.kind != Term::DoItem::Kind::Bind) unsupported("a sugared do item");
    run(env, item.value, weight, cost,
        [&, i](const V& x, T w, T c) {
          Env inner = env;
          inner.erase(item.name);
          inner.emplace(item.name, x);
          run_items(inner, do_term, i + 1, w, c, k);
        });
  }

  static std::string describe_head(const TermPtr& head) {
    if (head->kind == Term::Kind::PrimRef) return prim_name(head->prim);
    if (head->kind == Term::Kind::Var) return "'" + head->name + "'";
    return "this form";
  }

  V pure(const Env& env, const TermPtr& t) {
    switch (t->kind) {
      case Term::Kind::Unit:
        return V::unit();
      case Term::Kind::BoolLit:
        return V::boolean(t->truth);
      case Term::Kind::NatLit:
        return V::nat(t->nat);
      case Term::Kind::NumLit:
        return V::number(T(t->num));
      case Term::Kind::Var: {
        auto it = env.find(t->name);
        if (it == env.end()) unsupported("the unbound name '" + t->name + "'");
        return it->second;
      }
      case Term::Kind::Lambda: {
        V f;
        f.k = V::K::Fun;
        f.param = t->name;
        f.body = t->a;
        f.env = std::make_shared<Env>(env);
        return f;
      }
      case Term::Kind::Let: {
        Env inner = env;
        inner.erase(t->name);
        inner.emplace(t->name, pure(env, t->a));
        return pure(inner, t->b);
      }
      case Term::Kind::If: {
        V c = pure(env, t->a);
        if (c.k != V::K::Bool) unsupported("a non-boolean condition");
        return pure(env, c.b ? t->b : t->c);
      }
      case Term::Kind::Pair: {
        V p;
        p.k = V::K::Pair;
        p.first = std::make_shared<V>(pure(env, t->a));
        p.second = std::make_shared<V>(pure(env, t->b));
        return p;
      }
      case Term::Kind::Fst: {
        V p = pure(env, t->a);
        if (p.k != V::K::Pair) unsupported("projection from a non-pair");
        return *p.first;
      }
      case Term::Kind::Snd: {
        V p = pure(env, t->a);
        if (p.k != V::K::Pair) unsupported("projection from a non-pair");
        return *p.second;
      }
      case Term::Kind::App:
        return pure_app(env, t);
      default:
        unsupported("this term form outside an expectation");
    }
  }

  V pure_app(const Env& env, const TermPtr& t) {
    std::vector<TermPtr> args;
    TermPtr head = t;
    while (head->kind == Term::Kind::App) {
      args.push_back(head->b);
      head = head->a;
    }
    std::reverse(args.begin(), args.end());

    if (head->kind == Term::Kind::PrimRef) {
      return prim_app(env, head->prim, args);
    }
    V f = pure(env, head);
    for (const TermPtr& a : args) f = apply(f, pure(env, a));
    return f;
  }

  V prim_app(const Env& env, Prim p, const std::vector<TermPtr>& args) {
    auto num = [&](std::size_t i) { return as_num(pure(env, args[i]), "an operand"); };
    auto nat = [&](std::size_t i) {
      V v = pure(env, args[i]);
      if (v.k != V::K::Nat) unsupported("a non-natural operand");
      return v.n;
    };
    auto need = [&](std::size_t n) {
      if (args.size() != n) unsupported("a partially applied primitive");
    };
    using std::cos;
    using std::exp;
    using std::log;
    using std::sin;
    switch (p) {
      case Prim::AddReal: need(2); return V::number(num(0) + num(1));
      case Prim::SubReal: need(2); return V::number(num(0) - num(1));
      case Prim::MulReal: need(2); return V::number(num(0) * num(1));
      case Prim::DivReal: need(2); return V::number(num(0) / num(1));
      case Prim::Exp: need(1); return V::number(exp(num(0)));
      case Prim::Log: need(1); return V::number(log(num(0)));
      case Prim::Sin: need(1); return V::number(sin(num(0)));
      case Prim::Cos: need(1); return V::number(cos(num(0)));
      case Prim::Pow: {
        need(2);
        T base = num(0);
        std::uint64_t e = nat(1);
        T acc(1.0);
        for (std::uint64_t i = 0; i < e; ++i) acc = acc * base;
        return V::number(acc);
      }
      case Prim::NatToReal: need(1); return V::number(T(static_cast<double>(nat(0))));
      case Prim::AddNat: need(2); return V::nat(nat(0) + nat(1));
      case Prim::SubNat: {
        need(2);
        std::uint64_t a = nat(0), b = nat(1);
        return V::nat(a >= b ? a - b : 0);
      }
      case Prim::MulNat: need(2); return V::nat(nat(0) * nat(1));
      case Prim::DivNat: {
        need(2);
        std::uint64_t b = nat(1);
        if (b == 0) unsupported("division by zero");
        return V::nat(nat(0) / b);
      }
      case Prim::Leq: {
        need(2);
        V a = pure(env, args[0]), b = pure(env, args[1]);
        if (a.k == V::K::Nat && b.k == V::K::Nat) return V::boolean(a.n <= b.n);
        return V::boolean(primal_of(as_num(a, "an operand")) <=
                          primal_of(as_num(b, "an operand")));
      }
      case Prim::Eq: {
        need(2);
        V a = pure(env, args[0]), b = pure(env, args[1]);
        if (a.k == V::K::Nat && b.k == V::K::Nat) return V::boolean(a.n == b.n);
        return V::boolean(primal_of(as_num(a, "an operand")) ==
                          primal_of(as_num(b, "an operand")));
      }
      case Prim::Forget: need(1); return pure(env, args[0]);
      case Prim::Expect: need(1); return V::number(expectation(env, args[0]));
      default:
        unsupported(std::string("the primitive ") + prim_name(p));
    }
  }
};

}  // namespace

EnumOracle enumerate_expectation(const Program& p, double theta) {
  EntryInfo entry = check_entry(p);
  EnumOracle out;

  Enumerator<OD> dual;
  OD d = dual.run_entry(entry.elaborated, OD(theta, 1.0));
  out.value = d.v;
  out.derivative = d.d;
  out.paths = dual.paths;

  const double h = 1e-6;
  Enumerator<double> up, down;
  out.fd_derivative = (up.run_entry(entry.elaborated, theta + h) -
                       down.run_entry(entry.elaborated, theta - h)) /
                      (2 * h);
  return out;
}

bool enumeration_supported(const Program& p) {
  try {
    enumerate_expectation(p, 0.3);
    return true;
  } catch (const OracleUnsupported&) {
    return false;
  }
}

// --- manifest ---------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void manifest_error(const std::string& origin, int line,
                                 const std::string& what) {
  std::ostringstream os;
  os << origin << ":" << line << ": " << what;
  throw std::runtime_error(os.str());
}

}  // namespace

const ManifestEntry* Manifest::find(const std::string& name) const {
  auto it = entries.find(name);
  return it == entries.end() ? nullptr : &it->second;
}

Manifest parse_manifest(const std::string& text, const std::string& origin) {
  Manifest m;
  ManifestEntry* current = nullptr;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = raw;
    if (std::size_t hash = line.find('#'); hash != std::string::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') manifest_error(origin, lineno, "unterminated section header");
      std::string name = trim(line.substr(1, line.size() - 2));
      if (name.empty()) manifest_error(origin, lineno, "empty section name");
      current = &m.entries[name];
      current->name = name;
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) manifest_error(origin, lineno, "expected key = value");
    if (!current) manifest_error(origin, lineno, "key outside any [section]");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key == "theta") {
      current->theta = std::strtod(value.c_str(), nullptr);
    } else if (key == "samples") {
      current->samples = std::strtoull(value.c_str(), nullptr, 10);
    } else if (key == "derivative") {
      current->derivative = value;
    } else if (key == "value") {
      current->value = value;
    } else if (key == "reject") {
      current->reject = value == "true";
    } else if (key == "note") {
      current->note = value;
    } else {
      manifest_error(origin, lineno, "unknown key '" + key + "'");
    }
  }
  return m;
}

Manifest load_manifest(const std::string& path) {
  return parse_manifest(read_file(path), path);
}

// --- oracle expressions --------------------------------------------------------------

namespace {

struct ExprParser {
  const std::string& text;
  std::size_t pos = 0;
  double theta;

  void skip() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }

  bool eat(char c) {
    skip();
    if (pos < text.size() && text[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) {
    throw std::runtime_error("oracle expression: " + what + " at offset " +
                             std::to_string(pos) + " in '" + text + "'");
  }

  double parse_expr() {
    double acc = parse_term();
    for (;;) {
      if (eat('+')) {
        acc += parse_term();
      } else if (eat('-')) {
        acc -= parse_term();
      } else {
        return acc;
      }
    }
  }

  double parse_term() {
    double acc = parse_factor();
    for (;;) {
      if (eat('*')) {
        acc *= parse_factor();
      } else if (eat('/')) {
        acc /= parse_factor();
      } else {
        return acc;
      }
    }
  }

  double parse_factor() {
    double base = parse_unary();
    if (eat('^')) return std::pow(base, parse_factor());
    return base;
  }

  double parse_unary() {
    if (eat('-')) return -parse_unary();
    return parse_atom();
  }

  double parse_atom() {
    skip();
    if (pos >= text.size()) fail("unexpected end");
    char c = text[pos];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      char* end = nullptr;
      double v = std::strtod(text.c_str() + pos, &end);
      pos = static_cast<std::size_t>(end - text.c_str());
      return v;
    }
    if (c == '(') {
      ++pos;
      double v = parse_expr();
      if (!eat(')')) fail("expected ')'");
      return v;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos;
      while (pos < text.size() &&
             (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_')) {
        ++pos;
      }
      std::string name = text.substr(start, pos - start);
      if (name == "theta") return theta;
      if (!eat('(')) fail("expected '(' after '" + name + "'");
      double a = parse_expr();
      if (!eat(')')) fail("expected ')'");
      if (name == "exp") return std::exp(a);
      if (name == "log") return std::log(a);
      if (name == "sin") return std::sin(a);
      if (name == "cos") return std::cos(a);
      if (name == "sqrt") return std::sqrt(a);
      if (name == "phi") return normal_pdf(a);
      if (name == "Phi") return normal_cdf(a);
      fail("unknown function '" + name + "'");
    }
    fail("unexpected character");
  }
};

}  // namespace

double eval_oracle_expr(const std::string& expr, double theta) {
  ExprParser p{expr, 0, theta};
  double v = p.parse_expr();
  p.skip();
  if (p.pos != expr.size()) p.fail("trailing characters");
  return v;
}

// --- validation -------------------------------------------------------------------------

ValidationResult validate_program(const Compiled& c, double theta,
                                  const McConfig& mc, const Manifest* manifest) {
  ValidationResult r;
  r.program = c.program.name;
  r.theta = theta;
  r.samples = mc.samples;

  McResult g = mc_mean(c.gradient_estimator(theta), mc);
  r.mean = g.mean;
  r.stderr_of_mean = g.stderr_of_mean;

  double oracle_noise = 0;
  bool have_oracle = false;
  try {
    EnumOracle e = enumerate_expectation(c.program, theta);
    r.oracle = e.derivative;
    r.oracle_kind = "enumeration";
    have_oracle = true;
  } catch (const OracleUnsupported&) {
  }
  if (!have_oracle && manifest) {
    if (const ManifestEntry* entry = manifest->find(c.program.name);
        entry && entry->derivative) {
      r.oracle = eval_oracle_expr(*entry->derivative, theta);
      r.oracle_kind = "manifest";
      have_oracle = true;
    }
  }
  if (!have_oracle) {
    // Centered difference of the primal estimator under common random numbers.
    const double h = 1e-3;
    c.require_theta(theta - h);
    c.require_theta(theta + h);
    Value up = c.primal_estimator(theta + h);
    Value down = c.primal_estimator(theta - h);
    Seed base(mc.seed);
    Kahan sum, square;
    for (std::uint64_t i = 0; i < mc.samples; ++i) {
      Seed si = base.derive(i);
      double d = (sample_estimator(up, si).primal - sample_estimator(down, si).primal) /
                 (2 * h);
      sum.add(d);
      square.add(d * d);
    }
    auto n = static_cast<double>(mc.samples);
    double fd_mean = sum.sum / n;
    double fd_var = square.sum / n - fd_mean * fd_mean;
    if (fd_var < 0) fd_var = 0;
    r.oracle = fd_mean;
    r.oracle_kind = "finite-difference";
    oracle_noise = 4 * std::sqrt(fd_var / n);
  }

  r.tolerance = std::max(4 * r.stderr_of_mean + oracle_noise, 1e-3);
  double err = std::fabs(r.mean - r.oracle);
  r.z = r.stderr_of_mean > 0 ? (r.mean - r.oracle) / r.stderr_of_mean
                             : (err == 0 ? 0 : std::numeric_limits<double>::infinity());
  r.pass = err <= r.tolerance;
  return r;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace adev
