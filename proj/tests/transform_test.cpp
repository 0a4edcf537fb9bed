#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "adev/transform.hpp"
#include "test_util.hpp"

using namespace adev;

namespace {

DerivedPrograms derive(const std::string& name) {
  return wrap_derivative(check_entry(testutil::load_corpus(name)));
}

const char* kTranslateGolden =
    "\\theta : I * R. E_D (do_D { b <- flip_reinforce_D theta; "
    "if b then return_D (0, 0) else return_D ((0, 0) -_D (theta /_D (2, 0))) })";

const char* kNormalizeGolden =
    "\\theta : I * R. flip_reinforce_D theta (\\b : B. "
    "if b then exact_D (0, 0) else exact_D ((0, 0) -_D (theta /_D (2, 0))))";

}  // namespace

TEST_CASE("types translate structurally") {
  CHECK(type_equal(ad_type(Type::interval()),
                   Type::product(Type::interval(), Type::real())));
  CHECK(type_equal(ad_type(Type::pos_real()),
                   Type::product(Type::pos_real(), Type::real())));
  CHECK(type_equal(ad_type(Type::boolean()), Type::boolean()));
  CHECK(type_equal(ad_type(Type::nat()), Type::nat()));
  CHECK(type_equal(ad_type(Type::star(BaseKind::Real)), Type::star(BaseKind::Real)));
  CHECK(type_equal(ad_type(Type::arrow(Type::real(), Type::real())),
                   Type::arrow(Type::product(Type::real(), Type::real()),
                               Type::product(Type::real(), Type::real()))));
  CHECK(type_equal(ad_type(Type::est()), est_translated()));
  // Probability types become continuation takers over the translated estimator.
  TypePtr pb = ad_type(Type::prob(Type::boolean()));
  CHECK(pb->kind == Type::Kind::ProbD);
  CHECK(type_equal(unfold_probd(pb),
                   Type::arrow(Type::arrow(Type::boolean(), est_translated()),
                               est_translated())));
}

TEST_CASE("flagship flip program translates to the frozen form") {
  DerivedPrograms d = derive("fig2_flip_reinforce");
  CHECK(pretty(d.translated) == kTranslateGolden);
  CHECK(pretty(normalize(d.translated)) == kNormalizeGolden);
}

TEST_CASE("translation preserves typability over the corpus") {
  for (const std::string& name : testutil::corpus_accepted()) {
    CAPTURE(name);
    EntryInfo entry = check_entry(testutil::load_corpus(name));
    DerivedPrograms d = wrap_derivative(entry);

    TypeEnv env;
    TypePtr want = ad_type(Type::arrow(entry.param_type, Type::est()));
    CHECK(type_equal(infer(env, d.translated).type, want));

    TypeEnv env2;
    TypePtr drv = Type::arrow(entry.param_type, Type::est());
    CHECK(type_equal(infer(env2, d.derivative).type, drv));
    TypeEnv env3;
    CHECK(type_equal(infer(env3, d.primal).type, drv));
  }
}

TEST_CASE("target terms refuse a second translation") {
  DerivedPrograms d = derive("fig2_flip_enum");
  CHECK_THROWS_AS(ad_term(d.translated), TransformError);
}

TEST_CASE("normalization is idempotent and preserves typing") {
  for (const std::string& name : testutil::corpus_accepted()) {
    CAPTURE(name);
    DerivedPrograms d = derive(name);
    TermPtr n1 = normalize(d.translated);
    TermPtr n2 = normalize(n1);
    CHECK(alpha_equal(n1, n2));
    TypeEnv env;
    TypePtr t1 = infer(env, d.translated).type;
    TypeEnv env2;
    CHECK(type_equal(infer(env2, n1).type, t1));
  }
}

TEST_CASE("the derivative program projects the tangent of the translated pair") {
  DerivedPrograms d = derive("fig2_flip_enum");
  // \theta : K. snd_* (fst (translated (theta, 1)))
  const TermPtr& lam = d.derivative;
  REQUIRE(lam->kind == Term::Kind::Lambda);
  CHECK(type_equal(lam->ann, Type::interval()));
  const TermPtr& app = lam->a;
  REQUIRE(app->kind == Term::Kind::App);
  CHECK(app->a->kind == Term::Kind::PrimDRef);
  CHECK(app->a->prim_d == PrimD::SndStar);
}
