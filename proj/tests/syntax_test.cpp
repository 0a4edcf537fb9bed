#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "adev/syntax.hpp"
#include "test_util.hpp"

using namespace adev;
using testutil::TermGen;

TEST_CASE("print/parse round trip over generated terms") {
  TermGen gen(20260814);
  for (int i = 0; i < 1000; ++i) {
    TermPtr t = gen.term();
    std::string printed = pretty(t);
    CAPTURE(printed);
    Program back = parse_program(printed, "roundtrip");
    CHECK(alpha_equal(t, back.term));
  }
}

TEST_CASE("corpus files parse and reprint canonically") {
  Program p = testutil::load_corpus("fig2_flip_enum");
  CHECK(pretty(p.term) ==
        "\\theta : I. E (do { b <- flip_enum theta; if b then return 0 else "
        "return (0 - theta / 2) })");
  for (const std::string& name : testutil::corpus_accepted()) {
    Program q = testutil::load_corpus(name);
    Program again = parse_program(pretty(q.term), name);
    CHECK(alpha_equal(q.term, again.term));
  }
}

TEST_CASE("operator precedence and associativity") {
  auto parse = [](const char* s) { return parse_program(s, "t").term; };
  CHECK(alpha_equal(parse("1 + 2 * 3"), parse("1 + (2 * 3)")));
  CHECK(alpha_equal(parse("1 - 2 - 3"), parse("(1 - 2) - 3")));
  CHECK(alpha_equal(parse("1 / 2 / 3"), parse("(1 / 2) / 3")));
  CHECK(alpha_equal(parse("-2 + 1"), parse("(0 - 2) + 1")));
  CHECK_FALSE(alpha_equal(parse("1 + 2 * 3"), parse("(1 + 2) * 3")));
  CHECK(alpha_equal(parse("\\f : R -> R. f 1 + 2"), parse("\\f : R -> R. (f 1) + 2")));
}

TEST_CASE("glued star types") {
  Program p = parse_program("\\x : R*. forget x", "t");
  CHECK(type_equal(p.term->ann, Type::star(BaseKind::Real)));
  Program q = parse_program("\\x : I * R. x", "t");
  CHECK(type_equal(q.term->ann, Type::product(Type::interval(), Type::real())));
  // `I*` with a following atom keeps the star on the type.
  Program r = parse_program("\\x : I* * R. x", "t");
  CHECK(type_equal(r.term->ann,
                   Type::product(Type::star(BaseKind::Interval), Type::real())));
}

TEST_CASE("desugar rewrites do items to plain binds and is idempotent") {
  Program p = parse_program(
      "E (do { let c = 1; b <- flip_enum 0.5; addcost c; return (c + 1) })", "t");
  TermPtr d = desugar(p.term);
  const TermPtr& blk = d->b;
  REQUIRE(blk->kind == Term::Kind::Do);
  for (const auto& item : blk->items) CHECK(item.kind == Term::DoItem::Kind::Bind);
  CHECK(alpha_equal(d, desugar(d)));

  TermGen gen(7);
  for (int i = 0; i < 200; ++i) {
    TermPtr t = desugar(gen.term());
    CHECK(alpha_equal(t, desugar(t)));
  }
}

TEST_CASE("alpha equivalence") {
  auto parse = [](const char* s) { return parse_program(s, "t").term; };
  CHECK(alpha_equal(parse("\\x : R. x"), parse("\\y : R. y")));
  CHECK_FALSE(alpha_equal(parse("\\x : R. x"), parse("\\y : R. 0")));
  CHECK_FALSE(alpha_equal(parse("\\x : R. x"), parse("\\y : I. y")));
  CHECK(alpha_equal(parse("\\x : R. \\y : R. x"), parse("\\a : R. \\b : R. a")));
  CHECK_FALSE(alpha_equal(parse("\\x : R. \\y : R. x"), parse("\\a : R. \\b : R. b")));
  // Do binds rename like lambda binders.
  Program a = parse_program("do { x <- sample; return x }", "t");
  Program b = parse_program("do { y <- sample; return y }", "t");
  CHECK(alpha_equal(a.term, b.term));
  Program c = parse_program("do { x <- sample; return 0 }", "t");
  CHECK_FALSE(alpha_equal(a.term, c.term));
}

TEST_CASE("comments and whitespace") {
  Program p = parse_program("-- leading note\n  1 + -- inline\n  2\n", "t");
  CHECK(alpha_equal(p.term, parse_program("1 + 2", "t").term));
}

TEST_CASE("parse errors carry positions") {
  CHECK_THROWS_AS(parse_program("\\x : R. (x", "t"), ParseError);
  CHECK_THROWS_AS(parse_program("do { x <- }", "t"), ParseError);
  CHECK_THROWS_AS(parse_program("", "t"), ParseError);
  CHECK_THROWS_AS(parse_program("1 + 2 extra ???", "t"), ParseError);
  try {
    parse_program("\\x : R.\n(x +", "t");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
}

TEST_CASE("literal annotations") {
  Program p = parse_program("0.5 : I", "t");
  REQUIRE(p.term->lit_ann.has_value());
  CHECK(type_equal(*p.term->lit_ann, Type::interval()));
  CHECK_THROWS_AS(parse_program("1 : B", "t"), ParseError);
}
