#include <gtest/gtest.h>

#include "lohmm/lohmm.hpp"
#include "oracles.hpp"

using namespace lohmm;

namespace {

Lohmm fixture(const std::string& name) { return load_model_file(std::string(LOHMM_FIXTURES) + "/" + name); }

const char* kUserDecls = R"(
domain file = lohmm, readme, f1, f2 .
domain user = tex, prog .
state emacs/2 : file, user .
state latex/2 : file, user .
state ls/1 : user .
obs emacs/1 : file .
obs latex/1 : file .
obs ls/0 .
)";

std::vector<Violation> violations_of(const std::string& trans) {
  auto pm = detail::parse_model_text(std::string(kUserDecls) + trans, true);
  Lohmm m(pm.sig, detail::build_selection(pm), pm.delta);
  return validate(m);
}

}  // namespace

TEST(Validate, FixturesAreValid) {
  for (const char* f : {"fig1a.lohmm", "fig1b.lohmm", "composite.lohmm", "fig3-init.lohmm"})
    EXPECT_TRUE(validate(fixture(f)).empty()) << f;
}

TEST(Validate, ReportsNormalization) {
  auto v = violations_of(R"(
    trans 1 : start --> ls(_) .
    trans 0.5 : emacs(F, U) -- emacs(F) --> ls(U) .
    trans 0.4 : emacs(F, U) -- emacs(F) --> emacs(_, U) .
    trans 1 : latex(F, U) -- latex(F) --> ls(U) .
    trans 1 : ls(U) -- ls --> ls(U) .
  )");
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, Violation::Kind::Normalization);
  EXPECT_EQ(v[0].subject, "emacs(F, U)");
  EXPECT_THROW(fixture("broken_norm.lohmm"), ValidationError);
}

TEST(Validate, ReportsMissingMeet) {
  auto v = violations_of(R"(
    trans 1 : start --> ls(_) .
    trans 1 : emacs(F, U) -- emacs(F) --> ls(U) .
    trans 1 : emacs(lohmm, U) -- emacs(lohmm) --> ls(U) .
    trans 1 : emacs(F, tex) -- emacs(F) --> ls(tex) .
    trans 1 : latex(F, U) -- latex(F) --> ls(U) .
    trans 1 : ls(U) -- ls --> ls(U) .
  )");
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, Violation::Kind::WellFoundedness);
  EXPECT_EQ(v[0].subject, "emacs(lohmm, tex)");
}

TEST(Validate, ReportsCoverageAndTyping) {
  auto v = violations_of(R"(
    trans 1 : start --> ls(_) .
    trans 1 : emacs(F, tex) -- emacs(F) --> ls(tex) .
    trans 1 : latex(F, U) -- latex(F) --> ls(U) .
    trans 1 : ls(U) -- ls --> ls(U) .
  )");
  ASSERT_FALSE(v.empty());
  for (const auto& x : v) EXPECT_EQ(x.kind, Violation::Kind::Coverage);

  auto t = violations_of(R"(
    trans 1 : start --> ls(_) .
    trans 1 : emacs(F, U) -- emacs(U) --> ls(U) .
    trans 1 : latex(F, U) -- latex(F) --> ls(U) .
    trans 1 : ls(U) -- ls --> ls(U) .
  )");
  ASSERT_FALSE(t.empty());
  EXPECT_EQ(t[0].kind, Violation::Kind::Type);
}

TEST(Routing, MostSpecificBody) {
  Lohmm m = fixture("fig1a.lohmm");
  EXPECT_EQ(format_atom(most_specific_body(m, parse_atom("emacs(f1, tex)"))), "emacs(F, tex)");
  EXPECT_EQ(format_atom(most_specific_body(m, parse_atom("emacs(f1, prog)"))), "emacs(F, U)");
  EXPECT_EQ(format_atom(most_specific_body(m, parse_atom("latex(lohmm, prog)"))), "latex(lohmm, U)");
  EXPECT_EQ(format_atom(most_specific_body(m, start_atom())), "start");
}

TEST(Routing, MatchingTransitions) {
  Lohmm m = fixture("fig1a.lohmm");
  auto start = matching_transitions(m, start_atom());
  ASSERT_EQ(start.size(), 2u);
  EXPECT_DOUBLE_EQ(start[0].first.prob, 0.7);
  EXPECT_EQ(format_atom(start[0].first.head), "emacs(_, tex)");

  Lohmm b = fixture("fig1b.lohmm");
  auto latex = matching_transitions(b, parse_atom("latex(f1, tex)"));
  ASSERT_EQ(latex.size(), 3u);
  double sum = 0.0;
  for (const auto& [t, theta] : latex) {
    EXPECT_EQ(format_atom(t.body), "latex(F, U)");
    sum += t.prob;
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Selection, ProductOverBindings) {
  Lohmm m = fixture("composite.lohmm");
  EXPECT_DOUBLE_EQ(mu_prob(m, parse_atom("s(f(Z))"), parse_atom("s(f(3))")), 0.2);
  EXPECT_DOUBLE_EQ(mu_prob(m, parse_atom("o(1, Y, 3)"), parse_atom("o(1, 2, 3)")), 0.05);
  EXPECT_DOUBLE_EQ(mu_prob(m, parse_atom("o(1, 2, 3)"), parse_atom("o(1, 2, 3)")), 1.0);
  EXPECT_DOUBLE_EQ(mu_prob(m, parse_atom("o(X, X, Y)"), parse_atom("o(1, 1, 4)")), 0.25 * 0.5);
  EXPECT_THROW(mu_prob(m, parse_atom("o(X, Y, Z)"), parse_atom("o(1, 2, 9)")), DomainMismatch);
}

TEST(GroundStep, CompositeExample) {
  Lohmm m = fixture("composite.lohmm");
  EXPECT_DOUBLE_EQ(ground_step_prob(m, parse_atom("s(1)"), parse_atom("s(f(3))"), parse_atom("o(1, 2, 3)")), 0.005);
  EXPECT_EQ(ground_step_prob(m, parse_atom("s(1)"), parse_atom("s(f(3))"), parse_atom("o(2, 2, 3)")), 0.0);
}

TEST(GroundStep, FullyGroundClauseAndNonInstances) {
  Lohmm m = load_model(std::string(kUserDecls) + R"(
    trans 1 : start --> ls(_) .
    trans 0.6 : emacs(F, U) -- emacs(F) --> ls(U) .
    trans 0.4 : emacs(F, U) -- emacs(F) --> emacs(F, U) .
    trans 1 : latex(F, U) -- latex(F) --> ls(U) .
    trans 0.6 : ls(tex) -- ls --> emacs(lohmm, tex) .
    trans 0.4 : ls(tex) -- ls --> ls(tex) .
    trans 1 : ls(U) -- ls --> ls(U) .
  )");
  EXPECT_DOUBLE_EQ(ground_step_prob(m, parse_atom("ls(tex)"), parse_atom("emacs(lohmm, tex)"), parse_atom("ls")), 0.6);
  EXPECT_EQ(ground_step_prob(m, parse_atom("ls(tex)"), parse_atom("latex(lohmm, tex)"), parse_atom("ls")), 0.0);
  EXPECT_THROW(ground_step_prob(m, parse_atom("xdvi"), parse_atom("ls(tex)"), parse_atom("ls")), NoMatchingBody);
}

TEST(GroundStep, InvariantUnderClauseRenaming) {
  Lohmm m = fixture("fig1a.lohmm");
  std::vector<AbstractTransition> renamed;
  for (const auto& t : m.transitions()) renamed.push_back(freshen(t));
  Lohmm r(m.signature(), m.selection(), renamed);
  for (const auto& b : oracle::herbrand_states(m.signature()))
    for (const auto& h : oracle::herbrand_states(m.signature())) {
      if (is_start(h) || is_start(b)) continue;
      Atom o = Atom(b.predicate == "ls" ? "ls" : b.predicate, b.predicate == "ls" ? std::vector<Term>{}
                                                                                   : std::vector<Term>{b.args[0]});
      EXPECT_DOUBLE_EQ(ground_step_prob(m, b, h, o), ground_step_prob(r, b, h, o));
    }
}

TEST(ModelIo, RoundTripIsStable) {
  for (const char* f : {"fig1a.lohmm", "fig1b.lohmm", "composite.lohmm", "fig3-init.lohmm"}) {
    std::string once = save_model(fixture(f));
    std::string twice = save_model(load_model(once));
    EXPECT_EQ(once, twice) << f;
  }
}

TEST(ModelIo, DefaultsAndErrors) {
  Lohmm b = fixture("fig1b.lohmm");
  EXPECT_DOUBLE_EQ(b.selection().prob(0, 2), 0.25);
  EXPECT_THROW(load_model("domain d = a, b, a ."), SyntaxError);
  EXPECT_THROW(load_model("domain d = a . select d : b 1 ."), SyntaxError);
  EXPECT_THROW(load_model("domain d = a . state p/1 : d . trans 1 : start --> p(_)"), SyntaxError);
  try {
    load_model("domain d = a .\n\nbogus .");
    FAIL();
  } catch (const SyntaxError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(ModelIo, RenormalizesWithinTolerance) {
  Lohmm m = load_model(R"(
    domain d = a, b .
    state p/1 : d .
    obs o/0 .
    select d : a 0.5000000001, b 0.5 .
    trans 1 : start --> p(_) .
    trans 1 : p(X) -- o --> p(X) .
  )");
  EXPECT_NEAR(m.selection().prob(0, 0) + m.selection().prob(0, 1), 1.0, 1e-15);
}
