#include <gtest/gtest.h>

#include <cmath>

#include "lohmm/lohmm.hpp"
#include "oracles.hpp"
#include "random_models.hpp"

using namespace lohmm;

namespace {

Lohmm fixture(const std::string& name) { return load_model_file(std::string(LOHMM_FIXTURES) + "/" + name); }

Sequence seq(const std::string& line) { return parse_sequence(line); }

const char* kChain = R"(
domain d = x .
state a/0 . state b/0 . state c/0 .
obs o/0 . obs q/0 .
trans 0.7 : start --> a .
trans 0.3 : start --> c .
trans 0.6 : a -- o --> b .
trans 0.4 : a -- q --> c .
trans 1 : b -- o --> b .
trans 1 : c -- q --> c .
)";

}  // namespace

TEST(LogLikelihood, DeterministicChain) {
  Lohmm m = load_model(kChain);
  EXPECT_NEAR(log_likelihood(m, seq("o")), std::log(0.42), 1e-14);
  EXPECT_NEAR(log_likelihood(m, seq("o, o, o")), std::log(0.42), 1e-14);
  EXPECT_EQ(log_likelihood(m, seq("o, q")), kNegInf);
}

TEST(LogLikelihood, EmptySequenceHasProbabilityOne) {
  EXPECT_EQ(log_likelihood(fixture("fig1a.lohmm"), Sequence{}), 0.0);
}

TEST(LogLikelihood, MatchesPathEnumeration) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 8; ++trial) {
    Lohmm m = toys::random_model(rng, trial % 4);
    for (const auto& s : toys::sample_corpus(m, 3, 1 + trial % 4, 100 + trial)) {
      auto e = oracle::enumerate_paths(m, s);
      EXPECT_NEAR(log_likelihood(m, s), std::log(e.likelihood), 1e-10);
    }
  }
}

TEST(Trellis, ForwardBackwardAgreeAtEveryStep) {
  Lohmm m = fixture("fig1a.lohmm");
  GroundEngine engine(m);
  auto tr = engine.forward_backward(seq("emacs(lohmm), latex(lohmm), emacs(lohmm), ls, emacs(f1)"));
  ASSERT_EQ(tr.layers.size(), 7u);
  EXPECT_EQ(tr.layers[0].size(), 1u);
  EXPECT_EQ(tr.layers[0][0].state, engine.start_id());
  for (std::size_t t = 0; t < tr.layers.size(); ++t) {
    double total = 0.0;
    for (std::size_t i = 0; i < tr.layers[t].size(); ++i) total += std::exp(tr.log_alpha(t, i) + tr.log_beta(t, i));
    EXPECT_NEAR(std::log(total), tr.log_likelihood, 1e-8) << t;
  }
}

TEST(ExpectedCounts, DeterministicModelGivesPathCounts) {
  Lohmm m = load_model(kChain);
  auto ec = expected_counts(m, {seq("o, o, o")});
  EXPECT_NEAR(ec.get(start_atom(), parse_atom("a"), std::nullopt), 1.0, 1e-12);
  EXPECT_NEAR(ec.get(parse_atom("a"), parse_atom("b"), parse_atom("o")), 1.0, 1e-12);
  EXPECT_NEAR(ec.get(parse_atom("b"), parse_atom("b"), parse_atom("o")), 2.0, 1e-12);
  EXPECT_NEAR(ec.total(), 4.0, 1e-12);
}

TEST(ExpectedCounts, MatchEnumerationPosterior) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 6; ++trial) {
    Lohmm m = toys::random_model(rng, trial % 3);
    auto s = toys::sample_corpus(m, 1, 3, 40 + trial).front();
    auto e = oracle::enumerate_paths(m, s);
    auto ec = expected_counts(m, {s});
    double total = 0.0;
    for (const auto& entry : ec.entries()) {
      total += entry.count;
      EXPECT_GE(entry.count, 0.0);
      auto it = e.posterior_counts.find(ExpectedCounts::key(entry.b, entry.h, entry.o));
      ASSERT_NE(it, e.posterior_counts.end());
      EXPECT_NEAR(entry.count, it->second, 1e-8);
    }
    for (const auto& [k, v] : e.posterior_counts) {
      if (v > 1e-12) {
        EXPECT_GT(ec.size(), 0u) << k;
      }
    }
    EXPECT_NEAR(total, 4.0, 1e-8);
  }
}

TEST(ExpectedCounts, MassPerSequenceAndStart) {
  Lohmm m = fixture("fig1a.lohmm");
  Rng rng(3);
  std::vector<Sequence> data;
  std::size_t steps = 0;
  for (int i = 0; i < 20; ++i) {
    data.push_back(sample(m, i % 6, rng).obs);
    steps += data.back().size() + 1;
  }
  auto ec = expected_counts(m, data);
  EXPECT_NEAR(ec.total(), static_cast<double>(steps), 1e-8);
  double start_mass = 0.0;
  for (const auto& e : ec.entries())
    if (is_start(e.b)) start_mass += e.count;
  EXPECT_NEAR(start_mass, 20.0, 1e-8);
  EXPECT_EQ(ec.total_sequences, 20u);
}

TEST(ExpectedCounts, MergeIsAdditive) {
  Lohmm m = fixture("fig1a.lohmm");
  Rng rng(9);
  auto a = sample(m, 4, rng).obs;
  auto b = sample(m, 5, rng).obs;
  auto both = expected_counts(m, {a, b});
  auto merged = expected_counts(m, {a});
  merged.merge(expected_counts(m, {b}));
  ASSERT_EQ(both.size(), merged.size());
  for (const auto& e : both.entries()) EXPECT_NEAR(merged.get(e.b, e.h, e.o), e.count, 1e-12);
}

TEST(ExpectedCounts, ZeroLikelihoodSequenceNamesIndex) {
  Lohmm m = load_model(kChain);
  try {
    expected_counts(m, {seq("o"), seq("o, q")});
    FAIL();
  } catch (const ZeroLikelihoodSequence& e) {
    EXPECT_EQ(e.index(), 1u);
  }
}

TEST(Sample, ShapesAndStart) {
  Lohmm m = fixture("fig1a.lohmm");
  Rng rng(1);
  auto s0 = sample(m, 0, rng);
  EXPECT_EQ(s0.hidden.size(), 2u);
  EXPECT_TRUE(is_start(s0.hidden[0]));
  EXPECT_TRUE(s0.obs.empty());
  auto s = sample(m, 15, rng);
  EXPECT_EQ(s.hidden.size(), 17u);
  EXPECT_EQ(s.obs.size(), 15u);
  for (const auto& h : s.hidden) EXPECT_TRUE(is_ground(h));
}

TEST(Sample, SharedVariablesCarryOver) {
  Lohmm m = fixture("fig1a.lohmm");
  Rng rng(21);
  int checked = 0;
  for (int i = 0; i < 300; ++i) {
    auto s = sample(m, 10, rng);
    for (std::size_t t = 1; t + 1 < s.hidden.size(); ++t) {
      const Atom& b = s.hidden[t];
      const Atom& h = s.hidden[t + 1];
      if (b.predicate == "emacs" && b.args[1].name == "tex" && h.predicate == "latex") {
        EXPECT_EQ(h.args[0], b.args[0]);
        EXPECT_EQ(h.args[1].name, "tex");
        EXPECT_EQ(s.obs[t - 1].args[0], b.args[0]);
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 50);
}

TEST(Sample, FirstStateFrequencyMatchesStartProbability) {
  Lohmm m = fixture("fig1a.lohmm");
  Rng rng(2024);
  const int n = 10000;
  int emacs = 0;
  GroundEngine engine(m);
  for (int i = 0; i < n; ++i) emacs += engine.sample(0, rng).hidden[1].predicate == "emacs";
  const double sigma = std::sqrt(n * 0.7 * 0.3);
  EXPECT_NEAR(emacs, 0.7 * n, 3 * sigma);
}

TEST(Sample, TransitionFrequenciesMatchStepProbabilities) {
  Lohmm m = fixture("fig1a.lohmm");
  Rng rng(77);
  int from = 0, to = 0;
  GroundEngine engine(m);
  for (int i = 0; i < 4000; ++i) {
    auto s = engine.sample(6, rng);
    for (std::size_t t = 1; t + 1 < s.hidden.size(); ++t)
      if (format_atom(s.hidden[t]) == "ls(prog)") {
        ++from;
        to += format_atom(s.hidden[t + 1]) == "ls(prog)";
      }
  }
  ASSERT_GT(from, 500);
  const double p = 0.2;
  EXPECT_NEAR(static_cast<double>(to) / from, p, 3 * std::sqrt(p * (1 - p) / from));
}

TEST(Classify, PriorsAndTies) {
  Lohmm m = fixture("fig1a.lohmm");
  Sequence s = seq("emacs(lohmm), latex(lohmm)");
  EXPECT_EQ(classify({{"a", {m, 0.1}}, {"b", {m, 0.9}}}, s), "b");
  EXPECT_EQ(classify({{"b", {m, 0.5}}, {"a", {m, 0.5}}}, s), "a");
  EXPECT_EQ(classify({{"only", {m, 1.0}}}, s), "only");
  EXPECT_THROW(classify({{"a", {m, 1.0}}}, seq("latex(lohmm), emacs(readme), latex(f1)")), AllZeroLikelihood);
}
