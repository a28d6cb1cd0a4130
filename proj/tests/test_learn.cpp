#include <gtest/gtest.h>

#include <cmath>

#include "lohmm/lohmm.hpp"
#include "oracles.hpp"
#include "random_models.hpp"

using namespace lohmm;

namespace {

const char* kGround = R"(
domain d = x .
state a/0 .
obs o1/0 . obs o2/0 . obs o3/0 .
trans 1 : start --> a .
trans 0.2 : a -- o1 --> a .
trans 0.5 : a -- o2 --> a .
trans 0.3 : a -- o3 --> a .
)";

const char* kSelect = R"(
domain d = a, b .
state p/1 : d .
obs o/0 .
select d : a 0.25, b 0.75 .
trans 1 : start --> p(_) .
trans 1 : p(X) -- o --> p(_) .
)";

ExpectedCounts ground_counts(double c1, double c2, double c3) {
  ExpectedCounts ec;
  ec.add(parse_atom("a"), parse_atom("a"), parse_atom("o1"), c1);
  ec.add(parse_atom("a"), parse_atom("a"), parse_atom("o2"), c2);
  ec.add(parse_atom("a"), parse_atom("a"), parse_atom("o3"), c3);
  return ec;
}

/// A random model with counts gathered under different parameters of the
/// same structure, so every counted triple stays possible.
struct Instance {
  Lohmm model;
  ExpectedCounts ec;
};

Instance random_instance(std::mt19937_64& rng, int i) {
  Lohmm s = toys::random_structure(rng, static_cast<std::size_t>(i % 4));
  Lohmm gen = with_params(s, toys::random_params(s, rng));
  Lohmm m = with_params(s, toys::random_params(s, rng));
  auto data = toys::sample_corpus(gen, 4, 3, 1000 + i);
  return {m, expected_counts(with_params(s, toys::random_params(s, rng)), data)};
}

}  // namespace

TEST(ExpectedScore, DeterministicCompletion) {
  Lohmm m = load_model(kGround);
  auto ec = ground_counts(2, 3, 4);
  EXPECT_NEAR(expected_score(m, params_from(m), ec), 2 * std::log(0.2) + 3 * std::log(0.5) + 4 * std::log(0.3),
              1e-12);
  EXPECT_EQ(expected_score(m, params_from(m), ExpectedCounts{}), 0.0);
}

TEST(ExpectedScore, MatchesOracleAndIgnoresOrder) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 10; ++i) {
    auto inst = random_instance(rng, i);
    double q = expected_score(inst.model, params_from(inst.model), inst.ec);
    EXPECT_NEAR(q, oracle::expected_score(inst.model, inst.ec), 1e-9 * std::max(1.0, std::abs(q)));
    ExpectedCounts reversed;
    for (auto it = inst.ec.entries().rbegin(); it != inst.ec.entries().rend(); ++it)
      reversed.add(it->b, it->h, it->o, it->count);
    EXPECT_NEAR(expected_score(inst.model, params_from(inst.model), reversed), q, 1e-9 * std::max(1.0, std::abs(q)));
  }
}

TEST(ExpectedScore, IncompatibleCounts) {
  Lohmm m = load_model(kGround);
  ExpectedCounts ec;
  ec.add(parse_atom("a"), parse_atom("a"), parse_atom("o4"), 1.0);
  EXPECT_THROW(expected_score(m, params_from(m), ec), IncompatibleCounts);
}

TEST(Gradient, TransitionClosedForm) {
  Lohmm m = load_model(kGround);
  auto g = grad_transition(m, params_from(m), ground_counts(2, 0, 4));
  EXPECT_NEAR(g[1], 2 / 0.2, 1e-9);
  EXPECT_NEAR(g[2], 0.0, 1e-12);
  EXPECT_NEAR(g[3], 4 / 0.3, 1e-9);
}

TEST(Gradient, SelectionClosedForm) {
  Lohmm m = load_model(kSelect);
  ExpectedCounts ec;
  ec.add(parse_atom("p(b)"), parse_atom("p(a)"), parse_atom("o"), 3.0);
  auto g = grad_selection(m, params_from(m), ec);
  EXPECT_NEAR(g[0][0], 3.0 / 0.25, 1e-9);
  EXPECT_NEAR(g[0][1], 0.0, 1e-12);
}

TEST(Gradient, ChainRuleClosedForm) {
  Lohmm m = load_model(R"(
    domain d = x .
    state a/0 .
    obs o1/0 . obs o2/0 .
    trans 1 : start --> a .
    trans 0.5 : a -- o1 --> a .
    trans 0.5 : a -- o2 --> a .
  )");
  auto b = chain_to_beta({0.0, 3.0, 0.0}, {{0.0}}, m);
  EXPECT_NEAR(b.trans[1], 0.75, 1e-12);
  EXPECT_NEAR(b.trans[2], -0.75, 1e-12);
  auto u = chain_to_beta({1.0, 2.0, 2.0}, {{5.0}}, m);
  EXPECT_NEAR(u.trans[1], 0.0, 1e-12);
  EXPECT_NEAR(u.trans[2], 0.0, 1e-12);
  EXPECT_NEAR(u.select[0][0], 0.0, 1e-12);
}

TEST(Gradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 12; ++i) {
    auto inst = random_instance(rng, i);
    const Lohmm& m = inst.model;
    ParamVector p = params_from(m);
    auto gt = grad_transition(m, p, inst.ec);
    auto ft = oracle::fd_transition(m, inst.ec);
    for (std::size_t k = 0; k < gt.size(); ++k) EXPECT_LT(oracle::relative_error(gt[k], ft[k]), 1e-4);
    auto gs = grad_selection(m, p, inst.ec);
    auto fs = oracle::fd_selection(m, inst.ec);
    for (std::size_t d = 0; d < gs.size(); ++d)
      for (std::size_t c = 0; c < gs[d].size(); ++c) EXPECT_LT(oracle::relative_error(gs[d][c], fs[d][c]), 1e-4);
    auto gb = chain_to_beta(gt, gs, m, p);
    auto fb = oracle::fd_beta(m, p, inst.ec);
    for (std::size_t k = 0; k < gb.trans.size(); ++k) EXPECT_LT(oracle::relative_error(gb.trans[k], fb.trans[k]), 1e-4);
    for (std::size_t d = 0; d < gb.select.size(); ++d)
      for (std::size_t c = 0; c < gb.select[d].size(); ++c)
        EXPECT_LT(oracle::relative_error(gb.select[d][c], fb.select[d][c]), 1e-4);
  }
}

TEST(Params, SoftmaxShiftInvariance) {
  Lohmm m = load_model(kGround);
  ParamVector p = params_from(m);
  ParamVector q = p;
  for (std::size_t i = 1; i < 4; ++i) q.trans[i] += 7.5;
  Lohmm a = with_params(m, p), b = with_params(m, q);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(a.transitions()[i].prob, b.transitions()[i].prob, 1e-12);
  EXPECT_NEAR(a.transitions()[1].prob, 0.2, 1e-12);
}

TEST(Improve, ConvergesToMultinomialMle) {
  Lohmm m = load_model(kGround);
  OptimizerConfig cfg;
  cfg.max_iterations = 500;
  cfg.tolerance = 1e-14;
  auto res = improve_params(m, ground_counts(5, 3, 2), params_from(m), cfg);
  Lohmm fit = with_params(m, res.params);
  EXPECT_NEAR(fit.transitions()[1].prob, 0.5, 1e-3);
  EXPECT_NEAR(fit.transitions()[2].prob, 0.3, 1e-3);
  EXPECT_NEAR(fit.transitions()[3].prob, 0.2, 1e-3);
}

TEST(Improve, StationaryStartIsKept) {
  Lohmm m = load_model(kGround);
  OptimizerConfig cfg;
  cfg.restarts = 1;
  auto start = params_from(m);
  auto res = improve_params(m, ground_counts(2, 5, 3), start, cfg);
  EXPECT_NEAR(res.q, expected_score(m, start, ground_counts(2, 5, 3)), 1e-9);
  Lohmm fit = with_params(m, res.params);
  EXPECT_NEAR(fit.transitions()[2].prob, 0.5, 1e-6);
}

TEST(Improve, NeverBelowStart) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 10; ++i) {
    auto inst = random_instance(rng, i);
    auto start = params_from(inst.model);
    OptimizerConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(i);
    auto res = improve_params(inst.model, inst.ec, start, cfg);
    EXPECT_GE(res.q, expected_score(inst.model, start, inst.ec) - 1e-12);
  }
}

TEST(Gem, MonotoneAndZeroIterations) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 6; ++i) {
    Lohmm truth = toys::random_model(rng, static_cast<std::size_t>(i % 3));
    auto data = toys::sample_corpus(truth, 15, 5, 50 + i);
    ParamVector p0 = toys::random_params(truth, rng);
    auto res = gem_inner_loop(truth, p0, data, 8);
    for (std::size_t k = 1; k < res.history.size(); ++k) EXPECT_GE(res.history[k], res.history[k - 1] - 1e-9);
    auto zero = gem_inner_loop(truth, p0, data, 0);
    EXPECT_EQ(zero.params.trans, p0.trans);
    EXPECT_NEAR(zero.log_likelihood, corpus_log_likelihood(with_params(truth, p0), data), 1e-9);
  }
}

TEST(Gem, TruthIsNearStationary) {
  std::mt19937_64 rng(14);
  Lohmm truth = toys::random_model(rng, 2);
  auto data = toys::sample_corpus(truth, 200, 6, 9);
  OptimizerConfig cfg;
  cfg.tolerance = 1e-3;
  auto res = gem_inner_loop(truth, params_from(truth), data, 10, cfg);
  EXPECT_LE(res.history.size(), 3u);
}
