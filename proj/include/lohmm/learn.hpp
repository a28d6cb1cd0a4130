#pragma once

// Parameter estimation: expected score Q over frozen counts, analytic
// gradients in probability space, softmax reparameterization, a
// line-search ascent M-step with restarts, and the inner GEM loop.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <ostream>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lohmm/corpus.hpp"
#include "lohmm/errors.hpp"
#include "lohmm/logic.hpp"
#include "lohmm/model.hpp"
#include "lohmm/semantics.hpp"

namespace lohmm {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b);
}

/// Unconstrained parameters: one β per clause (softmax within its body
/// group) and one β per domain constant (softmax within the domain). The
/// same shape carries gradients.
struct ParamVector {
  std::vector<double> trans;
  std::vector<std::vector<double>> select;
};

inline constexpr double kMinLogProb = -50.0;

inline ParamVector params_from(const Lohmm& m) {
  auto lg = [](double p) { return p > 0.0 ? std::max(std::log(p), kMinLogProb) : kMinLogProb; };
  ParamVector out;
  for (const auto& t : m.transitions()) out.trans.push_back(lg(t.prob));
  for (std::size_t d = 0; d < m.selection().domain_count(); ++d) {
    out.select.emplace_back();
    for (double p : m.selection().domain(d)) out.select.back().push_back(lg(p));
  }
  return out;
}

namespace detail {

inline void softmax(const std::vector<double>& beta, const std::vector<std::size_t>& idx, std::vector<double>& out) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i : idx) mx = std::max(mx, beta[i]);
  double z = 0.0;
  for (std::size_t i : idx) z += std::exp(beta[i] - mx);
  for (std::size_t i : idx) out[i] = std::exp(beta[i] - mx) / z;
}

}  // namespace detail

/// Probabilities induced by β: clause probabilities per body group and the
/// selection distribution per domain.
inline Lohmm with_params(const Lohmm& m, const ParamVector& p) {
  std::vector<double> probs(m.transitions().size(), 0.0);
  for (const auto& g : m.bodies()) detail::softmax(p.trans, g.clauses, probs);
  SelectionDistribution mu = m.selection();
  for (std::size_t d = 0; d < mu.domain_count(); ++d) {
    std::vector<std::size_t> idx(p.select.at(d).size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    detail::softmax(p.select[d], idx, mu.domain(d));
  }
  return m.with_transition_probs(probs).with_selection(std::move(mu));
}

struct OptimizerConfig {
  std::size_t max_iterations = 10;
  std::size_t restarts = 5;
  double tolerance = 1e-6;
  std::size_t max_halvings = 40;
  std::uint64_t seed = 1;
  std::ostream* trace = nullptr;
};

// ---------------------------------------------------------------------------
// Compiled counts
// ---------------------------------------------------------------------------

/// ec triples reduced to their structural explanation under one model: every
/// triple lists the clauses that can generate it, each with the
/// (domain, constant) choices that μ makes along the way. Variables bound by
/// body matching are not selected and contribute nothing.
struct CompiledCounts {
  struct Term {
    std::size_t clause;
    std::vector<std::pair<std::size_t, std::size_t>> selections;
  };
  struct Triple {
    double count;
    std::vector<Term> terms;
    std::size_t entry;  // index into ExpectedCounts::entries()
  };
  std::vector<Triple> triples;
  double total = 0.0;
};

namespace detail {

inline bool record_selections(const Lohmm& m, std::size_t clause, const Substitution& theta,
                              std::vector<std::pair<std::size_t, std::size_t>>& out) {
  for (const auto& [v, t] : theta) {
    auto d = m.var_domain(clause, v);
    if (!d || !t.is_constant()) return false;
    auto c = m.signature().constant_index(*d, t.name);
    if (!c) return false;
    out.emplace_back(*d, *c);
  }
  return true;
}

inline std::string triple_label(const ExpectedCounts::Entry& e) { return ExpectedCounts::key(e.b, e.h, e.o); }

}  // namespace detail

/// Throws IncompatibleCounts when a positive-count triple cannot be produced
/// by the model's structure.
inline CompiledCounts compile_counts(const Lohmm& m, const ExpectedCounts& ec) {
  CompiledCounts out;
  std::unordered_map<std::string, std::vector<ClauseMatch>> routing;
  const auto& entries = ec.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (e.count == 0.0) continue;
    std::string bkey = format_atom(e.b);
    auto it = routing.find(bkey);
    if (it == routing.end()) {
      std::vector<ClauseMatch> ms;
      try {
        ms = matching_clauses(m, e.b);
      } catch (const NoMatchingBody& err) {
        throw IncompatibleCounts(detail::triple_label(e) + ": " + err.what());
      }
      it = routing.emplace(std::move(bkey), std::move(ms)).first;
    }
    CompiledCounts::Triple tr{e.count, {}, i};
    for (const auto& cm : it->second) {
      const auto& cl = m.transitions()[cm.clause];
      if (cl.obs.has_value() != e.o.has_value()) continue;
      Atom head = apply(cl.head, cm.theta);
      auto theta_h = subsumes(head, e.h);
      if (!theta_h) continue;
      CompiledCounts::Term term{cm.clause, {}};
      if (!detail::record_selections(m, cm.clause, *theta_h, term.selections)) continue;
      if (cl.obs) {
        Atom o = apply(apply(*cl.obs, cm.theta), *theta_h);
        auto theta_o = subsumes(o, *e.o);
        if (!theta_o) continue;
        if (!detail::record_selections(m, cm.clause, *theta_o, term.selections)) continue;
      }
      tr.terms.push_back(std::move(term));
    }
    if (tr.terms.empty()) throw IncompatibleCounts(detail::triple_label(e) + " has no generating clause");
    out.total += e.count;
    out.triples.push_back(std::move(tr));
  }
  return out;
}

namespace detail {

inline double term_prob(const Lohmm& m, const CompiledCounts::Term& t) {
  double p = m.transitions()[t.clause].prob;
  for (const auto& [d, c] : t.selections) p *= m.selection().prob(d, c);
  return p;
}

inline double triple_prob(const Lohmm& m, const CompiledCounts& cc, const CompiledCounts::Triple& tr,
                          const ExpectedCounts* ec) {
  double p = 0.0;
  for (const auto& t : tr.terms) p += term_prob(m, t);
  if (!(p >= 1e-300)) {
    std::string label = ec ? triple_label(ec->entries()[tr.entry]) : std::to_string(tr.entry);
    throw IncompatibleCounts(label + " has zero probability");
  }
  (void)cc;
  return p;
}

}  // namespace detail

/// Q over a model whose probabilities are already set.
inline double expected_score(const Lohmm& m, const CompiledCounts& cc) {
  double q = 0.0;
  for (const auto& tr : cc.triples) q += tr.count * std::log(detail::triple_prob(m, cc, tr, nullptr));
  return q;
}

inline double expected_score(const Lohmm& m, const ParamVector& params, const ExpectedCounts& ec) {
  Lohmm mp = with_params(m, params);
  return expected_score(mp, compile_counts(mp, ec));
}

/// ∂Q/∂λ_cl per clause.
inline std::vector<double> grad_transition(const Lohmm& m, const CompiledCounts& cc) {
  std::vector<double> g(m.transitions().size(), 0.0);
  for (const auto& tr : cc.triples) {
    double w = tr.count / detail::triple_prob(m, cc, tr, nullptr);
    for (const auto& t : tr.terms) {
      double s = 1.0;
      for (const auto& [d, c] : t.selections) s *= m.selection().prob(d, c);
      g[t.clause] += w * s;
    }
  }
  return g;
}

/// ∂Q/∂λ_d(τ) per domain constant, by the product rule over selections.
inline std::vector<std::vector<double>> grad_selection(const Lohmm& m, const CompiledCounts& cc) {
  std::vector<std::vector<double>> g;
  for (std::size_t d = 0; d < m.selection().domain_count(); ++d) g.emplace_back(m.selection().domain(d).size(), 0.0);
  for (const auto& tr : cc.triples) {
    double w = tr.count / detail::triple_prob(m, cc, tr, nullptr);
    for (const auto& t : tr.terms) {
      const double p = m.transitions()[t.clause].prob;
      const auto& sel = t.selections;
      for (std::size_t k = 0; k < sel.size(); ++k) {
        double rest = p;
        for (std::size_t j = 0; j < sel.size(); ++j)
          if (j != k) rest *= m.selection().prob(sel[j].first, sel[j].second);
        g[sel[k].first][sel[k].second] += w * rest;
      }
    }
  }
  return g;
}

inline std::vector<double> grad_transition(const Lohmm& m, const ParamVector& params, const ExpectedCounts& ec) {
  Lohmm mp = with_params(m, params);
  return grad_transition(mp, compile_counts(mp, ec));
}

inline std::vector<std::vector<double>> grad_selection(const Lohmm& m, const ParamVector& params,
                                                       const ExpectedCounts& ec) {
  Lohmm mp = with_params(m, params);
  return grad_selection(mp, compile_counts(mp, ec));
}

/// Softmax chain rule: ∂Q/∂β_ij = λ_ij (∂Q/∂λ_ij − Σ_l λ_il ∂Q/∂λ_il),
/// with λ read from `mp` (a model carrying the induced probabilities).
inline ParamVector chain_to_beta(const std::vector<double>& grad_trans,
                                 const std::vector<std::vector<double>>& grad_select, const Lohmm& mp) {
  ParamVector out;
  out.trans.assign(grad_trans.size(), 0.0);
  for (const auto& g : mp.bodies()) {
    double avg = 0.0;
    for (std::size_t c : g.clauses) avg += mp.transitions()[c].prob * grad_trans[c];
    for (std::size_t c : g.clauses) out.trans[c] = mp.transitions()[c].prob * (grad_trans[c] - avg);
  }
  for (std::size_t d = 0; d < grad_select.size(); ++d) {
    const auto& lam = mp.selection().domain(d);
    double avg = 0.0;
    for (std::size_t i = 0; i < lam.size(); ++i) avg += lam[i] * grad_select[d][i];
    out.select.emplace_back(lam.size(), 0.0);
    for (std::size_t i = 0; i < lam.size(); ++i) out.select[d][i] = lam[i] * (grad_select[d][i] - avg);
  }
  return out;
}

inline ParamVector chain_to_beta(const std::vector<double>& grad_trans,
                                 const std::vector<std::vector<double>>& grad_select, const Lohmm& m,
                                 const ParamVector& params) {
  return chain_to_beta(grad_trans, grad_select, with_params(m, params));
}

// ---------------------------------------------------------------------------
// M-step
// ---------------------------------------------------------------------------

struct ImproveResult {
  ParamVector params;
  double q = 0.0;
};

namespace detail {

/// Q and its β-gradient over a fixed structure; the compiled form is reused
/// because induced probabilities never reach exact zero.
class ScoreFunction {
 public:
  ScoreFunction(const Lohmm& m, const ExpectedCounts& ec) : m_(m), cc_(compile_counts(m, ec)) {}

  double value(const ParamVector& p) const {
    try {
      return expected_score(with_params(m_, p), cc_);
    } catch (const IncompatibleCounts&) {
      return -std::numeric_limits<double>::infinity();
    }
  }

  ParamVector gradient(const ParamVector& p) const {
    Lohmm mp = with_params(m_, p);
    return chain_to_beta(grad_transition(mp, cc_), grad_selection(mp, cc_), mp);
  }

  const CompiledCounts& compiled() const noexcept { return cc_; }

 private:
  const Lohmm& m_;
  CompiledCounts cc_;
};

inline double max_abs(const ParamVector& g) {
  double mx = 0.0;
  for (double x : g.trans) mx = std::max(mx, std::abs(x));
  for (const auto& v : g.select)
    for (double x : v) mx = std::max(mx, std::abs(x));
  return mx;
}

inline ParamVector axpy(const ParamVector& x, double a, const ParamVector& g) {
  ParamVector out = x;
  for (std::size_t i = 0; i < out.trans.size(); ++i) out.trans[i] += a * g.trans[i];
  for (std::size_t d = 0; d < out.select.size(); ++d)
    for (std::size_t i = 0; i < out.select[d].size(); ++i) out.select[d][i] += a * g.select[d][i];
  return out;
}

/// Gradient ascent with backtracking; a step is taken only if Q does not drop.
inline ImproveResult ascend(const ScoreFunction& f, ParamVector beta, const OptimizerConfig& cfg, std::size_t run) {
  double q = f.value(beta);
  double step = 0.0;
  for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
    ParamVector g = f.gradient(beta);
    double gmax = max_abs(g);
    if (!(gmax > 1e-12) || !std::isfinite(q)) break;
    if (step == 0.0) step = 1.0 / std::max(1.0, gmax);
    bool accepted = false;
    ParamVector cand;
    double qc = q;
    for (std::size_t h = 0; h <= cfg.max_halvings; ++h, step *= 0.5) {
      cand = axpy(beta, step, g);
      qc = f.value(cand);
      if (qc >= q) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    double rel = (qc - q) / std::max(1.0, std::abs(q));
    beta = std::move(cand);
    q = qc;
    if (cfg.trace) *cfg.trace << "optimizer run=" << run << " iter=" << it << " Q=" << q << " step=" << step << "\n";
    step *= 2.0;
    if (rel < cfg.tolerance) break;
  }
  return {std::move(beta), q};
}

}  // namespace detail

/// Best of `cfg.restarts` ascent runs: the first from `start`, the rest from
/// β ~ Normal(0, 1). The result never scores below `start`.
inline ImproveResult improve_params(const Lohmm& m, const ExpectedCounts& ec, const ParamVector& start,
                                    const OptimizerConfig& cfg) {
  detail::ScoreFunction f(m, ec);
  ImproveResult best = detail::ascend(f, start, cfg, 0);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t r = 1; r < std::max<std::size_t>(cfg.restarts, 1); ++r) {
    ParamVector init = start;
    for (double& x : init.trans) x = normal(rng);
    for (auto& v : init.select)
      for (double& x : v) x = normal(rng);
    ImproveResult res = detail::ascend(f, std::move(init), cfg, r);
    if (res.q > best.q) best = std::move(res);
  }
  return best;
}

struct GemResult {
  ParamVector params;
  ExpectedCounts counts;
  double log_likelihood = 0.0;
  std::vector<double> history;  // training log-likelihood after each E-step
};

/// Alternates E-steps and improving M-steps until the relative change of
/// the log-likelihood drops below `cfg.tolerance` or `l_max` M-steps ran.
inline GemResult gem_inner_loop(const Lohmm& m, const ParamVector& params0, const std::vector<Sequence>& data,
                                std::size_t l_max, const OptimizerConfig& cfg = {}) {
  GemResult out;
  out.params = params0;
  for (std::size_t l = 0;; ++l) {
    EStepResult e = e_step(with_params(m, out.params), data);
    out.history.push_back(e.log_likelihood);
    const bool converged =
        l > 0 && std::abs(e.log_likelihood - out.log_likelihood) / std::max(1.0, std::abs(out.log_likelihood)) <
                     cfg.tolerance;
    out.counts = std::move(e.counts);
    out.log_likelihood = e.log_likelihood;
    if (l == l_max || converged) break;
    OptimizerConfig step_cfg = cfg;
    step_cfg.seed = mix_seed(cfg.seed, l);
    out.params = improve_params(m, out.counts, out.params, step_cfg).params;
  }
  return out;
}

}  // namespace lohmm
