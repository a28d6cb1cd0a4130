#pragma once

// Structure learning: penalized score, the fully general initial
// hypothesis, the specialization operator with coverage and
// well-foundedness repair, structural GEM over frozen expected counts
// (optionally with a beam), and the naive full-EM-per-neighbor baseline.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "lohmm/corpus.hpp"
#include "lohmm/errors.hpp"
#include "lohmm/learn.hpp"
#include "lohmm/logic.hpp"
#include "lohmm/model.hpp"
#include "lohmm/semantics.hpp"

namespace lohmm {

struct Score {
  double loglik = 0.0;
  double penalty = 0.0;
  double total = 0.0;
};

/// |Δ| · ln(m) / 2.
inline double penalty(std::size_t clauses, std::size_t cases) {
  if (cases == 0) return 0.0;
  return static_cast<double>(clauses) * std::log(static_cast<double>(cases)) / 2.0;
}

inline Score make_score(double loglik, std::size_t clauses, std::size_t cases) {
  double pen = penalty(clauses, cases);
  return {loglik, pen, loglik - pen};
}

inline Score score(const Lohmm& m, const std::vector<Sequence>& data) {
  return make_score(corpus_log_likelihood(m, data), m.transitions().size(), data.size());
}

// ---------------------------------------------------------------------------
// Initial hypothesis
// ---------------------------------------------------------------------------

namespace detail {

inline Atom general_atom(const PredicateKey& k, FreshNames& names) {
  std::vector<Term> args;
  for (std::size_t i = 0; i < k.arity; ++i) args.push_back(Term::variable(names.next()));
  return Atom(k.name, std::move(args));
}

}  // namespace detail

/// Fully connected model over maximally general atoms: start reaches every
/// state predicate, and every state predicate reaches every state predicate
/// under every observation predicate. Uniform probabilities.
inline Lohmm initial_hypothesis(const Signature& sig) {
  FreshNames& names = default_fresh_names();
  std::vector<PredicateKey> states;
  for (const auto& k : sig.state_predicates())
    if (!(k == start_predicate())) states.push_back(k);
  std::vector<AbstractTransition> delta;
  for (const auto& h : states)
    delta.push_back({1.0 / static_cast<double>(states.size()), start_atom(), std::nullopt,
                     detail::general_atom(h, names)});
  const auto& obs = sig.obs_predicates();
  const double p = 1.0 / static_cast<double>(states.size() * obs.size());
  for (const auto& b : states) {
    Atom body = detail::general_atom(b, names);
    for (const auto& h : states)
      for (const auto& o : obs)
        delta.push_back({p, body, detail::general_atom(o, names), detail::general_atom(h, names)});
  }
  return Lohmm(sig, SelectionDistribution::uniform(sig), std::move(delta));
}

// ---------------------------------------------------------------------------
// Refinement
// ---------------------------------------------------------------------------

/// Single elementary specializations of a clause: one variable bound to a
/// constant of its domain, or a later variable unified with an earlier one
/// of the same domain. Variables are taken in order of first occurrence.
inline std::vector<Substitution> minimal_specializations(const AbstractTransition& cl, const Signature& sig) {
  std::vector<std::string> vars;
  for (const Atom& a : clause_atoms(cl)) collect_vars(a, vars);
  std::map<std::string, std::string> doms;
  for (const Atom& a : clause_atoms(cl)) variable_domains(a, sig, doms);
  std::vector<Substitution> out;
  for (const auto& v : vars) {
    for (const auto& c : sig.constants(doms.at(v))) {
      Substitution s;
      s.bind(v, Term::constant(c));
      out.push_back(std::move(s));
    }
  }
  for (std::size_t i = 0; i < vars.size(); ++i)
    for (std::size_t j = i + 1; j < vars.size(); ++j)
      if (doms.at(vars[i]) == doms.at(vars[j])) {
        Substitution s;
        s.bind(vars[j], Term::variable(vars[i]));
        out.push_back(std::move(s));
      }
  return out;
}

struct Neighbor {
  Lohmm model;
  std::size_t clause;      // index of the specialized clause in the parent
  std::string refinement;  // the added clause, printed
};

struct RefineResult {
  std::vector<Neighbor> neighbors;
  std::size_t discarded = 0;
};

namespace detail {

struct Draft {
  struct Group {
    Atom body;
    std::string key;
    std::vector<AbstractTransition> clauses;
  };
  std::vector<Group> groups;

  std::optional<std::size_t> find(const Atom& body) const {
    std::string k = canonical_key(body);
    for (std::size_t g = 0; g < groups.size(); ++g)
      if (groups[g].key == k) return g;
    return std::nullopt;
  }

  static bool contains(const Group& g, const AbstractTransition& t) {
    std::string k = canonical_key(t);
    for (const auto& c : g.clauses)
      if (canonical_key(c) == k) return true;
    return false;
  }

  std::vector<AbstractTransition> flatten() const {
    std::vector<AbstractTransition> out;
    for (const auto& g : groups)
      for (const auto& c : g.clauses) out.push_back(c);
    return out;
  }
};

inline Draft draft_of(const Lohmm& m) {
  Draft d;
  for (const auto& g : m.bodies()) {
    Draft::Group dg{g.body, g.key, {}};
    for (std::size_t c : g.clauses) dg.clauses.push_back(m.transitions()[c]);
    d.groups.push_back(std::move(dg));
  }
  return d;
}

/// Clauses for a new body `a`: the groups of the parent's maximally specific
/// bodies subsuming `a`, specialized to `a`. Several owners contribute their
/// union at equal total weight, so every transition available before stays
/// available.
inline std::optional<Draft::Group> inherited_group(const Lohmm& parent, const Atom& a) {
  std::vector<std::size_t> owners = maximal_bodies(parent, a);
  if (owners.empty()) return std::nullopt;
  Draft::Group out{a, canonical_key(a), {}};
  const double share = 1.0 / static_cast<double>(owners.size());
  for (std::size_t g : owners) {
    for (std::size_t c : parent.bodies()[g].clauses) {
      AbstractTransition fc = freshen(parent.transitions()[c]);
      auto theta = subsumes(fc.body, a);
      if (!theta) return std::nullopt;
      AbstractTransition t = apply(fc, *theta);
      t.body = a;
      t.prob *= share;
      std::string k = canonical_key(t);
      auto dup = std::find_if(out.clauses.begin(), out.clauses.end(),
                              [&](const AbstractTransition& x) { return canonical_key(x) == k; });
      if (dup != out.clauses.end())
        dup->prob += t.prob;
      else
        out.clauses.push_back(std::move(t));
    }
  }
  return out;
}

/// Adds meets of incomparable unifiable bodies until every pair is resolved.
inline bool close_meets(const Lohmm& parent, Draft& d, std::size_t max_rounds = 64) {
  for (std::size_t round = 0; round < max_rounds; ++round) {
    bool added = false;
    for (std::size_t i = 0; i < d.groups.size() && !added; ++i) {
      for (std::size_t j = i + 1; j < d.groups.size() && !added; ++j) {
        const Atom& a = d.groups[i].body;
        const Atom& b = d.groups[j].body;
        if (subsumes(a, b) || subsumes(b, a)) continue;
        auto u = unify(a, freshen(b));
        if (!u) continue;
        Atom meet = apply(a, *u);
        if (d.find(meet)) continue;
        auto g = inherited_group(parent, meet);
        if (!g) return false;
        d.groups.push_back(std::move(*g));
        added = true;
      }
    }
    if (!added) return true;
  }
  return false;
}

inline std::string structure_key(const std::vector<AbstractTransition>& delta) {
  std::vector<std::string> keys;
  for (const auto& t : delta) keys.push_back(canonical_key(t));
  std::sort(keys.begin(), keys.end());
  std::string out;
  for (const auto& k : keys) out += k + "\n";
  return out;
}

}  // namespace detail

inline std::string structure_key(const Lohmm& m) { return detail::structure_key(m.transitions()); }

/// All valid one-clause specializations of `m` with repairs. Probabilities
/// are inherited from the parent so a neighbor starts close to it.
inline RefineResult refine_detailed(const Lohmm& m) {
  RefineResult out;
  std::set<std::string> seen{structure_key(m)};
  const Signature& sig = m.signature();
  for (std::size_t i = 0; i < m.transitions().size(); ++i) {
    const AbstractTransition& cl = m.transitions()[i];
    std::vector<Substitution> thetas;
    try {
      thetas = minimal_specializations(cl, sig);
    } catch (const Error&) {
      continue;
    }
    for (const auto& theta : thetas) {
      AbstractTransition spec = apply(cl, theta);
      detail::Draft d = detail::draft_of(m);
      const std::size_t parent_group = m.group_of(i);
      if (variant(spec.body, cl.body)) {
        auto& g = d.groups[parent_group];
        if (detail::Draft::contains(g, spec)) continue;
        // Parent and child share the parent's mass.
        const auto& members = m.bodies()[parent_group].clauses;
        std::size_t pos = std::find(members.begin(), members.end(), i) - members.begin();
        g.clauses[pos].prob = cl.prob / 2.0;
        spec.prob = cl.prob / 2.0;
        g.clauses.push_back(std::move(spec));
      } else if (auto existing = d.find(spec.body)) {
        auto& g = d.groups[*existing];
        if (detail::Draft::contains(g, spec)) continue;
        const double n = static_cast<double>(g.clauses.size());
        for (auto& c : g.clauses) c.prob *= n / (n + 1.0);
        spec.prob = 1.0 / (n + 1.0);
        g.clauses.push_back(std::move(spec));
      } else {
        auto g = detail::inherited_group(m, spec.body);
        if (!g) {
          ++out.discarded;
          continue;
        }
        d.groups.push_back(std::move(*g));
        if (!detail::close_meets(m, d)) {
          ++out.discarded;
          continue;
        }
      }
      auto delta = d.flatten();
      if (!seen.insert(detail::structure_key(delta)).second) continue;
      Lohmm n(sig, m.selection(), std::move(delta));
      if (!validate(n).empty()) {
        ++out.discarded;
        continue;
      }
      out.neighbors.push_back({std::move(n), i, format_clause(apply(cl, theta))});
    }
  }
  return out;
}

inline std::vector<Lohmm> refine(const Lohmm& m) {
  std::vector<Lohmm> out;
  for (auto& n : refine_detailed(m).neighbors) out.push_back(std::move(n.model));
  return out;
}

// ---------------------------------------------------------------------------
// Search
// ---------------------------------------------------------------------------

/// Optimizes a neighbor's parameters against frozen counts, warm-started at
/// its inherited probabilities. Cost depends on the size of the count table,
/// not on the corpus.
inline ImproveResult evaluate_neighbor(const Lohmm& neighbor, const ExpectedCounts& ec, const OptimizerConfig& cfg) {
  return improve_params(neighbor, ec, params_from(neighbor), cfg);
}

struct SearchConfig {
  std::size_t beam_width = 1;
  std::size_t l_max = 10;
  OptimizerConfig optimizer;
  std::size_t max_outer_iterations = 50;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  double min_improvement = 1e-9;
};

struct TraceRecord {
  std::size_t iteration = 0;
  std::size_t clauses = 0;
  std::size_t bodies = 0;
  double loglik = 0.0;
  double penalty = 0.0;
  double total = 0.0;
  double wall_ms = 0.0;
  std::size_t evaluated = 0;
  std::size_t discarded = 0;
};

struct SearchResult {
  Lohmm model;  // carries the learned probabilities
  ParamVector params;
  Score score;
  std::vector<TraceRecord> trace;
};

namespace detail {

/// Runs `fn(i)` for i in [0, n) on up to `threads` workers.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  for (auto& th : pool) th.join();
}

struct Hypothesis {
  Lohmm structure;
  ParamVector params;
  ExpectedCounts counts;
  double loglik = 0.0;
  Score score;
  bool expanded = false;
};

inline Hypothesis estimate(const Lohmm& structure, const ParamVector& params, const std::vector<Sequence>& data,
                           const SearchConfig& cfg, std::uint64_t seed) {
  OptimizerConfig opt = cfg.optimizer;
  opt.seed = seed;
  GemResult g = gem_inner_loop(structure, params, data, cfg.l_max, opt);
  Hypothesis h{structure, g.params, std::move(g.counts), g.log_likelihood, {}, false};
  h.score = make_score(g.log_likelihood, structure.transitions().size(), data.size());
  return h;
}

struct Candidate {
  Lohmm structure;
  ParamVector params;
  double estimate;
  std::size_t parent;
  std::size_t order;
};

inline double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

inline TraceRecord record(std::size_t k, const Hypothesis& h, double ms, std::size_t evaluated = 0,
                          std::size_t discarded = 0) {
  return {k,       h.structure.transitions().size(), h.structure.bodies().size(), h.score.loglik, h.score.penalty,
          h.score.total, ms, evaluated, discarded};
}

}  // namespace detail

/// Structural GEM. Each round re-estimates the beam's hypotheses on the data,
/// freezes their expected counts, and values every neighbor by
/// ll_parent + Q_neighbor − Q_parent − penalty_neighbor without touching the
/// data again. Stops when the beam stops changing.
inline SearchResult sagem(const std::vector<Sequence>& data, const Lohmm& m0, const SearchConfig& cfg = {}) {
  auto t0 = std::chrono::steady_clock::now();
  const std::size_t width = std::max<std::size_t>(1, cfg.beam_width);
  std::vector<detail::Hypothesis> beam;
  beam.push_back(detail::estimate(m0, params_from(m0), data, cfg, mix_seed(cfg.seed, 0)));
  std::set<std::string> visited{structure_key(m0)};
  SearchResult out;
  out.trace.push_back(detail::record(0, beam.front(), detail::elapsed_ms(t0)));

  for (std::size_t k = 1; k <= cfg.max_outer_iterations; ++k) {
    std::vector<detail::Candidate> pool;
    std::size_t evaluated = 0, discarded = 0;
    for (std::size_t b = 0; b < beam.size(); ++b) {
      auto& h = beam[b];
      if (h.expanded) continue;
      h.expanded = true;
      OptimizerConfig opt = cfg.optimizer;
      opt.seed = mix_seed(cfg.seed, k, 0x7fffffff + b);
      Lohmm current = with_params(h.structure, h.params);
      double q_parent;
      try {
        q_parent = std::max(expected_score(current, compile_counts(current, h.counts)),
                            improve_params(h.structure, h.counts, h.params, opt).q);
      } catch (const IncompatibleCounts&) {
        continue;
      }
      RefineResult ref = refine_detailed(current);
      std::vector<std::optional<ImproveResult>> results(ref.neighbors.size());
      detail::parallel_for(ref.neighbors.size(), cfg.threads, [&](std::size_t i) {
        OptimizerConfig o = cfg.optimizer;
        o.seed = mix_seed(cfg.seed, k, i + 1);
        try {
          results[i] = evaluate_neighbor(ref.neighbors[i].model, h.counts, o);
        } catch (const IncompatibleCounts&) {
        }
      });
      evaluated += ref.neighbors.size();
      discarded += ref.discarded;
      for (std::size_t i = 0; i < results.size(); ++i) {
        if (!results[i]) {
          ++discarded;
          continue;
        }
        const Lohmm& n = ref.neighbors[i].model;
        if (visited.count(structure_key(n))) continue;
        double est = h.loglik + results[i]->q - q_parent - penalty(n.transitions().size(), data.size());
        pool.push_back({n, results[i]->params, est, b, pool.size()});
      }
    }

    // Beam selection: current members keep their exact scores. A candidate
    // is re-estimated when its frozen-count estimate beats the weakest member
    // and enters only if its exact score does too, so the best score never
    // decreases.
    std::sort(pool.begin(), pool.end(), [](const auto& a, const auto& b) {
      if (a.estimate != b.estimate) return a.estimate > b.estimate;
      if (a.structure.transitions().size() != b.structure.transitions().size())
        return a.structure.transitions().size() < b.structure.transitions().size();
      return a.order < b.order;
    });
    std::vector<detail::Hypothesis> next = beam;
    std::sort(next.begin(), next.end(), [](const auto& a, const auto& b) { return a.score.total > b.score.total; });
    bool changed = false;
    std::set<std::string> taken;
    for (const auto& h : next) taken.insert(structure_key(h.structure));
    for (auto& c : pool) {
      std::string key = structure_key(c.structure);
      if (taken.count(key)) continue;
      const bool full = next.size() >= width;
      if (full && !(c.estimate > next.back().score.total + cfg.min_improvement)) break;
      detail::Hypothesis h =
          detail::estimate(c.structure, c.params, data, cfg, mix_seed(cfg.seed, k, 0xabcdefull + c.order));
      visited.insert(key);
      if (full) {
        if (!(h.score.total > next.back().score.total + cfg.min_improvement)) continue;
        next.pop_back();
      }
      taken.insert(key);
      next.push_back(std::move(h));
      std::sort(next.begin(), next.end(), [](const auto& a, const auto& b) { return a.score.total > b.score.total; });
      changed = true;
    }
    beam = std::move(next);
    out.trace.push_back(detail::record(k, beam.front(), detail::elapsed_ms(t0), evaluated, discarded));
    if (!changed) break;
  }

  const auto& best = beam.front();
  out.model = with_params(best.structure, best.params);
  out.params = best.params;
  out.score = best.score;
  return out;
}

/// Greedy search that re-runs the inner GEM loop on the data for every
/// neighbor; the reference against which frozen-count evaluation is timed.
inline SearchResult naive_greedy(const std::vector<Sequence>& data, const Lohmm& m0, const SearchConfig& cfg = {}) {
  auto t0 = std::chrono::steady_clock::now();
  detail::Hypothesis cur = detail::estimate(m0, params_from(m0), data, cfg, mix_seed(cfg.seed, 0));
  SearchResult out;
  out.trace.push_back(detail::record(0, cur, detail::elapsed_ms(t0)));
  for (std::size_t k = 1; k <= cfg.max_outer_iterations; ++k) {
    RefineResult ref = refine_detailed(with_params(cur.structure, cur.params));
    std::vector<std::optional<detail::Hypothesis>> results(ref.neighbors.size());
    detail::parallel_for(ref.neighbors.size(), cfg.threads, [&](std::size_t i) {
      const Lohmm& n = ref.neighbors[i].model;
      try {
        results[i] = detail::estimate(n, params_from(n), data, cfg, mix_seed(cfg.seed, k, i + 1));
      } catch (const Error&) {
      }
    });
    std::optional<std::size_t> best;
    std::size_t discarded = ref.discarded;
    for (std::size_t i = 0; i < results.size(); ++i) {
      if (!results[i]) {
        ++discarded;
        continue;
      }
      if (!best || results[i]->score.total > results[*best]->score.total ||
          (results[i]->score.total == results[*best]->score.total &&
           results[i]->structure.transitions().size() < results[*best]->structure.transitions().size()))
        best = i;
    }
    bool improved = best && results[*best]->score.total > cur.score.total + cfg.min_improvement;
    if (improved) cur = std::move(*results[*best]);
    out.trace.push_back(detail::record(k, cur, detail::elapsed_ms(t0), ref.neighbors.size(), discarded));
    if (!improved) break;
  }
  out.model = with_params(cur.structure, cur.params);
  out.params = cur.params;
  out.score = cur.score;
  return out;
}

/// Parameter estimation only: the inner GEM loop on a fixed structure.
inline SearchResult params_only(const std::vector<Sequence>& data, const Lohmm& m0, const SearchConfig& cfg = {}) {
  auto t0 = std::chrono::steady_clock::now();
  detail::Hypothesis h = detail::estimate(m0, params_from(m0), data, cfg, mix_seed(cfg.seed, 0));
  SearchResult out;
  out.trace.push_back(detail::record(0, h, detail::elapsed_ms(t0)));
  out.model = with_params(h.structure, h.params);
  out.params = h.params;
  out.score = h.score;
  return out;
}

}  // namespace lohmm
