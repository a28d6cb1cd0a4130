#pragma once

// Reference computations that avoid the inference engine entirely: path
// enumeration over ground states, and expected scores evaluated through the
// per-step probability of the model layer.

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lohmm/lohmm.hpp"

namespace oracle {

using lohmm::Atom;
using lohmm::Lohmm;
using lohmm::Sequence;

/// Every ground state atom of the signature, start first.
inline std::vector<Atom> herbrand_states(const lohmm::Signature& sig) {
  std::vector<Atom> out{lohmm::start_atom()};
  for (const auto& k : sig.state_predicates()) {
    if (k == lohmm::start_predicate()) continue;
    std::vector<lohmm::Term> vars;
    for (std::size_t i = 0; i < k.arity; ++i) vars.push_back(lohmm::Term::variable("V" + std::to_string(i)));
    for (auto& g : lohmm::ground_instances(Atom(k.name, vars), sig)) out.push_back(std::move(g));
  }
  return out;
}

class StepTable {
 public:
  explicit StepTable(const Lohmm& m) : m_(m) {}
  double operator()(const Atom& b, const Atom& h, const std::optional<Atom>& o) {
    std::string k = lohmm::ExpectedCounts::key(b, h, o);
    auto it = memo_.find(k);
    if (it != memo_.end()) return it->second;
    double p = lohmm::ground_step_prob(m_, b, h, o);
    memo_.emplace(std::move(k), p);
    return p;
  }

 private:
  const Lohmm& m_;
  std::map<std::string, double> memo_;
};

struct Enumeration {
  double likelihood = 0.0;
  std::map<std::string, double> posterior_counts;  // keyed like ExpectedCounts
};

/// Sums over every hidden path h_0 = start, h_1 .. h_{T+1}.
inline Enumeration enumerate_paths(const Lohmm& m, const Sequence& obs) {
  StepTable step(m);
  const auto states = herbrand_states(m.signature());
  Enumeration out;
  std::vector<std::pair<std::string, double>> path_triples;
  std::vector<std::pair<std::vector<std::string>, double>> paths;
  std::vector<std::string> keys;
  std::function<void(const Atom&, std::size_t, double)> rec = [&](const Atom& b, std::size_t t, double p) {
    if (t > obs.size()) {
      out.likelihood += p;
      paths.emplace_back(keys, p);
      return;
    }
    std::optional<Atom> o;
    if (t > 0) o = obs[t - 1];
    for (const Atom& h : states) {
      if (lohmm::is_start(h)) continue;
      double q = step(b, h, o);
      if (q == 0.0) continue;
      keys.push_back(lohmm::ExpectedCounts::key(b, h, o));
      rec(h, t + 1, p * q);
      keys.pop_back();
    }
  };
  rec(lohmm::start_atom(), 0, 1.0);
  if (out.likelihood > 0.0)
    for (const auto& [ks, p] : paths)
      for (const auto& k : ks) out.posterior_counts[k] += p / out.likelihood;
  return out;
}

/// Σ ec · log P(h, o | b) with P from the model layer.
inline double expected_score(const Lohmm& m, const lohmm::ExpectedCounts& ec) {
  StepTable step(m);
  double q = 0.0;
  for (const auto& e : ec.entries())
    if (e.count != 0.0) q += e.count * std::log(step(e.b, e.h, e.o));
  return q;
}

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
}

/// Central differences of the oracle score in probability space.
inline std::vector<double> fd_transition(const Lohmm& m, const lohmm::ExpectedCounts& ec, double h = 1e-6) {
  std::vector<double> out;
  std::vector<double> probs;
  for (const auto& t : m.transitions()) probs.push_back(t.prob);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    auto up = probs, down = probs;
    up[i] += h;
    down[i] -= h;
    out.push_back((expected_score(m.with_transition_probs(up), ec) - expected_score(m.with_transition_probs(down), ec)) /
                  (2 * h));
  }
  return out;
}

inline std::vector<std::vector<double>> fd_selection(const Lohmm& m, const lohmm::ExpectedCounts& ec,
                                                     double h = 1e-6) {
  std::vector<std::vector<double>> out;
  for (std::size_t d = 0; d < m.selection().domain_count(); ++d) {
    out.emplace_back();
    for (std::size_t c = 0; c < m.selection().domain(d).size(); ++c) {
      auto up = m.selection(), down = m.selection();
      up.domain(d)[c] += h;
      down.domain(d)[c] -= h;
      out.back().push_back((expected_score(m.with_selection(up), ec) - expected_score(m.with_selection(down), ec)) /
                           (2 * h));
    }
  }
  return out;
}

/// Central differences directly in β space.
inline lohmm::ParamVector fd_beta(const Lohmm& structure, const lohmm::ParamVector& p,
                                  const lohmm::ExpectedCounts& ec, double h = 1e-6) {
  auto q = [&](const lohmm::ParamVector& x) { return expected_score(lohmm::with_params(structure, x), ec); };
  lohmm::ParamVector out = p;
  for (std::size_t i = 0; i < p.trans.size(); ++i) {
    auto up = p, down = p;
    up.trans[i] += h;
    down.trans[i] -= h;
    out.trans[i] = (q(up) - q(down)) / (2 * h);
  }
  for (std::size_t d = 0; d < p.select.size(); ++d)
    for (std::size_t c = 0; c < p.select[d].size(); ++c) {
      auto up = p, down = p;
      up.select[d][c] += h;
      down.select[d][c] -= h;
      out.select[d][c] = (q(up) - q(down)) / (2 * h);
    }
  return out;
}

}  // namespace oracle
