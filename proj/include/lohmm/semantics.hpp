#pragma once

// Generative semantics and exact inference over reachable ground states:
// sampling, scaled forward-backward, log-likelihood, expected ground
// transition counts, and plug-in classification.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lohmm/corpus.hpp"
#include "lohmm/errors.hpp"
#include "lohmm/logic.hpp"
#include "lohmm/model.hpp"

namespace lohmm {

using Rng = std::mt19937_64;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Expected counts
// ---------------------------------------------------------------------------

/// ec(b, h, o): posterior-expected number of ground transitions. `o` is empty
/// for steps out of start.
class ExpectedCounts {
 public:
  struct Entry {
    Atom b;
    Atom h;
    std::optional<Atom> o;
    double count = 0.0;
  };

  static std::string key(const Atom& b, const Atom& h, const std::optional<Atom>& o) {
    return format_atom(b) + " | " + format_atom(h) + " | " + (o ? format_atom(*o) : std::string("-"));
  }

  void add(const Atom& b, const Atom& h, const std::optional<Atom>& o, double c) {
    auto k = key(b, h, o);
    auto it = index_.find(k);
    if (it == index_.end()) {
      index_.emplace(std::move(k), entries_.size());
      entries_.push_back({b, h, o, c});
    } else {
      entries_[it->second].count += c;
    }
  }

  double get(const Atom& b, const Atom& h, const std::optional<Atom>& o) const {
    auto it = index_.find(key(b, h, o));
    return it == index_.end() ? 0.0 : entries_[it->second].count;
  }

  /// Associative, commutative merge of another table.
  void merge(const ExpectedCounts& other) {
    for (const auto& e : other.entries_) add(e.b, e.h, e.o, e.count);
    total_sequences += other.total_sequences;
  }

  double total() const {
    double s = 0.0;
    for (const auto& e : entries_) s += e.count;
    return s;
  }

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  std::size_t total_sequences = 0;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Ground engine
// ---------------------------------------------------------------------------

/// Interns ground atoms by their printed form.
class AtomTable {
 public:
  std::size_t intern(const Atom& a) {
    auto [it, inserted] = ids_.emplace(format_atom(a), atoms_.size());
    if (inserted) atoms_.push_back(a);
    return it->second;
  }
  const Atom& at(std::size_t id) const { return atoms_.at(id); }
  std::size_t size() const noexcept { return atoms_.size(); }

 private:
  std::unordered_map<std::string, std::size_t> ids_;
  std::vector<Atom> atoms_;
};

/// Forward/backward masses over the reachable ground states of one sequence.
/// Layer t holds the states h_t (t = 0 is start). Values are scaled so that
/// each alpha layer sums to one; `log_scale[t]` restores the mass.
struct GroundTrellis {
  struct Cell {
    std::size_t state;
    double alpha;
    double beta;
  };
  std::vector<std::vector<Cell>> layers;
  std::vector<double> log_scale;
  double log_likelihood = 0.0;

  /// log α_t(s) and log β_t(s) of the unscaled recursions.
  double log_alpha(std::size_t t, std::size_t i) const {
    double s = 0.0;
    for (std::size_t u = 0; u <= t; ++u) s += log_scale[u];
    return std::log(layers[t][i].alpha) + s;
  }
  double log_beta(std::size_t t, std::size_t i) const {
    double s = 0.0;
    for (std::size_t u = t + 1; u < log_scale.size(); ++u) s += log_scale[u];
    return std::log(layers[t][i].beta) + s;
  }
};

struct SampledSequence {
  std::vector<Atom> hidden;  // T + 2 states, beginning with start
  Sequence obs;              // T observations
};

/// Owns a model plus caches of conflict resolution and successor lists.
/// Not thread-safe; use one engine per worker.
class GroundEngine {
 public:
  struct Successor {
    std::size_t state;
    double prob;
  };

  explicit GroundEngine(Lohmm model) : model_(std::move(model)) { start_ = states_.intern(start_atom()); }

  const Lohmm& model() const noexcept { return model_; }
  std::size_t state_id(const Atom& a) { return states_.intern(a); }
  std::size_t obs_id(const Atom& a) { return obs_.intern(a); }
  const Atom& state(std::size_t id) const { return states_.at(id); }
  const Atom& observation(std::size_t id) const { return obs_.at(id); }
  std::size_t start_id() const noexcept { return start_; }

  static constexpr std::size_t kNoObs = static_cast<std::size_t>(-1);

  /// Matching clauses of the most specific body for a ground state.
  const std::vector<ClauseMatch>& matches(std::size_t state) {
    auto it = matches_.find(state);
    if (it != matches_.end()) return it->second;
    return matches_.emplace(state, matching_clauses(model_, states_.at(state))).first->second;
  }

  /// All (h, P(h, o | b)) with positive probability; `obs == kNoObs` for start.
  const std::vector<Successor>& successors(std::size_t b, std::size_t obs) {
    std::uint64_t k = (static_cast<std::uint64_t>(b) << 32) ^ static_cast<std::uint64_t>(obs & 0xffffffffu);
    auto it = succ_.find(k);
    if (it != succ_.end()) return it->second;
    return succ_.emplace(k, compute_successors(b, obs)).first->second;
  }

  std::vector<std::size_t> encode(const Sequence& seq) {
    std::vector<std::size_t> ids;
    ids.reserve(seq.size());
    for (const Atom& a : seq) ids.push_back(obs_.intern(a));
    return ids;
  }

  GroundTrellis forward_backward(const Sequence& seq) { return forward_backward_ids(encode(seq)); }

  GroundTrellis forward_backward_ids(const std::vector<std::size_t>& obs) {
    GroundTrellis tr;
    const std::size_t T = obs.size();
    tr.layers.reserve(T + 2);
    tr.layers.push_back({{start_, 1.0, 0.0}});
    tr.log_scale.push_back(0.0);
    std::vector<std::unordered_map<std::size_t, std::size_t>> pos(1);
    pos[0].emplace(start_, 0);

    for (std::size_t t = 0; t <= T; ++t) {
      const std::size_t o = t == 0 ? kNoObs : obs[t - 1];
      std::vector<GroundTrellis::Cell> next;
      std::unordered_map<std::size_t, std::size_t> next_pos;
      for (const auto& cell : tr.layers[t]) {
        for (const auto& s : successors(cell.state, o)) {
          auto [it, inserted] = next_pos.emplace(s.state, next.size());
          if (inserted) next.push_back({s.state, 0.0, 0.0});
          next[it->second].alpha += cell.alpha * s.prob;
        }
      }
      double c = 0.0;
      for (const auto& cell : next) c += cell.alpha;
      if (!(c > 0.0)) {
        tr.log_likelihood = kNegInf;
        return tr;
      }
      for (auto& cell : next) cell.alpha /= c;
      tr.layers.push_back(std::move(next));
      tr.log_scale.push_back(std::log(c));
      pos.push_back(std::move(next_pos));
    }

    for (auto& cell : tr.layers[T + 1]) cell.beta = 1.0;
    for (std::size_t t = T + 1; t-- > 0;) {
      const std::size_t o = t == 0 ? kNoObs : obs[t - 1];
      const double c = std::exp(tr.log_scale[t + 1]);
      for (auto& cell : tr.layers[t]) {
        double s = 0.0;
        for (const auto& succ : successors(cell.state, o)) {
          auto it = pos[t + 1].find(succ.state);
          if (it != pos[t + 1].end()) s += succ.prob * tr.layers[t + 1][it->second].beta;
        }
        cell.beta = s / c;
      }
    }
    double ll = 0.0;
    for (double x : tr.log_scale) ll += x;
    tr.log_likelihood = ll;
    return tr;
  }

  double log_likelihood(const Sequence& seq) { return forward_only(encode(seq)); }

  double forward_only(const std::vector<std::size_t>& obs) {
    std::vector<std::pair<std::size_t, double>> layer{{start_, 1.0}};
    double ll = 0.0;
    for (std::size_t t = 0; t <= obs.size(); ++t) {
      const std::size_t o = t == 0 ? kNoObs : obs[t - 1];
      std::vector<std::pair<std::size_t, double>> next;
      std::unordered_map<std::size_t, std::size_t> next_pos;
      for (const auto& [b, a] : layer)
        for (const auto& s : successors(b, o)) {
          auto [it, inserted] = next_pos.emplace(s.state, next.size());
          if (inserted) next.emplace_back(s.state, 0.0);
          next[it->second].second += a * s.prob;
        }
      double c = 0.0;
      for (const auto& x : next) c += x.second;
      if (!(c > 0.0)) return kNegInf;
      for (auto& x : next) x.second /= c;
      ll += std::log(c);
      layer = std::move(next);
    }
    return ll;
  }

  /// Adds one sequence's posterior transition counts into an id-keyed table.
  /// Returns the sequence log-likelihood (−∞ leaves the table untouched).
  struct IdTriple {
    std::size_t b, h, o;
    bool operator==(const IdTriple&) const = default;
  };
  struct IdTripleHash {
    std::size_t operator()(const IdTriple& k) const noexcept {
      std::size_t x = k.b * 0x9E3779B97F4A7C15ull;
      x ^= k.h + 0x9E3779B97F4A7C15ull + (x << 6) + (x >> 2);
      x ^= k.o + 0x9E3779B97F4A7C15ull + (x << 6) + (x >> 2);
      return x;
    }
  };
  using IdCounts = std::unordered_map<IdTriple, double, IdTripleHash>;

  double accumulate(const std::vector<std::size_t>& obs, IdCounts& counts, std::vector<IdTriple>& order) {
    GroundTrellis tr = forward_backward_ids(obs);
    if (tr.log_likelihood == kNegInf) return kNegInf;
    for (std::size_t t = 0; t + 1 < tr.layers.size(); ++t) {
      const std::size_t o = t == 0 ? kNoObs : obs[t - 1];
      const double c = std::exp(tr.log_scale[t + 1]);
      std::unordered_map<std::size_t, std::size_t> next_pos;
      for (std::size_t i = 0; i < tr.layers[t + 1].size(); ++i) next_pos.emplace(tr.layers[t + 1][i].state, i);
      for (const auto& cell : tr.layers[t]) {
        if (cell.alpha == 0.0) continue;
        for (const auto& s : successors(cell.state, o)) {
          auto it = next_pos.find(s.state);
          if (it == next_pos.end()) continue;
          double xi = cell.alpha * s.prob * tr.layers[t + 1][it->second].beta / c;
          if (xi == 0.0) continue;
          IdTriple k{cell.state, s.state, o};
          auto [ct, inserted] = counts.emplace(k, 0.0);
          if (inserted) order.push_back(k);
          ct->second += xi;
        }
      }
    }
    return tr.log_likelihood;
  }

  SampledSequence sample(std::size_t length, Rng& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    SampledSequence out;
    Atom b = start_atom();
    out.hidden.push_back(b);
    for (std::size_t t = 0; t <= length; ++t) {
      const auto& ms = matches(states_.intern(b));
      double total = 0.0;
      for (const auto& cm : ms) total += model_.transitions()[cm.clause].prob;
      double u = unif(rng) * total;
      std::size_t pick = ms.size() - 1;
      for (std::size_t i = 0; i < ms.size(); ++i) {
        u -= model_.transitions()[ms[i].clause].prob;
        if (u < 0.0) {
          pick = i;
          break;
        }
      }
      const auto& cm = ms[pick];
      const auto& cl = model_.transitions()[cm.clause];
      Substitution theta = cm.theta;
      Atom head = apply(cl.head, theta);
      for (const auto& v : vars_of(head)) theta.bind(v, draw(cm.clause, v, unif, rng));
      head = apply(cl.head, theta);
      if (cl.obs) {
        Atom o = apply(*cl.obs, theta);
        for (const auto& v : vars_of(o)) theta.bind(v, draw(cm.clause, v, unif, rng));
        out.obs.push_back(apply(*cl.obs, theta));
      }
      out.hidden.push_back(head);
      b = std::move(head);
    }
    return out;
  }

 private:
  Term draw(std::size_t clause, const std::string& var, std::uniform_real_distribution<double>& unif, Rng& rng) {
    auto d = model_.var_domain(clause, var);
    if (!d) throw DomainMismatch("untyped variable " + var);
    const auto& probs = model_.selection().domain(*d);
    double u = unif(rng);
    std::size_t pick = probs.size() - 1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      u -= probs[i];
      if (u < 0.0) {
        pick = i;
        break;
      }
    }
    return Term::constant(model_.signature().constants(*d)[pick]);
  }

  /// Calls `fn(ground, product)` for every grounding of `a` over the
  /// clause-typed domains of its variables.
  void enumerate(std::size_t clause, const Atom& a, double base, const std::function<void(const Atom&, double)>& fn) {
    std::vector<std::string> vars = vars_of(a);
    std::vector<std::size_t> doms;
    for (const auto& v : vars) {
      auto d = model_.var_domain(clause, v);
      if (!d) return;
      doms.push_back(*d);
    }
    Substitution theta;
    std::function<void(std::size_t, double)> rec = [&](std::size_t i, double p) {
      if (p == 0.0) return;
      if (i == vars.size()) {
        fn(apply(a, theta), p);
        return;
      }
      const auto& cs = model_.signature().constants(doms[i]);
      for (std::size_t c = 0; c < cs.size(); ++c) {
        theta.bind(vars[i], Term::constant(cs[c]));
        rec(i + 1, p * model_.selection().prob(doms[i], c));
      }
    };
    rec(0, base);
  }

  std::vector<Successor> compute_successors(std::size_t b, std::size_t obs) {
    std::vector<Successor> out;
    std::unordered_map<std::size_t, std::size_t> pos;
    auto add = [&](const Atom& h, double p) {
      std::size_t id = states_.intern(h);
      auto [it, inserted] = pos.emplace(id, out.size());
      if (inserted) out.push_back({id, 0.0});
      out[it->second].prob += p;
    };
    for (const auto& cm : matches(b)) {
      const auto& cl = model_.transitions()[cm.clause];
      if (cl.prob == 0.0) continue;
      Atom head = apply(cl.head, cm.theta);
      if (!cl.obs) {
        if (obs != kNoObs) continue;
        enumerate(cm.clause, head, cl.prob, add);
        continue;
      }
      if (obs == kNoObs) continue;
      Atom o = apply(*cl.obs, cm.theta);
      auto theta_o = subsumes(o, obs_.at(obs));
      if (!theta_o) continue;
      double p = cl.prob * selection_product(model_, cm.clause, *theta_o);
      if (p == 0.0) continue;
      enumerate(cm.clause, apply(head, *theta_o), p, add);
    }
    std::erase_if(out, [](const Successor& s) { return !(s.prob > 0.0); });
    return out;
  }

  Lohmm model_;
  AtomTable states_;
  AtomTable obs_;
  std::size_t start_ = 0;
  std::unordered_map<std::size_t, std::vector<ClauseMatch>> matches_;
  std::unordered_map<std::uint64_t, std::vector<Successor>> succ_;
};

// ---------------------------------------------------------------------------
// Free-function surface
// ---------------------------------------------------------------------------

inline SampledSequence sample(const Lohmm& m, std::size_t length, Rng& rng) {
  GroundEngine engine(m);
  return engine.sample(length, rng);
}

inline std::vector<SampledSequence> sample_many(const Lohmm& m, std::size_t count, std::size_t length, Rng& rng) {
  GroundEngine engine(m);
  std::vector<SampledSequence> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(engine.sample(length, rng));
  return out;
}

inline double log_likelihood(const Lohmm& m, const Sequence& obs) {
  GroundEngine engine(m);
  return engine.log_likelihood(obs);
}

/// Σ_i log P(O_i | M, λ).
inline double corpus_log_likelihood(const Lohmm& m, const std::vector<Sequence>& data) {
  GroundEngine engine(m);
  double ll = 0.0;
  for (const auto& s : data) {
    ll += engine.log_likelihood(s);
    if (ll == kNegInf) break;
  }
  return ll;
}

struct EStepResult {
  ExpectedCounts counts;
  double log_likelihood = 0.0;
};

/// Expected counts over a corpus plus its log-likelihood. Throws
/// ZeroLikelihoodSequence for a sequence the model cannot generate.
inline EStepResult e_step(const Lohmm& m, const std::vector<Sequence>& data) {
  GroundEngine engine(m);
  GroundEngine::IdCounts counts;
  std::vector<GroundEngine::IdTriple> order;
  EStepResult out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    double ll = engine.accumulate(engine.encode(data[i]), counts, order);
    if (ll == kNegInf) throw ZeroLikelihoodSequence(i);
    out.log_likelihood += ll;
  }
  for (const auto& k : order) {
    std::optional<Atom> o;
    if (k.o != GroundEngine::kNoObs) o = engine.observation(k.o);
    out.counts.add(engine.state(k.b), engine.state(k.h), o, counts.at(k));
  }
  out.counts.total_sequences = data.size();
  return out;
}

inline ExpectedCounts expected_counts(const Lohmm& m, const std::vector<Sequence>& data) {
  return e_step(m, data).counts;
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

struct ClassModel {
  std::string name;
  Lohmm model;
  double prior = 1.0;
};

/// Plug-in classifier: argmax over classes of log P(O | M_c) + log prior_c,
/// ties broken by class-name order.
class Classifier {
 public:
  explicit Classifier(std::vector<ClassModel> classes) {
    std::sort(classes.begin(), classes.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
    for (auto& c : classes) {
      names_.push_back(c.name);
      log_priors_.push_back(std::log(c.prior));
      engines_.emplace_back(std::move(c.model));
    }
  }

  /// Per-class log P(O | M_c) + log prior.
  std::vector<double> scores(const Sequence& seq) {
    std::vector<double> out;
    for (std::size_t i = 0; i < engines_.size(); ++i) out.push_back(engines_[i].log_likelihood(seq) + log_priors_[i]);
    return out;
  }

  std::string classify(const Sequence& seq) {
    auto s = scores(seq);
    std::size_t best = 0;
    for (std::size_t i = 1; i < s.size(); ++i)
      if (s[i] > s[best]) best = i;
    if (s.empty() || s[best] == kNegInf) throw AllZeroLikelihood("every class assigns zero likelihood");
    return names_[best];
  }

  const std::vector<std::string>& names() const noexcept { return names_; }

 private:
  std::vector<std::string> names_;
  std::vector<double> log_priors_;
  std::vector<GroundEngine> engines_;
};

inline std::string classify(const std::map<std::string, std::pair<Lohmm, double>>& models, const Sequence& seq) {
  std::vector<ClassModel> classes;
  for (const auto& [name, mp] : models) classes.push_back({name, mp.first, mp.second});
  Classifier c(std::move(classes));
  return c.classify(seq);
}

}  // namespace lohmm
