#pragma once

// Logical HMM representation: abstract transitions, selection distribution,
// conflict resolution by most specific body, and the probability of a single
// ground transition.

#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lohmm/errors.hpp"
#include "lohmm/logic.hpp"

namespace lohmm {

/// p : body --obs--> head. `obs` is absent exactly when body is start/0.
struct AbstractTransition {
  double prob = 0.0;
  Atom body;
  std::optional<Atom> obs;
  Atom head;
};

inline std::vector<Atom> clause_atoms(const AbstractTransition& t) {
  std::vector<Atom> atoms{t.body};
  if (t.obs) atoms.push_back(*t.obs);
  atoms.push_back(t.head);
  return atoms;
}

/// Structure-only identity of a clause, invariant under variable renaming.
inline std::string canonical_key(const AbstractTransition& t) {
  auto atoms = clause_atoms(t);
  return canonical_key(std::span<const Atom>(atoms));
}

inline AbstractTransition apply(const AbstractTransition& t, const Substitution& theta) {
  AbstractTransition out{t.prob, apply(t.body, theta), std::nullopt, apply(t.head, theta)};
  if (t.obs) out.obs = apply(*t.obs, theta);
  return out;
}

inline AbstractTransition freshen(const AbstractTransition& t, FreshNames& names = default_fresh_names()) {
  std::map<std::string, std::string> renaming;
  AbstractTransition out{t.prob, freshen(t.body, names, renaming), std::nullopt, {}};
  if (t.obs) out.obs = freshen(*t.obs, names, renaming);
  out.head = freshen(t.head, names, renaming);
  return out;
}

/// `BODY --> HEAD` or `BODY -- OBS --> HEAD` with clause-wide variable names.
inline std::string format_clause(const AbstractTransition& t) {
  std::map<std::string, int> occ;
  for (const Atom& a : clause_atoms(t)) count_occurrences(a, occ);
  VarNamer namer(std::move(occ));
  std::string out;
  format_atom(t.body, namer, out);
  if (t.obs) {
    out += " -- ";
    format_atom(*t.obs, namer, out);
  }
  out += " --> ";
  format_atom(t.head, namer, out);
  return out;
}

/// One categorical distribution per declared domain, indexed like the
/// signature's constants.
class SelectionDistribution {
 public:
  SelectionDistribution() = default;

  static SelectionDistribution uniform(const Signature& sig) {
    SelectionDistribution mu;
    for (std::size_t d = 0; d < sig.domain_count(); ++d) {
      std::size_t n = sig.constants(d).size();
      mu.probs_.emplace_back(n, 1.0 / static_cast<double>(n));
    }
    return mu;
  }

  std::size_t domain_count() const noexcept { return probs_.size(); }
  const std::vector<double>& domain(std::size_t d) const { return probs_.at(d); }
  std::vector<double>& domain(std::size_t d) { return probs_.at(d); }
  double prob(std::size_t d, std::size_t c) const { return probs_.at(d).at(c); }

  void resize_like(const Signature& sig) {
    probs_.resize(sig.domain_count());
    for (std::size_t d = 0; d < sig.domain_count(); ++d) probs_[d].resize(sig.constants(d).size(), 0.0);
  }

 private:
  std::vector<std::vector<double>> probs_;
};

/// Problems reported by validate(); violations are values, not errors.
struct Violation {
  enum class Kind { Normalization, WellFoundedness, Coverage, Type, Selection };
  Kind kind;
  std::string subject;
  std::string detail;

  std::string kind_name() const {
    switch (kind) {
      case Kind::Normalization: return "NormalizationViolation";
      case Kind::WellFoundedness: return "WellFoundednessViolation";
      case Kind::Coverage: return "CoverageViolation";
      case Kind::Type: return "TypeViolation";
      case Kind::Selection: return "SelectionViolation";
    }
    return "Violation";
  }
  std::string str() const {
    std::string s = kind_name() + "(" + subject + ")";
    if (!detail.empty()) s += ": " + detail;
    return s;
  }
};

class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<Violation> violations)
      : Error(describe(violations)), violations_(std::move(violations)) {}
  const std::vector<Violation>& violations() const noexcept { return violations_; }

 private:
  static std::string describe(const std::vector<Violation>& v) {
    std::string s = "invalid model";
    for (const auto& x : v) s += "\n  " + x.str();
    return s;
  }
  std::vector<Violation> violations_;
};

inline constexpr double kNormalizationTolerance = 1e-9;

/// A logical hidden Markov model M = (Σ, μ, Δ). Immutable once built; body
/// groups and the specificity order among bodies are derived on construction.
class Lohmm {
 public:
  struct BodyGroup {
    Atom body;
    std::string key;
    std::vector<std::size_t> clauses;
  };

  Lohmm() = default;
  Lohmm(Signature sig, SelectionDistribution mu, std::vector<AbstractTransition> delta)
      : sig_(std::move(sig)), mu_(std::move(mu)), delta_(std::move(delta)) {
    index();
  }

  const Signature& signature() const noexcept { return sig_; }
  const SelectionDistribution& selection() const noexcept { return mu_; }
  const std::vector<AbstractTransition>& transitions() const noexcept { return delta_; }
  const std::vector<BodyGroup>& bodies() const noexcept { return groups_; }
  std::size_t group_of(std::size_t clause) const { return group_of_.at(clause); }

  /// Domain id of a variable within a clause, if typed.
  std::optional<std::size_t> var_domain(std::size_t clause, const std::string& var) const {
    const auto& m = var_domains_.at(clause);
    auto it = m.find(var);
    if (it == m.end()) return std::nullopt;
    return it->second;
  }
  const std::string& typing_error(std::size_t clause) const { return typing_errors_.at(clause); }

  /// Body i is strictly more specific than body j.
  bool more_specific(std::size_t i, std::size_t j) const { return specific_[i * groups_.size() + j]; }

  std::optional<std::size_t> find_body(const Atom& body) const {
    std::string k = canonical_key(body);
    for (std::size_t g = 0; g < groups_.size(); ++g)
      if (groups_[g].key == k) return g;
    return std::nullopt;
  }

  Lohmm with_transition_probs(const std::vector<double>& probs) const {
    Lohmm out = *this;
    for (std::size_t i = 0; i < out.delta_.size(); ++i) out.delta_[i].prob = probs.at(i);
    return out;
  }
  Lohmm with_selection(SelectionDistribution mu) const {
    Lohmm out = *this;
    out.mu_ = std::move(mu);
    return out;
  }

 private:
  void index() {
    groups_.clear();
    group_of_.assign(delta_.size(), 0);
    var_domains_.assign(delta_.size(), {});
    typing_errors_.assign(delta_.size(), {});
    for (std::size_t i = 0; i < delta_.size(); ++i) {
      const auto& t = delta_[i];
      std::string k = canonical_key(t.body);
      std::size_t g = 0;
      while (g < groups_.size() && groups_[g].key != k) ++g;
      if (g == groups_.size()) groups_.push_back({t.body, k, {}});
      groups_[g].clauses.push_back(i);
      group_of_[i] = g;

      std::map<std::string, std::string> doms;
      try {
        for (const Atom& a : clause_atoms(t)) variable_domains(a, sig_, doms);
        for (const auto& [v, d] : doms) var_domains_[i].emplace(v, *sig_.domain_id(d));
      } catch (const Error& e) {
        typing_errors_[i] = e.what();
      }
    }
    const std::size_t n = groups_.size();
    specific_.assign(n * n, false);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b)
        if (a != b) specific_[a * n + b] = strictly_more_specific(groups_[a].body, groups_[b].body);
  }

  Signature sig_;
  SelectionDistribution mu_;
  std::vector<AbstractTransition> delta_;
  std::vector<BodyGroup> groups_;
  std::vector<std::size_t> group_of_;
  std::vector<std::map<std::string, std::size_t>> var_domains_;
  std::vector<std::string> typing_errors_;
  std::vector<bool> specific_;
};

// ---------------------------------------------------------------------------
// Conflict resolution
// ---------------------------------------------------------------------------

/// Group indices of all maximally specific bodies subsuming `state`.
inline std::vector<std::size_t> maximal_bodies(const Lohmm& m, const Atom& state) {
  std::vector<std::size_t> matching;
  for (std::size_t g = 0; g < m.bodies().size(); ++g)
    if (subsumes(m.bodies()[g].body, state)) matching.push_back(g);
  std::vector<std::size_t> maximal;
  for (std::size_t g : matching) {
    bool dominated = false;
    for (std::size_t h : matching)
      if (h != g && m.more_specific(h, g)) {
        dominated = true;
        break;
      }
    if (!dominated) maximal.push_back(g);
  }
  return maximal;
}

/// Group index of the unique maximally specific body subsuming `state`.
inline std::size_t most_specific_group(const Lohmm& m, const Atom& state) {
  auto maximal = maximal_bodies(m, state);
  if (maximal.size() == 1) return maximal.front();
  if (maximal.empty()) throw NoMatchingBody("no body subsumes " + format_atom(state));
  throw NoMatchingBody("ambiguous bodies for " + format_atom(state));
}

inline Atom most_specific_body(const Lohmm& m, const Atom& state) {
  return m.bodies()[most_specific_group(m, state)].body;
}

struct ClauseMatch {
  std::size_t clause;
  Substitution theta;
};

/// Clauses of the most specific body for `state`, each with θ_B.
inline std::vector<ClauseMatch> matching_clauses(const Lohmm& m, const Atom& state) {
  std::vector<ClauseMatch> out;
  for (std::size_t c : m.bodies()[most_specific_group(m, state)].clauses) {
    auto theta = subsumes(m.transitions()[c].body, state);
    if (theta) out.push_back({c, std::move(*theta)});
  }
  return out;
}

inline std::vector<std::pair<AbstractTransition, Substitution>> matching_transitions(const Lohmm& m,
                                                                                   const Atom& state) {
  std::vector<std::pair<AbstractTransition, Substitution>> out;
  for (auto& cm : matching_clauses(m, state)) out.emplace_back(m.transitions()[cm.clause], std::move(cm.theta));
  return out;
}

// ---------------------------------------------------------------------------
// Selection distribution and ground transition probability
// ---------------------------------------------------------------------------

/// P_d(value); zero for values outside the domain (μ only selects constants).
inline double selection_prob(const Lohmm& m, std::size_t domain, const Term& value) {
  if (!value.is_constant()) return 0.0;
  auto c = m.signature().constant_index(domain, value.name);
  return c ? m.selection().prob(domain, *c) : 0.0;
}

/// Product of selection probabilities over the variables bound by `theta`,
/// typed by the clause they belong to. Each variable counts once.
inline double selection_product(const Lohmm& m, std::size_t clause, const Substitution& theta) {
  double p = 1.0;
  for (const auto& [v, t] : theta) {
    auto d = m.var_domain(clause, v);
    if (!d) return 0.0;
    p *= selection_prob(m, *d, t);
    if (p == 0.0) break;
  }
  return p;
}

/// μ(ground | abstract) under the naive-Bayes product form.
inline double mu_prob(const Lohmm& m, const Atom& abstract, const Atom& ground) {
  auto theta = subsumes(abstract, ground);
  if (!theta) throw DomainMismatch(format_atom(ground) + " is not an instance of " + format_atom(abstract));
  auto doms = variable_domains(abstract, m.signature());
  double p = 1.0;
  for (const auto& [v, t] : *theta) {
    std::size_t d = *m.signature().domain_id(doms.at(v));
    if (!t.is_constant() || !m.signature().constant_index(d, t.name))
      throw DomainMismatch(format_term(t) + " is not in domain '" + doms.at(v) + "'");
    p *= selection_prob(m, d, t);
  }
  return p;
}

/// Contribution of one clause to P(h, o | b): p · μ(h | head·θ_B) · μ(o | obs·θ_B·θ_H).
inline double clause_step_prob(const Lohmm& m, std::size_t clause, const Substitution& theta_b, const Atom& h,
                               const Atom* o) {
  const AbstractTransition& cl = m.transitions()[clause];
  Atom head = apply(cl.head, theta_b);
  auto theta_h = subsumes(head, h);
  if (!theta_h) return 0.0;
  double p = cl.prob * selection_product(m, clause, *theta_h);
  if (p == 0.0) return 0.0;
  if (!cl.obs) return o ? 0.0 : p;
  if (!o) return 0.0;
  Atom obs = apply(apply(*cl.obs, theta_b), *theta_h);
  auto theta_o = subsumes(obs, *o);
  if (!theta_o) return 0.0;
  return p * selection_product(m, clause, *theta_o);
}

/// P(h, o | b, M, λ). `o` is empty exactly for steps out of start.
inline double ground_step_prob(const Lohmm& m, const Atom& b, const Atom& h, const std::optional<Atom>& o) {
  double total = 0.0;
  for (const auto& cm : matching_clauses(m, b))
    total += clause_step_prob(m, cm.clause, cm.theta, h, o ? &*o : nullptr);
  return total;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace detail {

inline void check_typed_atom(const Atom& a, const Signature& sig, bool state, std::vector<Violation>& out) {
  const PredicateKey k = key_of(a);
  if (state ? !sig.is_state(k) : !sig.is_obs(k)) {
    out.push_back({Violation::Kind::Type, format_atom(a),
                   std::string("undeclared ") + (state ? "state" : "observation") + " predicate " + k.str()});
    return;
  }
  const auto& doms = *sig.arg_domains(k);
  for (std::size_t i = 0; i < a.arity(); ++i) {
    std::size_t d = *sig.domain_id(doms[i]);
    std::function<bool(const Term&)> ok = [&](const Term& t) {
      if (t.is_variable()) return true;
      if (t.is_constant()) return sig.constant_index(d, t.name).has_value();
      return std::all_of(t.args.begin(), t.args.end(), ok);
    };
    if (!ok(a.args[i]))
      out.push_back({Violation::Kind::Type, format_atom(a),
                     "argument " + std::to_string(i + 1) + " outside domain '" + doms[i] + "'"});
  }
}

}  // namespace detail

/// Checks typing, normalization per body, the selection
/// distribution, coverage of every ground state, and well-foundedness.
inline std::vector<Violation> validate(const Lohmm& m) {
  std::vector<Violation> out;
  const Signature& sig = m.signature();

  for (std::size_t i = 0; i < m.transitions().size(); ++i) {
    const auto& t = m.transitions()[i];
    std::string subject = format_clause(t);
    detail::check_typed_atom(t.body, sig, true, out);
    detail::check_typed_atom(t.head, sig, true, out);
    if (is_start(t.head)) out.push_back({Violation::Kind::Type, subject, "start/0 cannot be a head"});
    if (t.obs) detail::check_typed_atom(*t.obs, sig, false, out);
    if (is_start(t.body) == t.obs.has_value())
      out.push_back({Violation::Kind::Type, subject, "observation must be absent exactly for start/0 bodies"});
    if (!m.typing_error(i).empty()) out.push_back({Violation::Kind::Type, subject, m.typing_error(i)});
    if (!(t.prob >= 0.0 && t.prob <= 1.0))
      out.push_back({Violation::Kind::Normalization, subject, "probability outside [0,1]"});
  }

  for (const auto& g : m.bodies()) {
    double sum = 0.0;
    for (std::size_t c : g.clauses) sum += m.transitions()[c].prob;
    if (std::abs(sum - 1.0) > kNormalizationTolerance) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "probabilities sum to %.12g", sum);
      out.push_back({Violation::Kind::Normalization, format_atom(g.body), buf});
    }
  }

  if (m.selection().domain_count() != sig.domain_count()) {
    out.push_back({Violation::Kind::Selection, "mu", "selection distribution does not match the domains"});
  } else {
    for (std::size_t d = 0; d < sig.domain_count(); ++d) {
      const auto& p = m.selection().domain(d);
      double sum = 0.0;
      bool negative = false;
      for (double x : p) {
        sum += x;
        negative |= !(x >= 0.0);
      }
      if (p.size() != sig.constants(d).size() || negative || std::abs(sum - 1.0) > kNormalizationTolerance)
        out.push_back({Violation::Kind::Selection, sig.domain_name(d), "not a distribution over the domain"});
    }
  }
  if (!out.empty()) return out;

  // Coverage: every ground state (and start) needs a subsuming body.
  if (!m.find_body(start_atom()))
    out.push_back({Violation::Kind::Coverage, "start", "no transitions out of start"});
  for (const auto& k : sig.state_predicates()) {
    if (k == start_predicate()) continue;
    std::vector<Term> general;
    for (std::size_t i = 0; i < k.arity; ++i) general.push_back(Term::variable("#" + std::to_string(i)));
    if (m.find_body(Atom(k.name, general))) continue;
    for (const Atom& g : ground_instances(Atom(k.name, general), sig))
      if (maximal_bodies(m, g).empty()) out.push_back({Violation::Kind::Coverage, format_atom(g), "no body subsumes it"});
  }

  // Well-foundedness: ambiguity can only arise inside the meet of two
  // incomparable unifiable bodies that is not itself a body.
  std::set<std::string> reported;
  const auto& groups = m.bodies();
  for (std::size_t i = 0; i < groups.size(); ++i) {
    for (std::size_t j = i + 1; j < groups.size(); ++j) {
      if (m.more_specific(i, j) || m.more_specific(j, i)) continue;
      Atom fresh = freshen(groups[j].body);
      auto u = unify(groups[i].body, fresh);
      if (!u) continue;
      Atom meet = apply(groups[i].body, *u);
      if (m.find_body(meet)) continue;
      std::vector<Atom> witnesses;
      try {
        witnesses = ground_instances(meet, sig);
      } catch (const Error&) {
        continue;
      }
      for (const Atom& g : witnesses) {
        if (maximal_bodies(m, g).size() > 1 && reported.insert(format_atom(g)).second)
          out.push_back({Violation::Kind::WellFoundedness, format_atom(g),
                         "no unique maximally specific body (" + format_atom(groups[i].body) + " vs " +
                             format_atom(groups[j].body) + ")"});
      }
    }
  }
  return out;
}

}  // namespace lohmm
