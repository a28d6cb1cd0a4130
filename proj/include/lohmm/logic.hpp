#pragma once

// First-order syntax used by logical HMMs: terms, atoms, substitutions,
// unification, one-way matching, typed signatures and grounding.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lohmm/errors.hpp"

namespace lohmm {

// ---------------------------------------------------------------------------
// Terms and atoms
// ---------------------------------------------------------------------------

struct Term {
  enum class Kind : std::uint8_t { Variable, Constant, Compound };

  Kind kind = Kind::Constant;
  std::string name;        // variable name, constant, or functor
  std::vector<Term> args;  // non-empty iff kind == Compound

  static Term variable(std::string n) { return Term{Kind::Variable, std::move(n), {}}; }
  static Term constant(std::string n) { return Term{Kind::Constant, std::move(n), {}}; }
  static Term compound(std::string functor, std::vector<Term> a) {
    if (a.empty()) return constant(std::move(functor));
    return Term{Kind::Compound, std::move(functor), std::move(a)};
  }

  bool is_variable() const noexcept { return kind == Kind::Variable; }
  bool is_constant() const noexcept { return kind == Kind::Constant; }
  bool is_compound() const noexcept { return kind == Kind::Compound; }
};

inline int compare(const Term& a, const Term& b) {
  if (a.kind != b.kind) return a.kind < b.kind ? -1 : 1;
  if (int c = a.name.compare(b.name); c != 0) return c < 0 ? -1 : 1;
  if (a.args.size() != b.args.size()) return a.args.size() < b.args.size() ? -1 : 1;
  for (std::size_t i = 0; i < a.args.size(); ++i)
    if (int c = compare(a.args[i], b.args[i]); c != 0) return c;
  return 0;
}
inline bool operator==(const Term& a, const Term& b) { return compare(a, b) == 0; }
inline bool operator<(const Term& a, const Term& b) { return compare(a, b) < 0; }

struct Atom {
  std::string predicate;
  std::vector<Term> args;

  Atom() = default;
  explicit Atom(std::string pred, std::vector<Term> a = {})
      : predicate(std::move(pred)), args(std::move(a)) {}

  std::size_t arity() const noexcept { return args.size(); }
};

inline int compare(const Atom& a, const Atom& b) {
  if (int c = a.predicate.compare(b.predicate); c != 0) return c < 0 ? -1 : 1;
  if (a.args.size() != b.args.size()) return a.args.size() < b.args.size() ? -1 : 1;
  for (std::size_t i = 0; i < a.args.size(); ++i)
    if (int c = compare(a.args[i], b.args[i]); c != 0) return c;
  return 0;
}
inline bool operator==(const Atom& a, const Atom& b) { return compare(a, b) == 0; }
inline bool operator<(const Atom& a, const Atom& b) { return compare(a, b) < 0; }

inline bool is_ground(const Term& t) {
  if (t.is_variable()) return false;
  return std::all_of(t.args.begin(), t.args.end(), [](const Term& s) { return is_ground(s); });
}
inline bool is_ground(const Atom& a) {
  return std::all_of(a.args.begin(), a.args.end(), [](const Term& s) { return is_ground(s); });
}
inline bool is_functor_free(const Atom& a) {
  return std::none_of(a.args.begin(), a.args.end(), [](const Term& t) { return t.is_compound(); });
}

/// Collects variable names in order of first occurrence (no duplicates).
inline void collect_vars(const Term& t, std::vector<std::string>& out) {
  if (t.is_variable()) {
    if (std::find(out.begin(), out.end(), t.name) == out.end()) out.push_back(t.name);
    return;
  }
  for (const Term& s : t.args) collect_vars(s, out);
}
inline void collect_vars(const Atom& a, std::vector<std::string>& out) {
  for (const Term& t : a.args) collect_vars(t, out);
}
inline std::vector<std::string> vars_of(const Atom& a) {
  std::vector<std::string> out;
  collect_vars(a, out);
  return out;
}

inline bool occurs_in(const std::string& var, const Term& t) {
  if (t.is_variable()) return t.name == var;
  return std::any_of(t.args.begin(), t.args.end(), [&](const Term& s) { return occurs_in(var, s); });
}

// ---------------------------------------------------------------------------
// Substitutions
// ---------------------------------------------------------------------------

class Substitution {
 public:
  Substitution() = default;
  Substitution(std::initializer_list<std::pair<const std::string, Term>> init) : bindings_(init) {}

  const Term* lookup(const std::string& var) const {
    auto it = bindings_.find(var);
    return it == bindings_.end() ? nullptr : &it->second;
  }
  void bind(std::string var, Term value) { bindings_.insert_or_assign(std::move(var), std::move(value)); }
  bool empty() const noexcept { return bindings_.empty(); }
  std::size_t size() const noexcept { return bindings_.size(); }

  const std::map<std::string, Term>& bindings() const noexcept { return bindings_; }
  auto begin() const { return bindings_.begin(); }
  auto end() const { return bindings_.end(); }

  friend bool operator==(const Substitution& a, const Substitution& b) { return a.bindings_ == b.bindings_; }

 private:
  std::map<std::string, Term> bindings_;
};

inline Term apply(const Term& t, const Substitution& theta) {
  if (t.is_variable()) {
    if (const Term* v = theta.lookup(t.name)) return *v;
    return t;
  }
  if (t.is_constant()) return t;
  Term out{t.kind, t.name, {}};
  out.args.reserve(t.args.size());
  for (const Term& s : t.args) out.args.push_back(apply(s, theta));
  return out;
}

inline Atom apply(const Atom& a, const Substitution& theta) {
  Atom out(a.predicate);
  out.args.reserve(a.args.size());
  for (const Term& t : a.args) out.args.push_back(apply(t, theta));
  return out;
}

/// Composition: applying the result equals applying `first` then `second`.
inline Substitution compose(const Substitution& first, const Substitution& second) {
  Substitution out;
  for (const auto& [v, t] : first) {
    Term r = apply(t, second);
    if (!(r.is_variable() && r.name == v)) out.bind(v, std::move(r));
  }
  for (const auto& [v, t] : second)
    if (!first.lookup(v)) out.bind(v, t);
  return out;
}

// ---------------------------------------------------------------------------
// Unification and matching
// ---------------------------------------------------------------------------

namespace detail {

using Bindings = std::map<std::string, Term>;

inline const Term& walk(const Term& t, const Bindings& s) {
  const Term* cur = &t;
  while (cur->is_variable()) {
    auto it = s.find(cur->name);
    if (it == s.end()) break;
    cur = &it->second;
  }
  return *cur;
}

inline bool occurs_walk(const std::string& var, const Term& t, const Bindings& s) {
  const Term& w = walk(t, s);
  if (w.is_variable()) return w.name == var;
  return std::any_of(w.args.begin(), w.args.end(),
                     [&](const Term& a) { return occurs_walk(var, a, s); });
}

inline bool unify_terms(const Term& x, const Term& y, Bindings& s) {
  const Term& a = walk(x, s);
  const Term& b = walk(y, s);
  if (a.is_variable() && b.is_variable() && a.name == b.name) return true;
  if (a.is_variable()) {
    if (occurs_walk(a.name, b, s)) return false;
    s.emplace(a.name, b);
    return true;
  }
  if (b.is_variable()) {
    if (occurs_walk(b.name, a, s)) return false;
    s.emplace(b.name, a);
    return true;
  }
  if (a.kind != b.kind || a.name != b.name || a.args.size() != b.args.size()) return false;
  for (std::size_t i = 0; i < a.args.size(); ++i) {
    // Copies guard against rehoming of references when `s` grows.
    Term ai = a.args[i];
    Term bi = b.args[i];
    if (!unify_terms(ai, bi, s)) return false;
  }
  return true;
}

inline Term resolve(const Term& t, const Bindings& s) {
  const Term& w = walk(t, s);
  if (!w.is_compound()) return w;
  Term out{w.kind, w.name, {}};
  for (const Term& a : w.args) out.args.push_back(resolve(a, s));
  return out;
}

inline bool match_terms(const Term& general, const Term& specific, Bindings& s) {
  if (general.is_variable()) {
    auto it = s.find(general.name);
    if (it != s.end()) return it->second == specific;
    s.emplace(general.name, specific);
    return true;
  }
  if (general.kind != specific.kind || general.name != specific.name ||
      general.args.size() != specific.args.size())
    return false;
  for (std::size_t i = 0; i < general.args.size(); ++i)
    if (!match_terms(general.args[i], specific.args[i], s)) return false;
  return true;
}

}  // namespace detail

/// Most general unifier with occurs check; the result is idempotent.
inline std::optional<Substitution> unify(const Atom& a, const Atom& b) {
  if (a.predicate != b.predicate || a.arity() != b.arity()) return std::nullopt;
  detail::Bindings s;
  for (std::size_t i = 0; i < a.arity(); ++i)
    if (!detail::unify_terms(a.args[i], b.args[i], s)) return std::nullopt;
  Substitution out;
  for (const auto& [v, _] : s) out.bind(v, detail::resolve(Term::variable(v), s));
  return out;
}

/// One-way matching: θ over the variables of `general` with general·θ == specific.
/// Variables of `specific` are treated as rigid symbols.
inline std::optional<Substitution> subsumes(const Atom& general, const Atom& specific) {
  if (general.predicate != specific.predicate || general.arity() != specific.arity())
    return std::nullopt;
  detail::Bindings s;
  for (std::size_t i = 0; i < general.arity(); ++i)
    if (!detail::match_terms(general.args[i], specific.args[i], s)) return std::nullopt;
  Substitution out;
  for (auto& [v, t] : s)
    if (!(t.is_variable() && t.name == v)) out.bind(v, std::move(t));
  return out;
}

/// α-equivalence.
inline bool variant(const Atom& a, const Atom& b) {
  if (!subsumes(a, b) || !subsumes(b, a)) return false;
  return vars_of(a).size() == vars_of(b).size();
}

/// a is strictly more specific than b.
inline bool strictly_more_specific(const Atom& a, const Atom& b) {
  return subsumes(b, a).has_value() && !subsumes(a, b).has_value();
}

// ---------------------------------------------------------------------------
// Fresh variable names
// ---------------------------------------------------------------------------

/// Source of globally fresh variable names `_G<n>`. Thread-safe.
class FreshNames {
 public:
  std::string next() { return "_G" + std::to_string(counter_.fetch_add(1, std::memory_order_relaxed)); }

 private:
  std::atomic<std::uint64_t> counter_{0};
};

inline FreshNames& default_fresh_names() {
  static FreshNames names;
  return names;
}

inline Term freshen(const Term& t, FreshNames& names, std::map<std::string, std::string>& renaming) {
  if (t.is_variable()) {
    auto it = renaming.find(t.name);
    if (it == renaming.end()) it = renaming.emplace(t.name, names.next()).first;
    return Term::variable(it->second);
  }
  Term out{t.kind, t.name, {}};
  for (const Term& s : t.args) out.args.push_back(freshen(s, names, renaming));
  return out;
}

/// Renames variables apart; `renaming` carries sharing across several atoms.
inline Atom freshen(const Atom& a, FreshNames& names, std::map<std::string, std::string>& renaming) {
  Atom out(a.predicate);
  for (const Term& t : a.args) out.args.push_back(freshen(t, names, renaming));
  return out;
}

inline Atom freshen(const Atom& a, FreshNames& names = default_fresh_names()) {
  std::map<std::string, std::string> renaming;
  return freshen(a, names, renaming);
}

// ---------------------------------------------------------------------------
// Text form
// ---------------------------------------------------------------------------

inline bool is_anonymous_name(std::string_view v) { return !v.empty() && v.front() == '_'; }

/// Assigns printable names to variables. User-chosen names are kept;
/// internal names (leading `_`) print as `_` when they occur once and as a
/// fresh readable name otherwise.
class VarNamer {
 public:
  VarNamer() = default;

  /// `occurrences` counts each variable over the whole printed unit (atom or clause).
  explicit VarNamer(std::map<std::string, int> occurrences) : occurrences_(std::move(occurrences)) {
    for (const auto& [v, _] : occurrences_)
      if (!is_anonymous_name(v)) taken_.insert(v);
  }

  std::string name(const std::string& var) {
    if (!is_anonymous_name(var)) return var;
    auto occ = occurrences_.find(var);
    if (occ == occurrences_.end() || occ->second <= 1) return "_";
    auto it = assigned_.find(var);
    if (it != assigned_.end()) return it->second;
    std::string candidate;
    do {
      candidate = "V" + std::to_string(++next_);
    } while (taken_.count(candidate));
    taken_.insert(candidate);
    assigned_.emplace(var, candidate);
    return candidate;
  }

 private:
  std::map<std::string, int> occurrences_;
  std::set<std::string> taken_;
  std::map<std::string, std::string> assigned_;
  int next_ = 0;
};

inline void count_occurrences(const Term& t, std::map<std::string, int>& occ) {
  if (t.is_variable()) {
    ++occ[t.name];
    return;
  }
  for (const Term& s : t.args) count_occurrences(s, occ);
}
inline void count_occurrences(const Atom& a, std::map<std::string, int>& occ) {
  for (const Term& t : a.args) count_occurrences(t, occ);
}

inline void format_term(const Term& t, VarNamer& namer, std::string& out) {
  if (t.is_variable()) {
    out += namer.name(t.name);
    return;
  }
  out += t.name;
  if (t.is_compound()) {
    out += '(';
    for (std::size_t i = 0; i < t.args.size(); ++i) {
      if (i) out += ", ";
      format_term(t.args[i], namer, out);
    }
    out += ')';
  }
}

inline void format_atom(const Atom& a, VarNamer& namer, std::string& out) {
  out += a.predicate;
  if (a.args.empty()) return;
  out += '(';
  for (std::size_t i = 0; i < a.args.size(); ++i) {
    if (i) out += ", ";
    format_term(a.args[i], namer, out);
  }
  out += ')';
}

inline std::string format_atom(const Atom& a) {
  std::map<std::string, int> occ;
  count_occurrences(a, occ);
  VarNamer namer(std::move(occ));
  std::string out;
  format_atom(a, namer, out);
  return out;
}

inline std::string format_term(const Term& t) {
  std::map<std::string, int> occ;
  count_occurrences(t, occ);
  VarNamer namer(std::move(occ));
  std::string out;
  format_term(t, namer, out);
  return out;
}

/// Text with variables renamed by first occurrence; equal keys iff α-equivalent.
inline std::string canonical_key(std::span<const Atom> atoms) {
  std::vector<std::string> order;
  for (const Atom& a : atoms) collect_vars(a, order);
  Substitution rename;
  for (std::size_t i = 0; i < order.size(); ++i) rename.bind(order[i], Term::variable("#" + std::to_string(i)));
  std::string out;
  for (const Atom& a : atoms) {
    Atom r = apply(a, rename);
    VarNamer plain;
    if (!out.empty()) out += " | ";
    format_atom(r, plain, out);
  }
  return out;
}
inline std::string canonical_key(const Atom& a) { return canonical_key(std::span<const Atom>(&a, 1)); }

/// Lexical cursor shared by the atom, model and corpus readers.
class Cursor {
 public:
  explicit Cursor(std::string_view text, bool hash_comments = false)
      : text_(text), hash_comments_(hash_comments) {}

  void skip_space() {
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else if (hash_comments_ && c == '#') {
        while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  bool at_end() {
    skip_space();
    return pos_ >= text_.size();
  }
  char peek() {
    skip_space();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }
  bool consume(std::string_view token) {
    skip_space();
    if (text_.substr(pos_, token.size()) == token) {
      pos_ += token.size();
      return true;
    }
    return false;
  }
  void expect(std::string_view token) {
    if (!consume(token)) fail("expected '" + std::string(token) + "'");
  }

  static bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

  /// Identifier, variable or unsigned integer; empty when none starts here.
  std::string word() {
    skip_space();
    std::size_t start = pos_;
    while (pos_ < text_.size() && ident_char(text_[pos_])) ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }

  double number() {
    skip_space();
    std::size_t start = pos_;
    auto digits = [&] {
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    };
    if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
    digits();
    if (pos_ + 1 < text_.size() && text_[pos_] == '.' &&
        std::isdigit(static_cast<unsigned char>(text_[pos_ + 1]))) {
      ++pos_;
      digits();
    }
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      ++pos_;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
      digits();
    }
    std::string tok(text_.substr(start, pos_ - start));
    try {
      std::size_t used = 0;
      double v = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      return v;
    } catch (const std::exception&) {
      pos_ = start;
      fail("expected a number");
    }
  }

  [[noreturn]] void fail(const std::string& what) const {
    std::size_t line = 1;
    for (std::size_t i = 0; i < pos_ && i < text_.size(); ++i)
      if (text_[i] == '\n') ++line;
    throw SyntaxError(what, pos_, line_offset_ ? line_offset_ : (line > 1 ? line : 0));
  }

  void set_line(std::size_t line) { line_offset_ = line; }
  std::size_t position() const noexcept { return pos_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  bool hash_comments_;
  std::size_t line_offset_ = 0;
};

inline bool is_constant_name(std::string_view w) {
  if (w.empty()) return false;
  if (std::islower(static_cast<unsigned char>(w.front()))) return true;
  return std::all_of(w.begin(), w.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}
inline bool is_variable_name(std::string_view w) {
  return !w.empty() && (std::isupper(static_cast<unsigned char>(w.front())) || w.front() == '_');
}

/// Variables named in one clause/atom share a scope; `_`-prefixed names are
/// always fresh.
class VariableScope {
 public:
  explicit VariableScope(FreshNames& names = default_fresh_names()) : names_(&names) {}
  Term variable(const std::string& text) {
    if (is_anonymous_name(text)) return Term::variable(names_->next());
    return Term::variable(text);
  }

 private:
  FreshNames* names_;
};

inline Term parse_term(Cursor& in, VariableScope& scope) {
  std::string w = in.word();
  if (w.empty()) in.fail("expected a term");
  if (is_variable_name(w)) return scope.variable(w);
  if (!is_constant_name(w)) in.fail("malformed identifier '" + w + "'");
  if (!in.consume("(")) return Term::constant(std::move(w));
  if (std::isdigit(static_cast<unsigned char>(w.front()))) in.fail("integer used as functor");
  std::vector<Term> args;
  do {
    args.push_back(parse_term(in, scope));
  } while (in.consume(","));
  in.expect(")");
  return Term::compound(std::move(w), std::move(args));
}

inline Atom parse_atom(Cursor& in, VariableScope& scope) {
  std::string w = in.word();
  if (w.empty() || !std::islower(static_cast<unsigned char>(w.front())))
    in.fail("expected a predicate symbol");
  Atom a(std::move(w));
  if (in.consume("(")) {
    do {
      a.args.push_back(parse_term(in, scope));
    } while (in.consume(","));
    in.expect(")");
  }
  return a;
}

/// Grammar: atom := ident | ident '(' term (',' term)* ')'.
inline Atom parse_atom(std::string_view text) {
  Cursor in(text);
  VariableScope scope;
  Atom a = parse_atom(in, scope);
  if (!in.at_end()) in.fail("trailing characters after atom");
  return a;
}

// ---------------------------------------------------------------------------
// Typed signature
// ---------------------------------------------------------------------------

struct PredicateKey {
  std::string name;
  std::size_t arity = 0;

  auto operator<=>(const PredicateKey&) const = default;
  std::string str() const { return name + "/" + std::to_string(arity); }
};

inline PredicateKey key_of(const Atom& a) { return {a.predicate, a.arity()}; }

inline const PredicateKey& start_predicate() {
  static const PredicateKey k{"start", 0};
  return k;
}
inline Atom start_atom() { return Atom("start"); }
inline bool is_start(const Atom& a) { return a.predicate == "start" && a.args.empty(); }

/// Finite typed alphabet: named constant domains and the argument domains of
/// state and observation predicates. `start/0` is always a state predicate.
class Signature {
 public:
  Signature() { state_order_.push_back(start_predicate()); state_.emplace(start_predicate(), std::vector<std::string>{}); }

  void add_domain(const std::string& name, std::vector<std::string> constants) {
    if (domain_index_.count(name)) throw Error("domain '" + name + "' declared twice");
    if (constants.empty()) throw Error("domain '" + name + "' is empty");
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < constants.size(); ++i)
      if (!index.emplace(constants[i], i).second)
        throw Error("duplicate constant '" + constants[i] + "' in domain '" + name + "'");
    domain_index_.emplace(name, domains_.size());
    domains_.push_back({name, std::move(constants), std::move(index)});
  }

  void add_state(const PredicateKey& key, std::vector<std::string> arg_domains) {
    declare(key, std::move(arg_domains), /*state=*/true);
  }
  void add_obs(const PredicateKey& key, std::vector<std::string> arg_domains) {
    declare(key, std::move(arg_domains), /*state=*/false);
  }

  std::size_t domain_count() const noexcept { return domains_.size(); }
  const std::string& domain_name(std::size_t i) const { return domains_.at(i).name; }
  const std::vector<std::string>& constants(std::size_t i) const { return domains_.at(i).constants; }

  std::optional<std::size_t> domain_id(const std::string& name) const {
    auto it = domain_index_.find(name);
    if (it == domain_index_.end()) return std::nullopt;
    return it->second;
  }
  const std::vector<std::string>& constants(const std::string& domain) const {
    auto id = domain_id(domain);
    if (!id) throw Error("unknown domain '" + domain + "'");
    return domains_[*id].constants;
  }
  std::optional<std::size_t> constant_index(std::size_t domain, const std::string& c) const {
    const auto& idx = domains_.at(domain).index;
    auto it = idx.find(c);
    if (it == idx.end()) return std::nullopt;
    return it->second;
  }

  bool is_state(const PredicateKey& k) const { return state_.count(k) > 0; }
  bool is_obs(const PredicateKey& k) const { return obs_.count(k) > 0; }

  /// Argument domains of a declared predicate (state or observation), else null.
  const std::vector<std::string>* arg_domains(const PredicateKey& k) const {
    if (auto it = state_.find(k); it != state_.end()) return &it->second;
    if (auto it = obs_.find(k); it != obs_.end()) return &it->second;
    return nullptr;
  }

  const std::vector<PredicateKey>& state_predicates() const noexcept { return state_order_; }
  const std::vector<PredicateKey>& obs_predicates() const noexcept { return obs_order_; }

 private:
  struct Domain {
    std::string name;
    std::vector<std::string> constants;
    std::map<std::string, std::size_t> index;
  };

  void declare(const PredicateKey& key, std::vector<std::string> arg_domains, bool state) {
    if (key.arity != arg_domains.size())
      throw Error("predicate " + key.str() + " declares " + std::to_string(arg_domains.size()) + " domains");
    for (const auto& d : arg_domains)
      if (!domain_index_.count(d)) throw Error("predicate " + key.str() + " uses unknown domain '" + d + "'");
    if (key == start_predicate()) {
      if (!state) throw Error("start/0 is reserved as a state predicate");
      return;
    }
    if (state_.count(key) || obs_.count(key)) throw Error("predicate " + key.str() + " declared twice");
    if (state) {
      state_.emplace(key, std::move(arg_domains));
      state_order_.push_back(key);
    } else {
      obs_.emplace(key, std::move(arg_domains));
      obs_order_.push_back(key);
    }
  }

  std::vector<Domain> domains_;
  std::map<std::string, std::size_t> domain_index_;
  std::map<PredicateKey, std::vector<std::string>> state_;
  std::map<PredicateKey, std::vector<std::string>> obs_;
  std::vector<PredicateKey> state_order_;
  std::vector<PredicateKey> obs_order_;
};

/// A ground term lies in a domain when it is one of its constants or, with
/// functors neglected, when every constant inside it does.
inline bool term_in_domain(const Term& t, const Signature& sig, std::size_t domain) {
  if (t.is_variable()) return false;
  if (t.is_constant()) return sig.constant_index(domain, t.name).has_value();
  return std::all_of(t.args.begin(), t.args.end(),
                     [&](const Term& s) { return term_in_domain(s, sig, domain); });
}

/// Maps each variable to the domain of the top-level argument position it
/// occupies. Throws UndeclaredPredicate or SharedVariableConflict.
inline void variable_domains(const Atom& a, const Signature& sig, std::map<std::string, std::string>& out) {
  const auto* doms = sig.arg_domains(key_of(a));
  if (!doms) throw UndeclaredPredicate("undeclared predicate " + key_of(a).str());
  for (std::size_t i = 0; i < a.arity(); ++i) {
    std::vector<std::string> vs;
    collect_vars(a.args[i], vs);
    for (const auto& v : vs) {
      auto [it, inserted] = out.emplace(v, (*doms)[i]);
      if (!inserted && it->second != (*doms)[i])
        throw SharedVariableConflict("variable " + v + " spans domains '" + it->second + "' and '" +
                                     (*doms)[i] + "'");
    }
  }
}

inline std::map<std::string, std::string> variable_domains(const Atom& a, const Signature& sig) {
  std::map<std::string, std::string> out;
  variable_domains(a, sig, out);
  return out;
}

/// G_Σ(a): every grounding with each variable ranging over its position's
/// domain, in lexicographic enumeration order.
inline std::vector<Atom> ground_instances(const Atom& a, const Signature& sig) {
  auto doms = variable_domains(a, sig);
  std::vector<std::string> vars = vars_of(a);
  std::vector<const std::vector<std::string>*> values;
  for (const auto& v : vars) values.push_back(&sig.constants(doms.at(v)));

  std::vector<Atom> out;
  std::vector<std::size_t> idx(vars.size(), 0);
  while (true) {
    Substitution theta;
    for (std::size_t i = 0; i < vars.size(); ++i) theta.bind(vars[i], Term::constant((*values[i])[idx[i]]));
    out.push_back(apply(a, theta));
    std::size_t k = vars.size();
    while (k > 0) {
      --k;
      if (++idx[k] < values[k]->size()) break;
      idx[k] = 0;
      if (k == 0) return out;
    }
    if (vars.empty()) return out;
  }
}

/// Checks a ground atom against the signature.
inline bool well_typed_ground(const Atom& a, const Signature& sig) {
  const auto* doms = sig.arg_domains(key_of(a));
  if (!doms || !is_ground(a)) return false;
  for (std::size_t i = 0; i < a.arity(); ++i) {
    auto d = sig.domain_id((*doms)[i]);
    if (!d || !term_in_domain(a.args[i], sig, *d)) return false;
  }
  return true;
}

}  // namespace lohmm
