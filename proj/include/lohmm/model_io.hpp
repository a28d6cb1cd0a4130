#pragma once

// Model file reader/writer.
//
//   domain file = lohmm, readme, f1, f2 .
//   state emacs/2 : file, user .   state start/0 .
//   obs emacs/1 : file .           obs ls/0 .
//   select file : lohmm 0.25, readme 0.25, f1 0.25, f2 0.25 .
//   trans 0.7 : start --> emacs(_, tex) .
//   trans 0.6 : emacs(F, tex) -- emacs(F) --> latex(F, tex) .
//
// `#` starts a line comment. A missing `select` block means uniform.

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lohmm/errors.hpp"
#include "lohmm/logic.hpp"
#include "lohmm/model.hpp"

namespace lohmm {

/// Shortest decimal text that reads back to the same double.
inline std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

namespace detail {

struct ParsedModel {
  Signature sig;
  std::vector<std::pair<std::string, std::vector<std::pair<std::string, double>>>> selects;
  std::vector<std::size_t> select_lines;
  std::vector<AbstractTransition> delta;
};

inline std::size_t line_at(std::string_view text, std::size_t pos) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < pos && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

inline PredicateKey parse_predicate_key(Cursor& in) {
  std::string name = in.word();
  if (name.empty() || !std::islower(static_cast<unsigned char>(name.front()))) in.fail("expected predicate name");
  in.expect("/");
  std::string arity = in.word();
  if (arity.empty() || !std::all_of(arity.begin(), arity.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
    in.fail("expected arity");
  return {name, static_cast<std::size_t>(std::stoul(arity))};
}

inline ParsedModel parse_model_text(std::string_view text, bool with_transitions) {
  ParsedModel out;
  Cursor in(text, /*hash_comments=*/true);
  while (!in.at_end()) {
    std::size_t stmt_pos = in.position();
    std::size_t line = line_at(text, stmt_pos + 0);
    std::string kw = in.word();
    try {
      if (kw == "domain") {
        std::string name = in.word();
        if (!is_constant_name(name)) in.fail("expected domain name");
        in.expect("=");
        std::vector<std::string> constants;
        do {
          std::string c = in.word();
          if (!is_constant_name(c)) in.fail("expected a constant");
          constants.push_back(c);
        } while (in.consume(","));
        in.expect(".");
        out.sig.add_domain(name, std::move(constants));
      } else if (kw == "state" || kw == "obs") {
        PredicateKey key = parse_predicate_key(in);
        std::vector<std::string> doms;
        if (in.consume(":")) {
          do {
            std::string d = in.word();
            if (!is_constant_name(d)) in.fail("expected a domain name");
            doms.push_back(d);
          } while (in.consume(","));
        }
        in.expect(".");
        if (kw == "state")
          out.sig.add_state(key, std::move(doms));
        else
          out.sig.add_obs(key, std::move(doms));
      } else if (kw == "select") {
        std::string domain = in.word();
        if (!is_constant_name(domain)) in.fail("expected a domain name");
        in.expect(":");
        std::vector<std::pair<std::string, double>> entries;
        do {
          std::string c = in.word();
          if (!is_constant_name(c)) in.fail("expected a constant");
          entries.emplace_back(c, in.number());
        } while (in.consume(","));
        in.expect(".");
        out.selects.emplace_back(domain, std::move(entries));
        out.select_lines.push_back(line);
      } else if (kw == "trans") {
        double p = in.number();
        in.expect(":");
        VariableScope scope;
        AbstractTransition t;
        t.prob = p;
        t.body = parse_atom(in, scope);
        if (in.consume("-->")) {
          t.head = parse_atom(in, scope);
        } else {
          in.expect("--");
          t.obs = parse_atom(in, scope);
          in.expect("-->");
          t.head = parse_atom(in, scope);
        }
        in.expect(".");
        if (with_transitions) out.delta.push_back(std::move(t));
      } else if (kw.empty()) {
        in.fail("unexpected character");
      } else {
        in.fail("unknown statement '" + kw + "'");
      }
    } catch (const SyntaxError&) {
      throw;
    } catch (const Error& e) {
      throw SyntaxError(e.what(), stmt_pos, line);
    }
  }
  return out;
}

inline SelectionDistribution build_selection(const ParsedModel& pm) {
  const Signature& sig = pm.sig;
  SelectionDistribution mu = SelectionDistribution::uniform(sig);
  std::vector<bool> seen(sig.domain_count(), false);
  for (std::size_t s = 0; s < pm.selects.size(); ++s) {
    const auto& [domain, entries] = pm.selects[s];
    const std::size_t line = pm.select_lines[s];
    auto d = sig.domain_id(domain);
    if (!d) throw SyntaxError("select for unknown domain '" + domain + "'", 0, line);
    if (seen[*d]) throw SyntaxError("domain '" + domain + "' selected twice", 0, line);
    seen[*d] = true;
    std::vector<double> probs(sig.constants(*d).size(), -1.0);
    for (const auto& [c, p] : entries) {
      auto idx = sig.constant_index(*d, c);
      if (!idx) throw SyntaxError("'" + c + "' is not in domain '" + domain + "'", 0, line);
      if (probs[*idx] >= 0.0) throw SyntaxError("'" + c + "' selected twice", 0, line);
      probs[*idx] = p;
    }
    for (std::size_t i = 0; i < probs.size(); ++i)
      if (probs[i] < 0.0)
        throw SyntaxError("select for '" + domain + "' misses '" + sig.constants(*d)[i] + "'", 0, line);
    mu.domain(*d) = std::move(probs);
  }
  return mu;
}

/// Divides by the sum when it is within tolerance but not already 1 to
/// round-off; repeated load/save cycles therefore leave values unchanged.
inline void renormalize(std::vector<double*> probs) {
  double sum = 0.0;
  for (double* p : probs) sum += *p;
  if (std::abs(sum - 1.0) <= 1e-12 || std::abs(sum - 1.0) > kNormalizationTolerance) return;
  for (double* p : probs) *p /= sum;
}

}  // namespace detail

/// Reads only the declarations (domains and predicates).
inline Signature load_signature(std::string_view text) {
  return detail::parse_model_text(text, /*with_transitions=*/false).sig;
}

/// Parses, renormalizes within tolerance, and validates. Throws SyntaxError
/// or ValidationError.
inline Lohmm load_model(std::string_view text) {
  auto pm = detail::parse_model_text(text, /*with_transitions=*/true);
  SelectionDistribution mu = detail::build_selection(pm);
  for (std::size_t d = 0; d < mu.domain_count(); ++d) {
    std::vector<double*> ps;
    for (double& x : mu.domain(d)) ps.push_back(&x);
    detail::renormalize(std::move(ps));
  }
  Lohmm raw(pm.sig, mu, pm.delta);
  for (const auto& g : raw.bodies()) {
    std::vector<double*> ps;
    for (std::size_t c : g.clauses) ps.push_back(&pm.delta[c].prob);
    detail::renormalize(std::move(ps));
  }
  Lohmm m(std::move(pm.sig), std::move(mu), std::move(pm.delta));
  auto violations = validate(m);
  if (!violations.empty()) throw ValidationError(std::move(violations));
  return m;
}

inline std::string save_model(const Lohmm& m) {
  const Signature& sig = m.signature();
  std::string out;
  for (std::size_t d = 0; d < sig.domain_count(); ++d) {
    out += "domain " + sig.domain_name(d) + " = ";
    const auto& cs = sig.constants(d);
    for (std::size_t i = 0; i < cs.size(); ++i) out += (i ? ", " : "") + cs[i];
    out += " .\n";
  }
  auto decl = [&](const char* kw, const PredicateKey& k) {
    out += std::string(kw) + " " + k.str();
    const auto& doms = *sig.arg_domains(k);
    for (std::size_t i = 0; i < doms.size(); ++i) out += (i ? ", " : " : ") + doms[i];
    out += " .\n";
  };
  for (const auto& k : sig.state_predicates()) decl("state", k);
  for (const auto& k : sig.obs_predicates()) decl("obs", k);
  for (std::size_t d = 0; d < sig.domain_count(); ++d) {
    out += "select " + sig.domain_name(d) + " : ";
    const auto& cs = sig.constants(d);
    for (std::size_t i = 0; i < cs.size(); ++i)
      out += (i ? ", " : "") + cs[i] + " " + format_double(m.selection().prob(d, i));
    out += " .\n";
  }
  for (const auto& t : m.transitions()) out += "trans " + format_double(t.prob) + " : " + format_clause(t) + " .\n";
  return out;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Lohmm load_model_file(const std::string& path) { return load_model(read_text_file(path)); }

}  // namespace lohmm
