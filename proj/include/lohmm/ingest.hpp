#pragma once

// Shell-log ingestion. A log holds sessions separated by blank lines, one
// whitespace-tokenized command per line. `cmd a1 ... an` becomes the atom
// cmd(a1, ..., a_min(n,K)) with tokens mapped to identifiers.
//
// The generated signature has a domain `cmd` of command names, a domain
// `arg` of arguments (when any), one observation predicate per command and
// arity, and a single hidden predicate hid/1 : cmd standing for the
// previous command.

#include <cctype>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lohmm/corpus.hpp"
#include "lohmm/logic.hpp"

namespace lohmm {

/// Non-identifier characters become `_`; the result starts with a lowercase
/// letter (an uppercase first letter is lowered, anything else gets an `x`).
inline std::string sanitize_token(std::string_view tok) {
  std::string out;
  for (char c : tok) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '_') ? c : '_';
  if (out.empty()) return "x";
  unsigned char first = static_cast<unsigned char>(out.front());
  if (std::isupper(first))
    out.front() = static_cast<char>(std::tolower(first));
  else if (!std::islower(first))
    out.insert(out.begin(), 'x');
  return out;
}

struct IngestResult {
  std::vector<Sequence> sessions;
  std::size_t empty_sessions = 0;
  Signature signature;
  std::string signature_text;
};

inline IngestResult ingest_shell_log(std::string_view text, std::size_t max_args) {
  IngestResult out;
  // A block is a maximal run of non-blank lines; `#` lines are comments,
  // and a block holding nothing else is an empty session.
  std::vector<std::vector<std::vector<std::string>>> kept;
  std::vector<std::vector<std::string>> block;
  bool in_block = false;
  auto close = [&] {
    if (!in_block) return;
    if (block.empty())
      ++out.empty_sessions;
    else
      kept.push_back(std::move(block));
    block.clear();
    in_block = false;
  };
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream words(line);
    std::vector<std::string> raw;
    for (std::string w; words >> w;) raw.push_back(w);
    if (raw.empty()) {
      close();
      continue;
    }
    in_block = true;
    if (raw.front().front() == '#') continue;
    std::vector<std::string> toks;
    for (const auto& w : raw) toks.push_back(sanitize_token(w));
    if (toks.front() == "start") toks.front() = "xstart";  // start/0 is reserved
    block.push_back(std::move(toks));
  }
  close();

  std::vector<std::string> cmds;
  std::vector<std::string> args;
  std::set<std::string> seen_cmd, seen_arg;
  std::vector<PredicateKey> obs;
  std::set<PredicateKey> seen_obs;
  for (const auto& s : kept) {
    Sequence seq;
    for (const auto& toks : s) {
      std::vector<Term> a;
      for (std::size_t i = 1; i < toks.size() && a.size() < max_args; ++i) {
        a.push_back(Term::constant(toks[i]));
        if (seen_arg.insert(toks[i]).second) args.push_back(toks[i]);
      }
      if (seen_cmd.insert(toks[0]).second) cmds.push_back(toks[0]);
      PredicateKey k{toks[0], a.size()};
      if (seen_obs.insert(k).second) obs.push_back(k);
      seq.emplace_back(toks[0], std::move(a));
    }
    out.sessions.push_back(std::move(seq));
  }

  std::string sig;
  if (!cmds.empty()) {
    sig += "domain cmd = ";
    for (std::size_t i = 0; i < cmds.size(); ++i) sig += (i ? ", " : "") + cmds[i];
    sig += " .\n";
  }
  if (!args.empty()) {
    sig += "domain arg = ";
    for (std::size_t i = 0; i < args.size(); ++i) sig += (i ? ", " : "") + args[i];
    sig += " .\n";
  }
  sig += "state start/0 .\n";
  if (!cmds.empty()) sig += "state hid/1 : cmd .\n";
  for (const auto& k : obs) {
    sig += "obs " + k.str();
    for (std::size_t i = 0; i < k.arity; ++i) sig += i ? ", arg" : " : arg";
    sig += " .\n";
  }
  out.signature_text = std::move(sig);
  Signature parsed;
  if (!cmds.empty()) parsed.add_domain("cmd", cmds);
  if (!args.empty()) parsed.add_domain("arg", args);
  if (!cmds.empty()) parsed.add_state({"hid", 1}, {"cmd"});
  for (const auto& k : obs) parsed.add_obs(k, std::vector<std::string>(k.arity, "arg"));
  out.signature = std::move(parsed);
  return out;
}

}  // namespace lohmm
