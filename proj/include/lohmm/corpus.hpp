#pragma once

// Sequence corpus: one data case per line, ground atoms separated by
// top-level commas, blank lines and `#` comments ignored.

#include <string>
#include <string_view>
#include <vector>

#include "lohmm/errors.hpp"
#include "lohmm/logic.hpp"

namespace lohmm {

using Sequence = std::vector<Atom>;

struct Corpus {
  std::vector<Sequence> sequences;
  std::vector<std::size_t> lines;  // 1-based source line of each sequence
};

inline Sequence parse_sequence(std::string_view line, std::size_t line_no = 0) {
  Cursor in(line);
  in.set_line(line_no);
  VariableScope scope;
  Sequence seq;
  if (in.at_end()) return seq;
  do {
    Atom a = parse_atom(in, scope);
    if (!is_ground(a)) in.fail("observation " + format_atom(a) + " is not ground");
    seq.push_back(std::move(a));
  } while (in.consume(","));
  if (!in.at_end()) in.fail("expected ',' between atoms");
  return seq;
}

/// Parses a corpus; when `sig` is given every atom must be a declared,
/// well-typed observation (errors name the offending line).
inline Corpus parse_corpus(std::string_view text, const Signature* sig = nullptr) {
  Corpus out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    bool blank = line.find_first_not_of(" \t\r") == std::string_view::npos;
    if (!blank) {
      Sequence seq = parse_sequence(line, line_no);
      if (sig) {
        for (const Atom& a : seq) {
          if (!sig->is_obs(key_of(a)))
            throw SyntaxError("undeclared observation predicate " + key_of(a).str(), 0, line_no);
          if (!well_typed_ground(a, *sig))
            throw SyntaxError("observation " + format_atom(a) + " violates its declared domains", 0, line_no);
        }
      }
      out.sequences.push_back(std::move(seq));
      out.lines.push_back(line_no);
    }
    if (end == text.size()) break;
    start = end + 1;
  }
  return out;
}

inline std::string format_sequence(const Sequence& seq) {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i) out += ", ";
    out += format_atom(seq[i]);
  }
  return out;
}

inline std::string format_corpus(const std::vector<Sequence>& seqs) {
  std::string out;
  for (const auto& s : seqs) out += format_sequence(s) + "\n";
  return out;
}

}  // namespace lohmm
