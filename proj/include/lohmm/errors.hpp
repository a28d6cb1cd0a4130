#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lohmm {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed atom, model or corpus text. `position()` is a byte offset into
/// the parsed text, `line()` is 1-based (0 when unknown).
class SyntaxError : public Error {
 public:
  SyntaxError(const std::string& what, std::size_t position, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what
                   : "offset " + std::to_string(position) + ": " + what),
        position_(position),
        line_(line) {}

  std::size_t position() const noexcept { return position_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t position_;
  std::size_t line_;
};

/// A file that cannot be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

class UndeclaredPredicate : public Error {
 public:
  using Error::Error;
};

class SharedVariableConflict : public Error {
 public:
  using Error::Error;
};

class DomainMismatch : public Error {
 public:
  using Error::Error;
};

class NoMatchingBody : public Error {
 public:
  using Error::Error;
};

class ZeroLikelihoodSequence : public Error {
 public:
  explicit ZeroLikelihoodSequence(std::size_t index)
      : Error("sequence " + std::to_string(index) + " has zero likelihood"), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// A positive expected count whose ground transition has no probability mass
/// under the candidate structure/parameters.
class IncompatibleCounts : public Error {
 public:
  using Error::Error;
};

class AllZeroLikelihood : public Error {
 public:
  using Error::Error;
};

}  // namespace lohmm
