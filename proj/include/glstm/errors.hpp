#pragma once

#include <stdexcept>
#include <string>

namespace glstm {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Malformed document, graph or mention.
class GraphError : public Error {
 public:
  using Error::Error;
};

// Two mentions live in disconnected components of the dependency graph.
class NoPathError : public GraphError {
 public:
  using GraphError::GraphError;
};

// Unreadable or malformed input file. Carries the offending line when known.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace glstm
