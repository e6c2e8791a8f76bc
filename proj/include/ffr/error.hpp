#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ffr {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Syntax error in a Lagrangian source string.
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, std::size_t offset, std::vector<std::string> expected = {})
      : Error(msg + " at offset " + std::to_string(offset) + expected_suffix(expected)),
        offset_(offset),
        expected_(std::move(expected)) {}

  std::size_t offset() const { return offset_; }
  const std::vector<std::string>& expected() const { return expected_; }

 private:
  static std::string expected_suffix(const std::vector<std::string>& e) {
    if (e.empty()) return {};
    std::string s = " (expected one of:";
    for (const auto& t : e) s += " " + t;
    return s + ")";
  }
  std::size_t offset_;
  std::vector<std::string> expected_;
};

// A function argument outside its domain (log of a non-positive value, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Degenerate Hessian or d-metric block.
class RegularityError : public Error {
 public:
  using Error::Error;
};

// Non-finite values or a degenerating state during a computation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or command-line usage.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace ffr
