#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stereoagg {

// Broken API precondition: wrong shapes, axis out of range, backward on a
// non-scalar.
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& what)
      : std::logic_error("contract violation: " + what) {}
};

// Invalid or inconsistent configuration supplied by the user.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what)
      : std::runtime_error("config error: " + what) {}
};

// A forward op produced NaN or Inf.
class NumericFault : public std::runtime_error {
 public:
  explicit NumericFault(const std::string& op)
      : std::runtime_error("numeric fault in " + op), op_(op) {}
  const std::string& op() const { return op_; }

 private:
  std::string op_;
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what)
      : std::runtime_error("io error: " + what) {}
};

// Malformed file contents; offset is the byte position of the problem.
class ParseError : public IoError {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : IoError(what + " at byte " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace stereoagg
