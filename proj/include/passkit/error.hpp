#pragma once

#include <stdexcept>
#include <string>

namespace passkit {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed document (bad JSON, wrong field types, missing fields).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Well-formed document that violates the operator/attribute schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class CycleError : public Error {
 public:
  using Error::Error;
};

// Shape or dtype rule violation found during inference.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Failure while executing a graph.
class RuntimeFault : public Error {
 public:
  using Error::Error;
};

// A primitive outside the runtime whitelist was dispatched inside a fused kernel.
class WhitelistViolation : public RuntimeFault {
 public:
  WhitelistViolation(const std::string& op, const std::string& kernel)
      : RuntimeFault("whitelist violation: '" + op + "' dispatched inside '" + kernel + "'"),
        op_(op) {}
  const std::string& op() const { return op_; }

 private:
  std::string op_;
};

// Rewrite produced an invalid graph (cycle, dangling edge, changed interface).
class RewriteError : public Error {
 public:
  using Error::Error;
};

}  // namespace passkit
