#pragma once

#include <stdexcept>
#include <string>

namespace dcnav {

// Base class for every failure raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor dimension mismatch at an op boundary.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf detected at an op boundary.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Degenerate (near-zero) norm where a unit vector is required.
class NormError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

// Navigation-graph invariant violations (disconnected graph, bad edge, ...).
class GraphError : public Error {
 public:
  using Error::Error;
};

// Agent pose no longer consistent with the ground-truth path.
class OracleDesyncError : public Error {
 public:
  using Error::Error;
};

// Instruction reduced to zero tokens after stopword filtering.
class EmptyInstructionError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace dcnav
