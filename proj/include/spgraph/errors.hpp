#pragma once

#include <stdexcept>
#include <string>

namespace spgraph {

// Precondition violated by the caller (bad shape, size below minimum, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A loss or intermediate became NaN/Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingFile : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed JSON, raster size mismatch, unreadable PNG.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegeneratePolygon : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UndefinedMetric : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace spgraph
