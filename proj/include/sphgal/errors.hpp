#pragma once

#include <stdexcept>
#include <string>

namespace sphgal {

/// Malformed input file (message carries the line number).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

/// Structurally valid input with unusable values (non-finite, duplicate points).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// A point configuration made a kernel system singular or unsolvable.
class DegenerateGeometryError : public std::runtime_error {
 public:
  explicit DegenerateGeometryError(const std::string& what) : std::runtime_error(what) {}
};

/// Stiffness solve failed; the system is not (numerically) positive definite.
class NotPositiveDefiniteError : public std::runtime_error {
 public:
  explicit NotPositiveDefiniteError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sphgal
