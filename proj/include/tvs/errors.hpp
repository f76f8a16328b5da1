#pragma once

#include <stdexcept>
#include <string>

namespace tvs {

// Bad configuration or malformed input. Maps to CLI exit code 1.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Failure while executing a scan (lost target, step budget exceeded,
// probe driven off the reachable surface). Maps to CLI exit code 2.
class ScanError : public std::runtime_error {
 public:
  explicit ScanError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tvs
