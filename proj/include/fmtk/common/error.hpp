#pragma once

#include <stdexcept>
#include <string>

namespace fmtk {

// Command-line / configuration misuse. Maps to exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid data or failed validation (bad manifests, shape mismatches,
// out-of-range labels, unreadable files). Maps to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fmtk
