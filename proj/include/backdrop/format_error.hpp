#pragma once

#include <stdexcept>

namespace backdrop {

// Malformed or unreadable data files (datasets, checkpoints).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace backdrop
