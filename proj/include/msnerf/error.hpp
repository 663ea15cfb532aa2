#pragma once

#include <stdexcept>
#include <string>

namespace msnerf {

// Malformed or missing on-disk input (manifest, images, checkpoints, configs).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss or parameter.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace msnerf
