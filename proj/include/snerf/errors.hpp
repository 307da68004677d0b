#pragma once

#include <stdexcept>
#include <string>

namespace snerf {

/// NaN/Inf encountered while rendering or training.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad or inconsistent configuration (unknown keys, invalid values).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A required input file (assets, checkpoint, flow) is absent or unreadable.
class MissingAssetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint or file contents incompatible with what the caller expects.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace snerf
