#pragma once

#include <stdexcept>
#include <string>

namespace lassode {

/// A simulated or integrated state left the finite range.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or missing files on disk (manifests, CSVs, checkpoints).
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lassode
