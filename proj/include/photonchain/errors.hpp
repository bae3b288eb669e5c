#pragma once

#include <stdexcept>
#include <string>

namespace photonchain {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Time grid too coarse for the requested mode shape.
class ResolutionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Regressors are linearly dependent.
class SingularityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Undefined derived quantity (e.g. g2 of a state with no photons).
class UndefinedValueError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyDatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data unusable (non-finite values, inconsistent units, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Photon and control set lists do not pair up.
class PairingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative method hit its iteration cap. Derived classes carry the
/// best-so-far state.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Config schema violation. `path()` is the dotted field path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace photonchain
