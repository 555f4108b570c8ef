#pragma once

#include <stdexcept>
#include <string>

namespace qnmc {

/// Input outside an operation's domain (bad length, bad index, bad arguments).
using InvalidArgument = std::invalid_argument;

/// Requested problem is too large for an exact (enumerating) routine.
class ResourceLimitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A computed object violates an invariant it must satisfy by construction,
/// e.g. a transition matrix that is not reversible.
class InconsistencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UndefinedAutocorrelation : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Config schema violation; `path` names the offending field (e.g. "made.epochs").
class ValidationError : public std::runtime_error {
 public:
  ValidationError(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace qnmc
