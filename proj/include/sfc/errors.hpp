#pragma once

#include <stdexcept>
#include <string>

namespace sfc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument is outside its documented domain.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Raw rate parameters carry no information (e.g. all zeros).
class DegenerateParameterError : public ParameterError {
 public:
  using ParameterError::ParameterError;
};

/// The requested plan or allocation has no feasible solution.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// An exhaustive routine was asked for a problem that is too large.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// A physical link cannot carry the signal (zero gain or zero power).
class DegenerateLinkError : public Error {
 public:
  using Error::Error;
};

/// Iterative training diverged.
class TrainingFailure : public Error {
 public:
  TrainingFailure(const std::string& what, std::string trace)
      : Error(what), trace_(std::move(trace)) {}
  const std::string& trace() const noexcept { return trace_; }

 private:
  std::string trace_;
};

namespace detail {

inline void require(bool ok, const std::string& message) {
  if (!ok) throw ParameterError(message);
}

}  // namespace detail
}  // namespace sfc
