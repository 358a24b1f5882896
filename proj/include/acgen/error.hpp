#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace acgen {

// Base for failures raised while generating or loading data. Precondition
// violations on arguments are reported with std::invalid_argument instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CycleError : public Error {
 public:
  using Error::Error;
};

// A random draw produced an unusable model (zero variance, a selection node
// that ignores one of its parents, ...). Callers re-draw with a new attempt.
class DegenerateDrawError : public Error {
 public:
  using Error::Error;
};

class InsufficientTriplesError : public Error {
 public:
  InsufficientTriplesError(std::size_t requested, std::size_t achieved)
      : Error("cannot host " + std::to_string(requested) +
              " node-disjoint unfaithful triples; achievable: " +
              std::to_string(achieved)),
        requested_(requested),
        achieved_(achieved) {}
  std::size_t requested() const { return requested_; }
  std::size_t achieved() const { return achieved_; }

 private:
  std::size_t requested_;
  std::size_t achieved_;
};

class OversamplingError : public Error {
 public:
  using Error::Error;
};

// Load-time invariant failure; check() names the failing check.
class BundleError : public Error {
 public:
  BundleError(std::string check, const std::string& message)
      : Error(check + ": " + message), check_(std::move(check)) {}
  const std::string& check() const { return check_; }

 private:
  std::string check_;
};

}  // namespace acgen
