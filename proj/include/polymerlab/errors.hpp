#pragma once

#include <stdexcept>
#include <string>

namespace polymerlab {

// A grid-backend query fell outside [-L, L]^d; the caller must enlarge L.
class OutOfDomainError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// A covariance matrix stayed non-positive-definite after jitter, or a
// circulant embedding clipped too much spectral mass.
class ConditioningError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An environment replica failed; carries the replica index.
class ReplicaError : public std::runtime_error {
 public:
  ReplicaError(std::size_t replica, const std::string& what)
      : std::runtime_error("replica " + std::to_string(replica) + ": " + what),
        replica_(replica) {}
  std::size_t replica() const { return replica_; }

 private:
  std::size_t replica_;
};

}  // namespace polymerlab
