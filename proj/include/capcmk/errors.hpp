#pragma once

#include <stdexcept>
#include <string>

namespace capcmk {

// Input data fails a hard precondition (non-positive f, inconsistent grid, ...).
class InvalidDataError : public std::runtime_error {
public:
  explicit InvalidDataError(const std::string& what) : std::runtime_error(what) {}
};

// The operator left its ellipticity cone at some node.
class EllipticityLostError : public std::runtime_error {
public:
  EllipticityLostError(const std::string& what, int node) : std::runtime_error(what), node_(node) {}
  int node() const { return node_; }

private:
  int node_;
};

// Homotopy step size hit the floor before reaching t = 1.
class ContinuationStuckError : public std::runtime_error {
public:
  ContinuationStuckError(const std::string& what, double t_reached)
      : std::runtime_error(what), t_reached_(t_reached) {}
  double t_reached() const { return t_reached_; }

private:
  double t_reached_;
};

} // namespace capcmk
