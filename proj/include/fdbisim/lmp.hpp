#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fdbisim/core.hpp"

namespace fdbisim::lmp {

inline constexpr double kMassTolerance = 1e-9;

/// Dense row-major square matrix of transition masses.
class Matrix {
 public:
  Matrix() = default;
  explicit Matrix(std::size_t n) : n_(n), data_(n * n, 0.0) {}

  std::size_t size() const { return n_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }
  double row_sum(std::size_t i) const;

  static Matrix identity(std::size_t n);
  friend Matrix operator*(const Matrix& a, const Matrix& b);
  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

/// Finite labelled Markov process with a sub-stochastic kernel. The missing
/// row mass is the probability of dying in one step.
class FiniteLMP {
 public:
  FiniteLMP(Matrix tau, std::vector<std::string> ap_names, std::vector<std::uint64_t> labels);

  std::size_t size() const { return tau_.size(); }
  const Matrix& tau() const { return tau_; }
  double tau(std::size_t x, std::size_t y) const { return tau_(x, y); }
  /// One-step mass from x into a set of states.
  double mass(std::size_t x, const std::vector<std::size_t>& set) const;
  double death_mass(std::size_t x) const;

  const std::vector<std::string>& ap_names() const { return ap_names_; }
  std::uint64_t label(std::size_t x) const { return labels_.at(x); }
  const std::vector<std::uint64_t>& labels() const { return labels_; }

  /// tau_k; tau_0 is the identity.
  Matrix power(std::size_t k) const;

  friend bool operator==(const FiniteLMP&, const FiniteLMP&) = default;

 private:
  Matrix tau_;
  std::vector<std::string> ap_names_;
  std::vector<std::uint64_t> labels_;
};

/// Disjoint union; states of b are shifted by a.size(). Propositions are
/// matched by name.
FiniteLMP disjoint_union(const FiniteLMP& a, const FiniteLMP& b);

/// Coarsest partition that respects labels and equalises the one-step mass
/// into every block.
FinitePartition dt_bisim_refine(const FiniteLMP& l);

/// Checks the two DT-bisimulation conditions for every related pair.
bool verify_dt_bisim(const FiniteLMP& l, const FinitePartition& p);

/// Iterated restricted product: mass of paths x -> A_1 -> ... -> A_n.
double n_step_product(const FiniteLMP& l, std::size_t x, const std::vector<std::vector<std::size_t>>& sets);

/// Quotient LMP of a DT-bisimulation; state i is block i.
FiniteLMP quotient(const FiniteLMP& l, const FinitePartition& p);

}  // namespace fdbisim::lmp
