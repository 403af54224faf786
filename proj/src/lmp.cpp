#include "fdbisim/lmp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace fdbisim::lmp {

double Matrix::row_sum(std::size_t i) const {
  double s = 0.0;
  for (std::size_t j = 0; j < n_; ++j) s += (*this)(i, j);
  return s;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
  const std::size_t n = a.size();
  Matrix c(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

FiniteLMP::FiniteLMP(Matrix tau, std::vector<std::string> ap_names, std::vector<std::uint64_t> labels)
    : tau_(std::move(tau)), ap_names_(std::move(ap_names)), labels_(std::move(labels)) {
  const std::size_t n = tau_.size();
  if (n == 0) throw DomainError("an LMP needs at least one state");
  if (labels_.size() != n) throw DomainError("one label vector per state");
  if (ap_names_.size() > 64) throw DomainError("at most 64 atomic propositions");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = tau_(i, j);
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
        std::ostringstream os;
        os << "tau(" << i << "," << j << ") = " << v << " is not in [0,1]";
        throw DomainError(os.str());
      }
    }
    if (tau_.row_sum(i) > 1.0 + 1e-12) {
      std::ostringstream os;
      os << "row mass " << tau_.row_sum(i) << " > 1 at state " << i;
      throw DomainError(os.str());
    }
  }
}

double FiniteLMP::mass(std::size_t x, const std::vector<std::size_t>& set) const {
  double s = 0.0;
  for (std::size_t y : set) s += tau_(x, y);
  return s;
}

double FiniteLMP::death_mass(std::size_t x) const { return std::max(0.0, 1.0 - tau_.row_sum(x)); }

Matrix FiniteLMP::power(std::size_t k) const {
  Matrix result = Matrix::identity(size());
  Matrix base = tau_;
  while (k > 0) {
    if (k & 1U) result = result * base;
    k >>= 1U;
    if (k) base = base * base;
  }
  return result;
}

FiniteLMP disjoint_union(const FiniteLMP& a, const FiniteLMP& b) {
  std::vector<std::string> names = a.ap_names();
  std::vector<std::size_t> b_to_union(b.ap_names().size());
  for (std::size_t i = 0; i < b.ap_names().size(); ++i) {
    auto it = std::find(names.begin(), names.end(), b.ap_names()[i]);
    if (it == names.end()) {
      names.push_back(b.ap_names()[i]);
      it = names.end() - 1;
    }
    b_to_union[i] = static_cast<std::size_t>(it - names.begin());
  }
  const std::size_t na = a.size();
  const std::size_t n = na + b.size();
  Matrix tau(n);
  std::vector<std::uint64_t> labels(n, 0);
  for (std::size_t i = 0; i < na; ++i) {
    labels[i] = a.label(i);
    for (std::size_t j = 0; j < na; ++j) tau(i, j) = a.tau(i, j);
  }
  for (std::size_t i = 0; i < b.size(); ++i) {
    std::uint64_t bits = 0;
    for (std::size_t p = 0; p < b_to_union.size(); ++p)
      if ((b.label(i) >> p) & 1U) bits |= std::uint64_t{1} << b_to_union[p];
    labels[na + i] = bits;
    for (std::size_t j = 0; j < b.size(); ++j) tau(na + i, na + j) = b.tau(i, j);
  }
  return FiniteLMP(std::move(tau), std::move(names), std::move(labels));
}

namespace {

std::int64_t quantize(double v) { return std::llround(v / kMassTolerance); }

}  // namespace

FinitePartition dt_bisim_refine(const FiniteLMP& l) {
  const std::size_t n = l.size();
  std::vector<std::size_t> block(n);
  {
    std::map<std::uint64_t, std::size_t> by_label;
    for (std::size_t x = 0; x < n; ++x) block[x] = by_label.emplace(l.label(x), by_label.size()).first->second;
  }
  std::size_t n_blocks = *std::max_element(block.begin(), block.end()) + 1;
  // Each round either splits a block or reaches the fixpoint, so at most n-1
  // productive rounds happen.
  for (std::size_t round = 0; round < n; ++round) {
    std::map<std::vector<std::int64_t>, std::size_t> by_signature;
    std::vector<std::size_t> next(n);
    for (std::size_t x = 0; x < n; ++x) {
      std::vector<double> into(n_blocks, 0.0);
      for (std::size_t y = 0; y < n; ++y) into[block[y]] += l.tau(x, y);
      std::vector<std::int64_t> sig;
      sig.reserve(n_blocks + 1);
      sig.push_back(static_cast<std::int64_t>(block[x]));
      for (double m : into) sig.push_back(quantize(m));
      next[x] = by_signature.emplace(std::move(sig), by_signature.size()).first->second;
    }
    const std::size_t next_blocks = by_signature.size();
    block = std::move(next);
    if (next_blocks == n_blocks) break;
    n_blocks = next_blocks;
  }
  return FinitePartition::from_labels(block);
}

bool verify_dt_bisim(const FiniteLMP& l, const FinitePartition& p) {
  if (p.size() != l.size()) return false;
  const auto blocks = p.blocks();
  for (const auto& blk : blocks) {
    const std::size_t rep = blk.front();
    for (std::size_t x : blk) {
      if (l.label(x) != l.label(rep)) return false;
      for (const auto& target : blocks)
        if (std::fabs(l.mass(x, target) - l.mass(rep, target)) > kMassTolerance) return false;
    }
  }
  return true;
}

double n_step_product(const FiniteLMP& l, std::size_t x, const std::vector<std::vector<std::size_t>>& sets) {
  if (sets.empty()) throw PreconditionError("n_step_product needs at least one set");
  const std::size_t n = l.size();
  std::vector<double> v(n, 0.0);
  v.at(x) = 1.0;
  for (const auto& a : sets) {
    std::vector<bool> in(n, false);
    for (std::size_t y : a) in.at(y) = true;
    std::vector<double> w(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (v[i] == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j)
        if (in[j]) w[j] += v[i] * l.tau(i, j);
    }
    v = std::move(w);
  }
  double s = 0.0;
  for (double m : v) s += m;
  return s;
}

FiniteLMP quotient(const FiniteLMP& l, const FinitePartition& p) {
  if (!verify_dt_bisim(l, p)) throw PreconditionError("quotient needs a DT-bisimulation");
  const auto blocks = p.blocks();
  Matrix tau(blocks.size());
  std::vector<std::uint64_t> labels(blocks.size());
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    labels[b] = l.label(blocks[b].front());
    for (std::size_t c = 0; c < blocks.size(); ++c) tau(b, c) = l.mass(blocks[b].front(), blocks[c]);
  }
  return FiniteLMP(std::move(tau), l.ap_names(), std::move(labels));
}

}  // namespace fdbisim::lmp
