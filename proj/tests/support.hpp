#pragma once

// Test-side oracles: exhaustive partition enumeration, an independent
// bisimulation check, and a generator of random LMPs with planted symmetry.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "fdbisim/lmp.hpp"

namespace testsupport {

using fdbisim::FinitePartition;
using fdbisim::lmp::FiniteLMP;
using fdbisim::lmp::Matrix;

/// Calls fn with every set partition of {0..n-1} as a restricted growth string.
inline void for_each_partition(std::size_t n, const std::function<void(const std::vector<std::size_t>&)>& fn) {
  std::vector<std::size_t> rgs(n, 0);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t max_label) {
    if (i == n) {
      fn(rgs);
      return;
    }
    for (std::size_t l = 0; l <= max_label + 1; ++l) {
      rgs[i] = l;
      rec(i + 1, std::max(max_label, l));
    }
  };
  if (n == 0) return;
  rgs[0] = 0;
  rec(1, 0);
}

inline std::size_t bell_number(std::size_t n) {
  std::size_t count = 0;
  for_each_partition(n, [&](const std::vector<std::size_t>&) { ++count; });
  return count;
}

/// Direct check of the DT-bisimulation conditions from labels and raw rows.
inline bool is_dt_bisimulation(const FiniteLMP& l, const std::vector<std::size_t>& block) {
  const std::size_t n = l.size();
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t y = x + 1; y < n; ++y) {
      if (block[x] != block[y]) continue;
      if (l.label(x) != l.label(y)) return false;
      const std::size_t nb = *std::max_element(block.begin(), block.end()) + 1;
      for (std::size_t b = 0; b < nb; ++b) {
        double mx = 0.0, my = 0.0;
        for (std::size_t z = 0; z < n; ++z)
          if (block[z] == b) {
            mx += l.tau(x, z);
            my += l.tau(y, z);
          }
        if (std::fabs(mx - my) > 1e-9) return false;
      }
    }
  return true;
}

/// Greatest DT-bisimulation by exhaustive search: the bisimulation with the
/// fewest blocks, checked to be coarser than every other bisimulation.
inline FinitePartition brute_force_greatest(const FiniteLMP& l, bool* unique_top = nullptr) {
  std::vector<std::vector<std::size_t>> all;
  for_each_partition(l.size(), [&](const std::vector<std::size_t>& rgs) {
    if (is_dt_bisimulation(l, rgs)) all.push_back(rgs);
  });
  auto count_blocks = [](const std::vector<std::size_t>& r) { return *std::max_element(r.begin(), r.end()) + 1; };
  const auto best = *std::min_element(all.begin(), all.end(), [&](const auto& a, const auto& b) {
    return count_blocks(a) < count_blocks(b);
  });
  const FinitePartition top = FinitePartition::from_labels(best);
  if (unique_top) {
    *unique_top = std::all_of(all.begin(), all.end(),
                              [&](const auto& r) { return FinitePartition::from_labels(r).refines(top); });
  }
  return top;
}

/// Random LMP with dyadic masses. With `planted`, states are grouped into
/// hidden classes that share labels and block masses, so nontrivial
/// bisimulations exist; otherwise every row is independent.
inline FiniteLMP random_lmp(std::mt19937_64& rng, std::size_t n, bool planted, std::size_t n_props = 2) {
  constexpr int kUnits = 16;  // masses are multiples of 1/16
  std::uniform_int_distribution<std::size_t> pick_class(0, n - 1);
  std::vector<std::size_t> cls(n);
  std::size_t n_classes = n;
  if (planted) {
    n_classes = std::uniform_int_distribution<std::size_t>(1, n)(rng);
    for (std::size_t x = 0; x < n; ++x) cls[x] = x < n_classes ? x : pick_class(rng) % n_classes;
    std::shuffle(cls.begin(), cls.end(), rng);
  } else {
    for (std::size_t x = 0; x < n; ++x) cls[x] = x;
  }
  std::vector<std::vector<std::size_t>> members(n_classes);
  for (std::size_t x = 0; x < n; ++x) members[cls[x]].push_back(x);

  std::uniform_int_distribution<std::uint64_t> pick_label(0, (std::uint64_t{1} << n_props) - 1);
  std::vector<std::uint64_t> class_label(n_classes);
  for (auto& lab : class_label) lab = pick_label(rng);

  // Class-level masses in units, summing to at most kUnits.
  std::vector<std::vector<int>> class_mass(n_classes, std::vector<int>(n_classes, 0));
  for (auto& row : class_mass) {
    int total = std::uniform_int_distribution<int>(0, 4)(rng) == 0 ? kUnits - 4 : kUnits;
    std::uniform_int_distribution<std::size_t> pick(0, n_classes - 1);
    while (total-- > 0) ++row[pick(rng)];
  }

  Matrix tau(n);
  std::vector<std::uint64_t> labels(n);
  for (std::size_t x = 0; x < n; ++x) {
    labels[x] = class_label[cls[x]];
    for (std::size_t c = 0; c < n_classes; ++c) {
      int units = class_mass[cls[x]][c];
      std::uniform_int_distribution<std::size_t> pick(0, members[c].size() - 1);
      while (units-- > 0) tau(x, members[c][pick(rng)]) += 1.0 / kUnits;
    }
  }
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n_props; ++i) names.push_back(std::string(1, static_cast<char>('P' + i)));
  return FiniteLMP(std::move(tau), std::move(names), std::move(labels));
}

/// All subsets of {0..n-1} that are unions of blocks of p.
inline std::vector<std::vector<std::size_t>> closed_sets(const FinitePartition& p) {
  const auto blocks = p.blocks();
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t mask = 0; mask < (std::size_t{1} << blocks.size()); ++mask) {
    std::vector<std::size_t> s;
    for (std::size_t b = 0; b < blocks.size(); ++b)
      if ((mask >> b) & 1U) s.insert(s.end(), blocks[b].begin(), blocks[b].end());
    std::sort(s.begin(), s.end());
    out.push_back(std::move(s));
  }
  return out;
}

/// Quotients of l by each of its DT-bisimulations with at most max_states
/// blocks, found by exhaustive search.
inline std::vector<FiniteLMP> small_quotients(const FiniteLMP& l, std::size_t max_states) {
  std::vector<FiniteLMP> out;
  for_each_partition(l.size(), [&](const std::vector<std::size_t>& rgs) {
    if (*std::max_element(rgs.begin(), rgs.end()) + 1 > max_states || !is_dt_bisimulation(l, rgs)) return;
    const auto p = FinitePartition::from_labels(rgs);
    const auto blocks = p.blocks();
    Matrix tau(blocks.size());
    std::vector<std::uint64_t> labels(blocks.size());
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      labels[b] = l.label(blocks[b][0]);
      for (std::size_t z = 0; z < l.size(); ++z) tau(b, p.block_of(z)) += l.tau(blocks[b][0], z);
    }
    out.emplace_back(std::move(tau), l.ap_names(), std::move(labels));
  });
  return out;
}

}  // namespace testsupport
