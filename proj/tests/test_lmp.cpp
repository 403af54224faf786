#include <random>

#include "doctest.h"
#include "fdbisim/lmp.hpp"
#include "support.hpp"

using namespace fdbisim;
using namespace fdbisim::lmp;

namespace {

FiniteLMP make(std::vector<std::vector<double>> rows, std::vector<std::uint64_t> labels) {
  Matrix tau(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.size(); ++j) tau(i, j) = rows[i][j];
  return FiniteLMP(std::move(tau), {"P", "Q"}, std::move(labels));
}

}  // namespace

TEST_CASE("validation rejects bad kernels") {
  CHECK_THROWS_AS(make({{0.7, 0.7}, {0.0, 1.0}}, {0, 0}), DomainError);
  CHECK_THROWS_AS(make({{-0.1, 0.5}, {0.0, 1.0}}, {0, 0}), DomainError);
  CHECK_NOTHROW(make({{0.5, 0.25}, {0.0, 0.0}}, {0, 0}));
}

TEST_CASE("partition refinement on small hand examples") {
  CHECK(dt_bisim_refine(make({{0.5, 0.5}, {0.5, 0.5}}, {1, 1})).block_count() == 1);
  const auto chain = make({{0, 1, 0}, {0, 0, 1}, {0, 0, 1}}, {0, 1, 2});
  CHECK(dt_bisim_refine(chain) == FinitePartition::identity(3));
  // Same labels, but only state 0 can die.
  const auto leaky = make({{0, 0.5, 0}, {0, 1, 0}, {0, 0, 1}}, {0, 0, 0});
  CHECK(dt_bisim_refine(leaky) == FinitePartition(3, {{0}, {1, 2}}));
}

TEST_CASE("the brute-force oracle enumerates every partition") {
  CHECK(testsupport::bell_number(6) == 203);
  CHECK(testsupport::bell_number(4) == 15);
}

TEST_CASE("refinement matches the exhaustive oracle on random LMPs") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 2 + trial % 5;
    const auto l = testsupport::random_lmp(rng, n, trial % 3 != 0);
    bool unique_top = false;
    const auto oracle = testsupport::brute_force_greatest(l, &unique_top);
    CHECK(unique_top);
    const auto refined = dt_bisim_refine(l);
    CHECK(refined == oracle);
    CHECK(verify_dt_bisim(l, refined));
    // Coarsest: merging any two blocks breaks the conditions.
    const auto blocks = refined.blocks();
    for (std::size_t a = 0; a < blocks.size(); ++a)
      for (std::size_t b = a + 1; b < blocks.size(); ++b) {
        auto labels = refined.labels();
        for (auto& lab : labels)
          if (lab == b) lab = a;
        CHECK_FALSE(verify_dt_bisim(l, FinitePartition::from_labels(labels)));
      }
  }
}

TEST_CASE("refinement is idempotent on the quotient") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    const auto l = testsupport::random_lmp(rng, 5, true);
    const auto p = dt_bisim_refine(l);
    const auto q = quotient(l, p);
    CHECK(dt_bisim_refine(q) == FinitePartition::identity(q.size()));
  }
}

TEST_CASE("identity is always a DT-bisimulation and refine output is coarser than any") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto l = testsupport::random_lmp(rng, 4, true);
    CHECK(verify_dt_bisim(l, FinitePartition::identity(4)));
    const auto top = dt_bisim_refine(l);
    testsupport::for_each_partition(4, [&](const std::vector<std::size_t>& rgs) {
      const auto p = FinitePartition::from_labels(rgs);
      if (verify_dt_bisim(l, p)) CHECK(p.refines(top));
    });
  }
}

TEST_CASE("n-step products") {
  const auto l = make({{0.25, 0.5}, {0.0, 0.75}}, {0, 0});
  CHECK(n_step_product(l, 0, {{0, 1}}) == doctest::Approx(0.75));
  const auto ident = make({{1, 0}, {0, 1}}, {0, 0});
  CHECK(n_step_product(ident, 0, {{0}, {0}}) == 1.0);
  CHECK(n_step_product(l, 0, {{1}, {1}}) == doctest::Approx(0.5 * 0.75));
  CHECK_THROWS_AS(n_step_product(l, 0, {}), PreconditionError);
}

TEST_CASE("n-step products agree across related states for closed set sequences") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const auto l = testsupport::random_lmp(rng, 4, true);
    const auto p = dt_bisim_refine(l);
    const auto sets = testsupport::closed_sets(p);
    for (std::size_t a = 0; a < sets.size(); ++a)
      for (std::size_t b = 0; b < sets.size(); ++b)
        for (std::size_t x = 0; x < 4; ++x)
          for (std::size_t y = 0; y < 4; ++y)
            if (p.related(x, y))
              CHECK(std::fabs(n_step_product(l, x, {sets[a], sets[b]}) - n_step_product(l, y, {sets[a], sets[b]})) <
                    1e-9);
  }
}

TEST_CASE("matrix powers and disjoint unions") {
  const auto l = make({{0, 1}, {0, 1}}, {0, 1});
  CHECK(l.power(0) == Matrix::identity(2));
  const auto p2 = l.power(2);
  CHECK(p2(0, 1) == 1.0);
  CHECK(p2(0, 0) == 0.0);
  const auto u = disjoint_union(l, l);
  CHECK(u.size() == 4);
  CHECK(u.tau(2, 3) == 1.0);
  CHECK(u.tau(0, 3) == 0.0);
  CHECK(dt_bisim_refine(u) == FinitePartition(4, {{0, 2}, {1, 3}}));
}
