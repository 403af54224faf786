#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "fdbisim/core.hpp"

using namespace fdbisim;

namespace {

Trajectory drift_path(double x, double a, double step, double horizon) {
  Trajectory tr;
  tr.grid_step = step;
  for (std::size_t i = 0; static_cast<double>(i) * step <= horizon + 1e-12; ++i) {
    tr.sample_times.push_back(static_cast<double>(i) * step);
    tr.values.push_back(x + a * static_cast<double>(i) * step);
  }
  return tr;
}

SymmetryGroup reflection_group() {
  return SymmetryGroup::isometries(StateSpace{}, {Generator::reflect_about(0.0)}, "reflect 0");
}

SymmetryGroup integer_translations() {
  return SymmetryGroup::isometries(StateSpace{}, {Generator::translate(1.0), Generator::translate(-1.0)}, "translate 1");
}

}  // namespace

TEST_CASE("trajectory value follows the step interpolation") {
  Trajectory constant;
  constant.grid_step = 0.5;
  constant.sample_times = {0.0, 0.5, 1.0};
  constant.values = {2.0, 2.0, 2.0};
  CHECK(std::get<double>(trajectory_value(constant, 0.7).state) == 2.0);

  Trajectory dies;
  dies.grid_step = 1.0;
  dies.sample_times = {0.0, 1.0, 2.0};
  dies.values = {1.0, 0.5, Cemetery{}};
  CHECK(trajectory_well_formed(dies));
  CHECK(is_cemetery(trajectory_value(dies, 3.0).state));
  CHECK_FALSE(trajectory_value(dies, 3.0).beyond_horizon);

  const auto alive = trajectory_value(constant, 5.0);
  CHECK(alive.beyond_horizon);
  CHECK(std::get<double>(alive.state) == 2.0);

  const double x = 0.3, a = 1.7, step = 0.01;
  const auto tr = drift_path(x, a, step, 1.0);
  const double closed_form = x + a * 0.505;
  CHECK(std::fabs(std::get<double>(trajectory_value(tr, 0.505).state) - closed_form) <= std::fabs(a) * step);

  for (std::size_t i = 0; i < tr.sample_times.size(); ++i)
    CHECK(trajectory_value(tr, tr.sample_times[i]).state == tr.values[i]);

  CHECK_THROWS_AS(trajectory_value(tr, -1.0), DomainError);
}

TEST_CASE("cemetery values must form a suffix") {
  Trajectory bad;
  bad.grid_step = 1.0;
  bad.sample_times = {0.0, 1.0, 2.0};
  bad.values = {1.0, Cemetery{}, 1.0};
  CHECK_FALSE(trajectory_well_formed(bad));
  bad.sample_times = {0.0, 0.0, 2.0};
  bad.values = {1.0, 1.0, 1.0};
  CHECK_FALSE(trajectory_well_formed(bad));
}

TEST_CASE("witness relatedness on symmetry groups and partitions") {
  CHECK(relation_related(reflection_group(), 1.5, -1.5));
  CHECK_FALSE(relation_related(reflection_group(), 1.5, -1.4));
  CHECK(relation_related(integer_translations(), 0.25, 3.25));
  CHECK_FALSE(relation_related(integer_translations(), 0.25, 0.75));

  const FinitePartition p(3, {{0, 1}, {2}});
  CHECK(relation_related(p, 0.0, 1.0));
  CHECK_FALSE(relation_related(p, 0.0, 2.0));
  CHECK_THROWS_AS(relation_related(p, 0.0, 3.0), DomainError);

  const auto interval = SymmetryGroup::identity(StateSpace{Interval{0.0, 1.0, Boundary::Absorbing}});
  CHECK_THROWS_AS(relation_related(interval, 0.5, 2.0), DomainError);
}

TEST_CASE("reflection plus integer translation relates x to y iff frac parts match or mirror") {
  const auto w = SymmetryGroup::isometries(
      StateSpace{}, {Generator::reflect_about(0.0), Generator::translate(1.0), Generator::translate(-1.0)}, "");
  auto oracle = [](double x, double y) {
    const double fx = x - std::floor(x);
    const double fy = y - std::floor(y);
    return std::fabs(fx - fy) < 1e-9 || std::fabs(fx - (1.0 - fy)) < 1e-9 || std::fabs(fx + fy - 1.0) < 1e-9;
  };
  const double samples[] = {0.25, 1.75, -0.25, 2.25, 0.5, -1.5, 3.0, 0.1, 0.9, 7.9, -3.1};
  for (double x : samples)
    for (double y : samples) CHECK_MESSAGE(relation_related(w, x, y) == oracle(x, y), x << " vs " << y);
}

TEST_CASE("relatedness is an equivalence for every witness kind") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> pick(-4.0, 4.0);
  const std::vector<RelationWitness> witnesses = {
      reflection_group(), integer_translations(),
      SymmetryGroup::isometries(StateSpace{}, {Generator::reflect_about(0.0), Generator::reflect_about(1.5)}, ""),
      SymmetryGroup::identity(StateSpace{})};
  for (const auto& w : witnesses) {
    for (int i = 0; i < 300; ++i) {
      // Mix in dyadic points so related triples actually occur.
      auto draw = [&] { return i % 2 ? pick(rng) : std::round(pick(rng) * 4.0) / 4.0; };
      const double x = draw(), y = draw(), z = draw();
      CHECK(relation_related(w, x, x));
      CHECK(relation_related(w, x, y) == relation_related(w, y, x));
      if (relation_related(w, x, y) && relation_related(w, y, z)) CHECK(relation_related(w, x, z));
    }
  }
}

TEST_CASE("state spaces validate their parameters") {
  CHECK_THROWS_AS(StateSpace(Interval{1.0, 1.0}), DomainError);
  CHECK_THROWS_AS(StateSpace(Circle{0.0}), DomainError);
  CHECK_THROWS_AS(StateSpace(FiniteSet{0}), DomainError);
  const StateSpace circle(Circle{1.0});
  CHECK(circle.contains(std::numbers::pi));
  CHECK_FALSE(circle.contains(-std::numbers::pi));
  CHECK(circle.contains(Cemetery{}));
  CHECK(wrap_angle(3.0 * std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(wrap_angle(-std::numbers::pi) == doctest::Approx(std::numbers::pi));
}

TEST_CASE("state sets: membership, gaps and range meeting") {
  const auto ints = StateSet::integers();
  CHECK(ints.contains_real(-3.0));
  CHECK_FALSE(ints.contains_real(0.5));
  CHECK_FALSE(ints.contains(Cemetery{}));
  CHECK(ints.gap_around(2.5) == std::pair{2.0, 3.0});

  const auto nonzero = StateSet::point(0.0).complement();
  CHECK(nonzero.contains_real(1.0));
  CHECK_FALSE(nonzero.contains_real(0.0));
  CHECK(nonzero.complement().contains_real(0.0));

  const auto band = StateSet::interval(-1.0, 1.0);
  CHECK(band.gap_around(3.0) == std::pair{1.0, kInf});
  CHECK(band.meets_range(3.0, 0.5));
  CHECK_FALSE(band.meets_range(3.0, 1.5));
  CHECK(StateSet::point(0.0).meets_range(-2.0, 1.0));
  // Half-open: the far end is excluded.
  CHECK_FALSE(StateSet::point(0.0).meets_range(-2.0, 0.0));
}

TEST_CASE("observation map sends the cemetery to its own symbol") {
  const auto obs = ObservationMap::from_sets({"zero"}, {StateSet::point(0.0)});
  CHECK(obs(0.0) == Observation{1, false});
  CHECK(obs(0.3) == Observation{0, false});
  CHECK(obs(Cemetery{}).dead);
  CHECK(obs(Cemetery{}) != obs(0.3));
  CHECK(to_string(obs(0.0), 1) == "(1)");
}

TEST_CASE("finite partitions are canonical") {
  const FinitePartition a(4, {{2, 3}, {0}, {1}});
  const FinitePartition b = FinitePartition::from_labels({7, 9, 4, 4});
  CHECK(a == b);
  CHECK(a.block_count() == 3);
  CHECK(FinitePartition::identity(4).refines(a));
  CHECK_FALSE(a.refines(FinitePartition::identity(4)));
  CHECK_THROWS_AS(FinitePartition(3, {{0, 1}, {1, 2}}), DomainError);
  CHECK_THROWS_AS(FinitePartition(3, {{0, 1}}), DomainError);
}
