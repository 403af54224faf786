#include <cmath>
#include <memory>

#include "doctest.h"
#include "fdbisim/analytic.hpp"
#include "fdbisim/mc.hpp"
#include "fdbisim/stats.hpp"

using namespace fdbisim;
using namespace fdbisim::mc;

namespace {

ObservationMap zero_obs() { return ObservationMap::from_sets({"zero"}, {StateSet::point(0.0)}); }

ProcessModel bm() { return ProcessModel(BrownianMotion{}, zero_obs()); }

std::shared_ptr<const lmp::FiniteLMP> leaky_pair() {
  lmp::Matrix tau(2);
  tau(0, 1) = 0.5;
  tau(0, 0) = 0.25;
  tau(1, 0) = 0.75;
  return std::make_shared<const lmp::FiniteLMP>(tau, std::vector<std::string>{"P"}, std::vector<std::uint64_t>{1, 0});
}

}  // namespace

TEST_CASE("deterministic drift is exact") {
  const ProcessModel drift(DeterministicDrift{1.0}, zero_obs());
  const auto tr = sample_trajectory(drift, 0.0, 1);
  CHECK(std::get<double>(trajectory_value(tr, 2.0).state) == doctest::Approx(2.0).epsilon(1e-12));
  const auto at_zero = estimate_event(drift, -1.0, ValueAtTimeIn{1.0, StateSet::point(0.0)}, 100, 1);
  CHECK(at_zero.exact);
  CHECK(at_zero.mean == 1.0);
  CHECK(at_zero.std_err == 0.0);
  CHECK(estimate_event(drift, -2.0, ValueAtTimeIn{1.0, StateSet::point(0.0)}, 100, 1).mean == 0.0);
  CHECK(estimate_event(drift, -0.5, HitSetBefore{StateSet::point(0.0), 1.0}, 100, 1).mean == 1.0);
  CHECK(estimate_event(drift, -1.0, HitSetBefore{StateSet::point(0.0), 1.0}, 100, 1).mean == 0.0);
}

TEST_CASE("fork branches and exact event values") {
  const auto fork = fork_model();
  std::size_t on_two = 0;
  const std::size_t n = 100000;
  for (std::size_t s = 0; s < n; ++s) {
    const auto tr = sample_trajectory(fork.with_resolution(10.0, 0.1), BranchPoint{0.0, 1}, s);
    const int branch = std::get<BranchPoint>(tr.values.back()).branch;
    CHECK((branch == 2 || branch == 3));
    for (std::size_t i = 1; i < tr.values.size(); ++i) REQUIRE(std::get<BranchPoint>(tr.values[i]).branch == branch);
    on_two += branch == 2;
  }
  const double p = static_cast<double>(on_two) / n;
  CHECK(std::fabs(p - 0.5) < 3.0 * std::sqrt(0.25 / n));

  const ObsWordEquals word{{5.0}, {Observation{1, false}}};
  CHECK(estimate_event(fork, BranchPoint{95.0, 2}, word, 100, 1).mean == 1.0);
  CHECK(estimate_event(fork, BranchPoint{95.0, 3}, word, 100, 1).mean == 0.0);
  CHECK(estimate_event(fork, BranchPoint{95.0, 4}, word, 100, 1).mean == 0.5);
  CHECK(estimate_event(fork, BranchPoint{95.0, 4}, word, 100, 1).exact);
  // The branch at a fork point is chosen just after time 0.
  const auto paths = enumerate_paths(fork, BranchPoint{0.0, 1});
  REQUIRE(paths.size() == 2);
  CHECK(paths[0].at(0.0) == State{BranchPoint{0.0, 1}});
  CHECK(paths[0].at(1e-9) == State{BranchPoint{1e-9, 2}});
  CHECK(paths[1].at(200.0) == State{BranchPoint{100.0, 3}});
  CHECK(estimate_event(fork, BranchPoint{0.0, 1},
                       HitSetBefore{StateSet::branch_points({{100.0, 2}}), 100.5}, 100, 1)
            .mean == 0.5);
  CHECK(estimate_event(fork, BranchPoint{0.0, 1},
                       HitSetBefore{StateSet::branch_points({{100.0, 2}}), 100.0}, 100, 1)
            .mean == 0.0);
  CHECK_THROWS_AS(estimate_event(fork, BranchPoint{96.0, 4}, word, 100, 1), DomainError);
}

TEST_CASE("Brownian increments have the right variance") {
  const auto samples = sample_marginals(bm(), 0.0, std::vector<double>{1.0}, 100000, 3);
  std::vector<double> sq;
  for (const auto& s : samples) sq.push_back(std::get<double>(s[0]) * std::get<double>(s[0]));
  const auto est = stats::summarize(sq, 3);
  CHECK(std::fabs(est.mean - 1.0) < 3.0 * est.std_err);
}

TEST_CASE("estimates are bit-identical for a fixed seed and independent of worker count") {
  const HitSetBefore ev{StateSet::point(0.0), 0.5};
  set_worker_count(1);
  const auto a = estimate_event(bm(), 0.5, ev, 5000, 77);
  set_worker_count(3);
  const auto b = estimate_event(bm(), 0.5, ev, 5000, 77);
  set_worker_count(0);
  CHECK(a.mean == b.mean);
  CHECK(a.std_err == b.std_err);
  const auto c = estimate_event(bm(), 0.5, ev, 5000, 78);
  CHECK(c.mean != a.mean);
}

TEST_CASE("bridge correction removes most of the grid bias") {
  const double exact = analytic::bm_hit_zero_cdf(1.0, 1.0);
  const ProcessModel m = bm().with_resolution(1.0, 1e-3);
  const std::size_t n = 40000;
  double naive_hits = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    const auto tr = sample_trajectory(m, 1.0, derive_seed(500, s));
    for (const auto& v : tr.values)
      if (std::get<double>(v) <= 0.0) {
        naive_hits += 1.0;
        break;
      }
  }
  const double naive_bias = std::fabs(naive_hits / n - exact);
  const auto bridged = estimate_event(m, 1.0, HitSetBefore{StateSet::point(0.0), 1.0}, n, 501);
  const double bridged_bias = std::fabs(bridged.mean - exact);
  CHECK(naive_bias > 3.0 * bridged.std_err);
  CHECK(bridged_bias < 0.5 * naive_bias);
}

TEST_CASE("absorbed trajectories end in the cemetery as a suffix") {
  const ProcessModel absorbed(AbsorbedBM{0.0, 1.0}, ObservationMap{}, 5.0, 1e-3);
  std::size_t dead = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto tr = sample_trajectory(absorbed, 0.5, s);
    CHECK(trajectory_well_formed(tr));
    dead += tr.absorbed();
  }
  CHECK(dead > 190);
  // Death law matches the one-barrier closed form.
  const ProcessModel half_line(AbsorbedBM{0.0, kInf}, ObservationMap{});
  const auto est = estimate_event(half_line, 0.7, DeadAt{1.0}, 50000, 9);
  CHECK(std::fabs(est.mean - analytic::absorbed_bm_death_cdf(0.7, 1.0)) < 3.29 * est.std_err);
}

TEST_CASE("reflected motion stays in its interval and circle motion on the circle") {
  const ProcessModel refl(ReflectedBM{0.0, 1.0}, ObservationMap{}, 5.0, 1e-2);
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto tr = sample_trajectory(refl, 0.3, s);
    for (const auto& v : tr.values) {
      const double x = std::get<double>(v);
      REQUIRE(x >= 0.0);
      REQUIRE(x <= 1.0);
    }
  }
  const ProcessModel circ(CircleBM{0.5}, ObservationMap{}, 5.0, 1e-2);
  const auto tr = sample_trajectory(circ, 0.0, 4);
  for (const auto& v : tr.values) REQUIRE(circ.space().contains(v));
  CHECK_THROWS_AS(estimate_event(refl, 0.3, HitSetBefore{StateSet::point(0.0), 1.0}, 100, 1), UnsupportedError);
}

TEST_CASE("embedded LMP loses mass at the row-sum rate") {
  lmp::Matrix tau(2);
  tau(0, 0) = 0.5;
  tau(0, 1) = 0.25;
  tau(1, 0) = 0.25;
  tau(1, 1) = 0.5;
  const auto l = std::make_shared<const lmp::FiniteLMP>(tau, std::vector<std::string>{"P"},
                                                        std::vector<std::uint64_t>{1, 0});
  const ProcessModel m(EmbeddedLMP{l}, ObservationMap{}, 10.0, 0.01);
  for (int k : {1, 2, 3}) {
    const auto est = estimate_event(m, ClockedState{0, 0.0}, DeadAt{static_cast<double>(k)}, 50000, 10 + k);
    const double expected = 1.0 - std::pow(0.75, k);
    CHECK(std::fabs(est.mean - expected) < 3.0 * est.std_err);
  }
  const auto tr = sample_trajectory(m, ClockedState{1, 0.25}, 3);
  CHECK(trajectory_well_formed(tr));
  CHECK(std::get<ClockedState>(trajectory_value(tr, 0.5).state) == ClockedState{1, 0.75});
}

TEST_CASE("embedded LMP one-step law matches the kernel row") {
  const ProcessModel m(EmbeddedLMP{leaky_pair()}, ObservationMap{}, 10.0, 0.01);
  const auto at_one = estimate_event(m, ClockedState{0, 0.5}, ValueAtTimeIn{0.5, StateSet::bases({1})}, 50000, 4);
  CHECK(std::fabs(at_one.mean - 0.5) < 3.0 * at_one.std_err);
  const auto dead = estimate_event(m, ClockedState{0, 0.5}, DeadAt{0.5}, 50000, 5);
  CHECK(std::fabs(dead.mean - 0.25) < 3.0 * dead.std_err);
  const auto before = estimate_event(m, ClockedState{0, 0.5}, ValueAtTimeIn{0.49, StateSet::bases({0})}, 1000, 6);
  CHECK(before.mean == 1.0);
}

TEST_CASE("distinguish separates and fails to separate as expected") {
  const ProcessModel drift(DeterministicDrift{1.0}, zero_obs());
  std::vector<EventSpec> family;
  for (double t : {0.5, 1.0, 2.0, 4.0}) family.push_back(HitSetBefore{StateSet::point(0.0), t});
  CHECK_FALSE(distinguish(drift, 1.0, 2.0, family, 100, 1).distinguished);
  const std::vector<EventSpec> at_one{ValueAtTimeIn{1.0, StateSet::point(0.0)}};
  const auto v = distinguish(drift, -1.0, -2.0, at_one, 100, 1);
  CHECK(v.distinguished);
  CHECK(v.gap == 1.0);

  const ProcessModel short_bm = bm().with_resolution(2.0, 1e-3);
  std::vector<EventSpec> bt;
  for (double t : {0.25, 0.5, 1.0, 2.0}) bt.push_back(HitSetBefore{StateSet::point(0.0), t});
  CHECK_FALSE(distinguish(short_bm, 1.0, -1.0, bt, 20000, 3).distinguished);
  const auto sep = distinguish(short_bm, 1.0, 2.0, bt, 20000, 3);
  CHECK(sep.distinguished);
  CHECK(sep.gap > 0.0);
}

TEST_CASE("event times beyond the horizon are rejected") {
  CHECK_THROWS_AS(estimate_event(bm(), 0.0, DeadAt{11.0}, 100, 1), DomainError);
  CHECK_THROWS_AS(estimate_event(bm(), 0.0, DeadAt{1.0}, 10, 1), DomainError);
  CHECK_THROWS_AS(ProcessModel(BrownianMotion{}, ObservationMap{}, 1.0, 0.1), DomainError);
  CHECK_THROWS_AS(sample_trajectory(ProcessModel(AbsorbedBM{0.0, 1.0}, ObservationMap{}), 2.0, 1), DomainError);
}

TEST_CASE("two-sample chi-squared test detects a scale change and accepts equal laws") {
  const auto a = sample_marginals(bm(), 0.0, std::vector<double>{1.0}, 100000, 1);
  const auto b = sample_marginals(bm(), 0.0, std::vector<double>{1.0}, 100000, 2);
  std::vector<double> fa, fb, half;
  for (const auto& s : a) {
    fa.push_back(std::get<double>(s[0]));
    half.push_back(std::get<double>(s[0]) / 2.0);
  }
  for (const auto& s : b) fb.push_back(std::get<double>(s[0]));
  CHECK(stats::two_sample_chi2(fa, fb).z < 4.0);
  CHECK(stats::two_sample_chi2(half, fb).z > 4.0);
}
