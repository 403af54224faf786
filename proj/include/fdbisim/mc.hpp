#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fdbisim/core.hpp"
#include "fdbisim/lmp.hpp"

namespace fdbisim::mc {

inline constexpr double kDefaultHorizon = 10.0;
inline constexpr double kDefaultGridStep = 1e-3;
inline constexpr double kDefaultZCrit = 4.0;

// ---------------------------------------------------------------------------
// Process models

/// Segment layout of the fork: branch 1 is the single point (first_fork, 1);
/// branches 2 and 3 cover (first_fork, end]; branch 4 covers
/// [first_fork, second_fork]; branches 5 and 6 cover (second_fork, end].
struct ForkGeometry {
  double first_fork = 0.0;
  double second_fork = 95.0;
  double end = 100.0;
  friend bool operator==(const ForkGeometry&, const ForkGeometry&) = default;
};

struct DeterministicDrift {
  double speed = 1.0;
};
struct BrownianMotion {};
struct DriftedBM {
  double drift = 1.0;
};
/// Killed on leaving (lo, hi); hi may be +inf.
struct AbsorbedBM {
  double lo = 0.0;
  double hi = kInf;
};
struct ReflectedBM {
  double lo = 0.0;
  double hi = 1.0;
};
/// Angular motion on a circle of the given radius; states are angles in (-pi, pi].
struct CircleBM {
  double radius = 1.0;
};
struct ForkProcess {
  ForkGeometry geometry;
};
/// A finite LMP run in continuous time on X x [0,1): one kernel step each
/// time the clock wraps.
struct EmbeddedLMP {
  std::shared_ptr<const lmp::FiniteLMP> lmp;
};

using ProcessKind = std::variant<DeterministicDrift, BrownianMotion, DriftedBM, AbsorbedBM, ReflectedBM, CircleBM,
                                 ForkProcess, EmbeddedLMP>;

class ProcessModel {
 public:
  ProcessModel(ProcessKind kind, ObservationMap obs, double horizon = kDefaultHorizon,
               double grid_step = kDefaultGridStep);

  const ProcessKind& kind() const { return kind_; }
  const ObservationMap& obs() const { return obs_; }
  double horizon() const { return horizon_; }
  double grid_step() const { return grid_step_; }
  StateSpace space() const;
  std::string name() const;

  /// Deterministic and fork models have finitely many trajectories from each
  /// state; their events are evaluated exactly.
  bool enumerable() const;

  ProcessModel with_resolution(double horizon, double grid_step) const;

 private:
  ProcessKind kind_;
  ObservationMap obs_;
  double horizon_;
  double grid_step_;
};

/// P at the ends of branches 2 and 5, Q at the ends of branches 3 and 6.
ObservationMap fork_observation(const ForkGeometry& g);
ProcessModel fork_model(const ForkGeometry& g = {});

// ---------------------------------------------------------------------------
// Events

/// {w | exists s < t, w(s) in target}
struct HitSetBefore {
  StateSet target;
  double t;
};
/// {w | w(t) in set}
struct ValueAtTimeIn {
  double t;
  StateSet set;
};
/// {w | w(t) is the cemetery}
struct DeadAt {
  double t;
};
/// {w | obs(w(times[i])) = values[i] for all i}
struct ObsWordEquals {
  std::vector<double> times;
  std::vector<Observation> values;
};

using EventSpec = std::variant<HitSetBefore, ValueAtTimeIn, DeadAt, ObsWordEquals>;

std::string describe(const EventSpec& ev, std::size_t n_props = 1);
/// Latest time the event looks at.
double event_horizon(const EventSpec& ev);

// ---------------------------------------------------------------------------
// Randomness and parallelism

/// Stream seed for (seed, index); splitmix64 mixing.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// Number of worker threads estimators may use (0 = hardware concurrency).
/// Results never depend on this value.
void set_worker_count(unsigned workers);
unsigned worker_count();

// ---------------------------------------------------------------------------
// Sampling

Trajectory sample_trajectory(const ProcessModel& m, const State& x0, std::uint64_t seed);

/// One of the finitely many trajectories of an enumerable model.
struct WeightedPath {
  double probability = 0.0;
  std::function<State(double)> at;
  /// Times at which the path switches piece (fork points, end stops).
  std::vector<double> breakpoints;
};

std::vector<WeightedPath> enumerate_paths(const ProcessModel& m, const State& x0);
bool event_holds(const ProcessModel& m, const WeightedPath& path, const EventSpec& ev);

EstimateWithCI estimate_event(const ProcessModel& m, const State& x0, const EventSpec& ev, std::size_t n,
                              std::uint64_t seed);
/// Estimates of several events over one shared batch of paths.
std::vector<EstimateWithCI> estimate_events(const ProcessModel& m, const State& x0,
                                            std::span<const EventSpec> events, std::size_t n, std::uint64_t seed);

/// State at each of the given times for n independent paths; result[i][k] is
/// path i at times[k].
std::vector<std::vector<State>> sample_marginals(const ProcessModel& m, const State& x0, std::span<const double> times,
                                                 std::size_t n, std::uint64_t seed);

/// First entrance times into a real target set, located to within
/// grid_step / 256 by Brownian-bridge refinement; +inf when the path dies or
/// reaches t_max first.
std::vector<double> sample_hitting_times(const ProcessModel& m, const State& x0, const StateSet& target,
                                         double t_max, std::size_t n, std::uint64_t seed);

/// E^x0[exp(-lambda T_target)], with exp(-lambda * inf) = 0. Paths run to the
/// model horizon.
EstimateWithCI estimate_hitting_laplace(const ProcessModel& m, const State& x0, const StateSet& target, double lambda,
                                        std::size_t n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Distinguishing

/// z statistic for the difference of two independent estimates.
double difference_z(const EstimateWithCI& a, const EstimateWithCI& b);

struct Verdict {
  bool distinguished = false;
  /// Index of the event with the largest |z| (the separating event when distinguished).
  std::size_t event_index = 0;
  double gap = 0.0;
  double z_score = 0.0;
  EstimateWithCI at_x;
  EstimateWithCI at_y;
};

/// Estimates every event from x and from y on independent streams.
Verdict distinguish(const ProcessModel& m, const State& x, const State& y, std::span<const EventSpec> events,
                    std::size_t n, std::uint64_t seed, double z_crit = kDefaultZCrit);

}  // namespace fdbisim::mc
