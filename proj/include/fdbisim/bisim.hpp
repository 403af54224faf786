#pragma once

#include <cstdint>
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "fdbisim/core.hpp"
#include "fdbisim/mc.hpp"

namespace fdbisim::bisim {

/// One failed (or noteworthy) comparison inside a check.
struct Finding {
  std::string what;
  State x;
  State y;
  double statistic = 0.0;
};

struct CheckReport {
  std::string check;
  bool passed = true;
  std::size_t comparisons = 0;
  std::vector<Finding> findings;
  /// Free-form key/value details (z_crit, mode, coverage, ...).
  nlohmann::ordered_json details = nlohmann::ordered_json::object();

  nlohmann::ordered_json to_json() const;
};

/// Real window a model's states are drawn from: [-3,3] for processes on the
/// line, the open interval for absorbed motion, the closed one for reflected.
struct Window {
  double lo;
  double hi;
  bool open;
};
Window natural_window(const mc::ProcessModel& m);
/// n evenly spaced states of the window (interior points when it is open).
std::vector<double> window_grid(const mc::ProcessModel& m, std::size_t n);

/// Converts a partition index to a model state (ClockedState{i, 0} for
/// embedded LMPs, the real i otherwise) and back.
State partition_state(const mc::ProcessModel& m, std::size_t i);

// ---------------------------------------------------------------------------
// Conditions

/// obs(x) = obs(y) on sampled related pairs (x, g(x)) for words g of up to
/// three generators, plus every quarter-integer of the window. For partitions,
/// every related pair of indices is checked.
CheckReport check_initiation1(const mc::ProcessModel& m, const RelationWitness& w, std::size_t samples,
                              std::uint64_t seed);

struct SymmetryOptions {
  std::size_t n = 100000;
  std::uint64_t seed = 1;
  double z_crit = mc::kDefaultZCrit;
  std::vector<double> times{0.25, 0.5, 1.0};
  /// Grid step used for the sampled paths; 0 keeps the model's.
  double grid_step = 0.0;
};

/// Certifies induction 2 for a symmetry witness: every generator commutes
/// with obs and maps the law from x to the law from g(x), compared through
/// one- and two-time marginals. Enumerable models are compared exactly, or by
/// a coupling whose paired trajectories stay related at every checked time.
CheckReport check_induction2_symmetry(const mc::ProcessModel& m, const RelationWitness& w,
                                      const SymmetryOptions& opt = {});

/// Transition mass P_t(x, C): closed form for Brownian motion (with or
/// without drift), matrix powers for embedded LMPs, exact enumeration for
/// enumerable models, Monte Carlo otherwise.
EstimateWithCI kernel_mass(const mc::ProcessModel& m, const State& x, double t, const StateSet& c, std::size_t n,
                           std::uint64_t seed);

/// Whether c is a union of classes of w, tested on window samples.
bool is_closed(const mc::ProcessModel& m, const RelationWitness& w, const StateSet& c);

/// Compares P_t(x, C) = P_t(y, C) on related pairs for each t and C. Throws
/// PreconditionError if some C is not closed under w.
CheckReport check_induction1(const mc::ProcessModel& m, const RelationWitness& w, const std::vector<double>& t_grid,
                             const std::vector<StateSet>& sets, std::size_t n = 20000, std::uint64_t seed = 1,
                             double z_crit = mc::kDefaultZCrit);

/// Compares the laws of obs-traces from x and y. Exact for enumerable models;
/// otherwise a Monte Carlo test over obs-closed events.
CheckReport check_initiation2(const mc::ProcessModel& m, const State& x, const State& y, std::size_t n = 20000,
                              std::uint64_t seed = 1, double z_crit = mc::kDefaultZCrit);

// ---------------------------------------------------------------------------
// Distinguishers

enum class FamilyKind { Auto, HittingCdf, Laplace, Exact, MonteCarlo };

std::string to_string(FamilyKind k);
std::optional<FamilyKind> family_from_string(const std::string& s);

/// A way to tell states apart. Closed-form families compare analytic
/// hitting laws; exact and Monte Carlo families compare event probabilities.
struct Family {
  FamilyKind kind = FamilyKind::Auto;
  std::string name;
  /// Set for closed-form families: true iff the laws of x and y differ.
  std::function<bool(double, double)> separates;
  /// Events used by the exact and Monte Carlo families for a pair.
  std::function<std::vector<mc::EventSpec>(const State&, const State&)> events;
};

/// The built-in family of the requested kind for m. Auto prefers closed
/// forms, then exact enumeration, then Monte Carlo. Throws UnsupportedError
/// when no closed form of the requested kind is known for m.
Family builtin_family(const mc::ProcessModel& m, FamilyKind kind);

/// Obs-closed event family used for Monte Carlo separation: hitting events
/// for each proposition and its complement, and death events.
std::vector<mc::EventSpec> mc_events(const mc::ProcessModel& m);

struct PairVerdict {
  bool separated = false;
  std::string how;
  double statistic = 0.0;
};

PairVerdict separate_pair(const mc::ProcessModel& m, const Family& f, const State& x, const State& y, std::size_t n,
                          std::uint64_t seed, double z_crit = mc::kDefaultZCrit);

struct RefuteOptions {
  std::size_t grid_points = 20;
  std::size_t n = 20000;
  std::uint64_t seed = 1;
  double z_crit = mc::kDefaultZCrit;
};

/// Runs the family over the grid of pairs. details: coverage (fraction of
/// unrelated pairs separated), unrelated, separated and related_separated
/// (pairs the witness relates yet the family tells apart). passed means
/// full coverage and no related pair separated.
CheckReport refute_maximality(const mc::ProcessModel& m, const RelationWitness& w, const Family& f,
                              const RefuteOptions& opt = {});

// ---------------------------------------------------------------------------
// Relation algebra

/// Transitive closure of the union. Partitions join by union-find; affine
/// symmetry groups merge their generators. Throws DomainError on mismatched
/// spaces or witness kinds, UnsupportedError for non-affine groups.
RelationWitness union_closure(const RelationWitness& a, const RelationWitness& b);

// ---------------------------------------------------------------------------
// Gallery

struct GalleryOptions {
  std::uint64_t seed = 42;
  std::size_t symmetry_paths = 100000;
  std::size_t grid_points = 20;
};

struct GalleryEntry {
  std::string key;
  std::string title;
  std::string claim;
  bool passed = false;
  std::vector<CheckReport> checks;
};

/// Every worked example end to end: the stated greatest bisimulation is
/// certified and every unrelated pair of the grid is separated. Also the
/// naive-definition counterexample.
std::vector<GalleryEntry> run_gallery(const GalleryOptions& opt = {});
nlohmann::ordered_json gallery_json(const std::vector<GalleryEntry>& entries, const GalleryOptions& opt);

// Example witnesses shared with the CLI and tests.
SymmetryGroup reflection_witness(double centre = 0.0);
SymmetryGroup translation_witness(double period = 1.0);
SymmetryGroup reflection_translation_witness();
/// (R* x R*) u {(0,0)}: the relation that passes the naive conditions.
SymmetryGroup naive_witness();
/// (R>0 x R>0) u identity: the greatest bisimulation of a positive drift with 0 marked.
SymmetryGroup positive_half_witness();

}  // namespace fdbisim::bisim
