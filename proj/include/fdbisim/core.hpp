#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace fdbisim {

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class UnsupportedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// States

/// The cemetery point added by compactification. Absorbing.
struct Cemetery {
  friend constexpr bool operator==(Cemetery, Cemetery) { return true; }
};

/// A point of the fork's segment space: position along a numbered branch.
struct BranchPoint {
  double pos = 0.0;
  int branch = 1;
  friend bool operator==(const BranchPoint&, const BranchPoint&) = default;
};

/// A point of X x [0,1) for a finite LMP viewed as a continuous-time process.
struct ClockedState {
  std::size_t base = 0;
  double clock = 0.0;
  friend bool operator==(const ClockedState&, const ClockedState&) = default;
};

using State = std::variant<double, BranchPoint, ClockedState, Cemetery>;

inline bool is_cemetery(const State& s) { return std::holds_alternative<Cemetery>(s); }
double as_real(const State& s);  // throws DomainError unless the state is real-valued
std::string to_string(const State& s);

// ---------------------------------------------------------------------------
// State spaces

enum class Boundary { Absorbing, Reflecting, Open };

struct RealLine {};
struct Interval {
  double lo;
  double hi;
  Boundary boundary = Boundary::Open;
};
struct Circle {
  double radius;
};
struct FiniteSet {
  std::size_t n;
};
/// FiniteSet x [0,1); the space an LMP is embedded into.
struct ClockedProduct {
  std::size_t n;
};
/// Fork segment space; see ForkGeometry in mc.hpp for the layout.
struct Branches {
  double first_fork;
  double second_fork;
  double end;
};

class StateSpace {
 public:
  using Kind = std::variant<RealLine, Interval, Circle, FiniteSet, ClockedProduct, Branches>;

  StateSpace() = default;
  explicit StateSpace(Kind kind);

  const Kind& kind() const { return kind_; }
  bool contains(const State& s) const;  // the cemetery is always a member
  std::string describe() const;

 private:
  Kind kind_ = RealLine{};
};

/// Wraps an angle into (-pi, pi].
double wrap_angle(double theta);

// ---------------------------------------------------------------------------
// Sets of states

/// A measurable set of states, as used by events, kernels and propositions.
/// Real sets are finite unions of spans, optionally with the integer lattice,
/// optionally complemented. The cemetery never belongs to any StateSet.
class StateSet {
 public:
  struct Span {
    double lo;
    double hi;
    bool lo_closed = true;
    bool hi_closed = true;
    friend bool operator==(const Span&, const Span&) = default;
  };
  struct BranchSegment {
    int branch;
    double lo;
    double hi;
    friend bool operator==(const BranchSegment&, const BranchSegment&) = default;
  };

  static StateSet empty();
  static StateSet everything();
  static StateSet point(double b);
  static StateSet points(std::vector<double> bs);
  static StateSet interval(double lo, double hi, bool lo_closed = true, bool hi_closed = true);
  static StateSet integers();
  static StateSet branch_points(std::vector<BranchPoint> pts);
  static StateSet branch_segments(std::vector<BranchSegment> segs);
  /// Base states of an LMP, at any clock value.
  static StateSet bases(std::vector<std::size_t> xs);
  /// Base states of an LMP at one exact clock value.
  static StateSet bases_at(std::vector<std::size_t> xs, double clock);

  StateSet complement() const;

  bool contains(const State& s) const;
  bool contains_real(double x) const;

  bool is_real() const { return domain_ == Domain::Real; }
  bool is_complemented() const { return complemented_; }
  const std::vector<Span>& spans() const { return spans_; }
  bool has_integers() const { return integers_; }
  const std::vector<BranchSegment>& segments() const { return segments_; }
  /// Clock value fixed by bases_at, if any.
  std::optional<double> pinned_clock() const { return clock_; }

  /// For a real x outside the set: the open component (lo, hi) of the
  /// complement containing x. Bounds may be infinite.
  std::pair<double, double> gap_around(double x) const;

  /// Whether the half-open range [a, b) (or (b, a] if b < a) meets the set.
  /// A degenerate range a == b tests the single point.
  bool meets_range(double a, double b) const;

  /// Short DSL-style description ("point 0", "interval -1 1", "integers", ...).
  std::string describe() const;

  friend bool operator==(const StateSet&, const StateSet&) = default;

 private:
  enum class Domain { Real, Branch, Clocked };
  Domain domain_ = Domain::Real;
  std::vector<Span> spans_;
  bool integers_ = false;
  bool complemented_ = false;
  std::vector<BranchSegment> segments_;
  std::vector<std::size_t> bases_;
  std::optional<double> clock_;

  bool raw_contains_real(double x) const;
};

// ---------------------------------------------------------------------------
// Observations

/// Value of obs: a bit-vector over the atomic propositions, or the
/// distinguished cemetery symbol.
struct Observation {
  std::uint64_t bits = 0;
  bool dead = false;
  friend auto operator<=>(const Observation&, const Observation&) = default;
};

std::string to_string(const Observation& o, std::size_t n_props);

class ObservationMap {
 public:
  using Eval = std::function<std::uint64_t(const State&)>;

  ObservationMap() = default;

  /// Propositions given as state sets; bit i is set iff the state is in set i.
  static ObservationMap from_sets(std::vector<std::string> names, std::vector<StateSet> sets);
  static ObservationMap custom(std::vector<std::string> names, Eval eval, std::string description);

  Observation operator()(const State& s) const;

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  /// Present only for maps built with from_sets.
  const std::vector<StateSet>& sets() const { return sets_; }
  const std::string& description() const { return description_; }

  /// Union of states where some proposition holds (from_sets maps only).
  std::optional<StateSet> support() const;

 private:
  std::vector<std::string> names_;
  std::vector<StateSet> sets_;
  Eval eval_;
  std::string description_;
};

// ---------------------------------------------------------------------------
// Trajectories

struct Trajectory {
  std::vector<double> sample_times;
  std::vector<State> values;
  double grid_step = 0.0;

  bool absorbed() const { return !values.empty() && is_cemetery(values.back()); }
};

struct TrajectoryValue {
  State state;
  /// Query time lies past the last sample of a trajectory that was still alive.
  bool beyond_horizon = false;
};

TrajectoryValue trajectory_value(const Trajectory& tr, double t);

/// Checks the invariants of a sampled trajectory: times start at 0 and
/// strictly increase, and the cemetery values form a suffix.
bool trajectory_well_formed(const Trajectory& tr);

// ---------------------------------------------------------------------------
// Relation witnesses

class FinitePartition {
 public:
  FinitePartition() = default;
  /// Blocks must be disjoint and cover {0..n-1}.
  FinitePartition(std::size_t n, const std::vector<std::vector<std::size_t>>& blocks);
  static FinitePartition identity(std::size_t n);
  static FinitePartition from_labels(const std::vector<std::size_t>& labels);

  std::size_t size() const { return block_of_.size(); }
  std::size_t block_count() const { return n_blocks_; }
  /// Blocks are numbered by first occurrence, so equal partitions compare equal.
  std::size_t block_of(std::size_t x) const { return block_of_.at(x); }
  const std::vector<std::size_t>& labels() const { return block_of_; }
  std::vector<std::vector<std::size_t>> blocks() const;

  bool related(std::size_t x, std::size_t y) const { return block_of(x) == block_of(y); }
  /// Every block of *this is contained in a block of other.
  bool refines(const FinitePartition& other) const;
  std::string describe() const;

  friend bool operator==(const FinitePartition&, const FinitePartition&) = default;

 private:
  std::vector<std::size_t> block_of_;
  std::size_t n_blocks_ = 0;
};

/// x -> sign*x + offset on the real line, sign in {1,-1}.
struct AffineIsometry {
  double sign = 1.0;
  double offset = 0.0;
  double operator()(double x) const { return sign * x + offset; }
};

struct Generator {
  std::string name;
  std::function<State(const State&)> apply;
  std::optional<AffineIsometry> affine;

  static Generator reflect_about(double centre);
  static Generator translate(double by);
  static Generator custom(std::string name, std::function<State(const State&)> fn);
};

class SymmetryGroup {
 public:
  using Invariant = std::function<std::vector<double>(const State&)>;

  SymmetryGroup(StateSpace space, std::vector<Generator> generators, Invariant invariant,
                std::string description);
  /// Group generated by affine isometries; the invariant is the canonical
  /// representative of the orbit.
  static SymmetryGroup isometries(StateSpace space, std::vector<Generator> generators,
                                  std::string description);
  static SymmetryGroup identity(StateSpace space);

  const StateSpace& space() const { return space_; }
  const std::vector<Generator>& generators() const { return generators_; }
  std::vector<double> invariant(const State& s) const { return invariant_(s); }
  const std::string& description() const { return description_; }
  bool all_affine() const;

 private:
  StateSpace space_;
  std::vector<Generator> generators_;
  Invariant invariant_;
  std::string description_;
};

using RelationWitness = std::variant<FinitePartition, SymmetryGroup>;

inline constexpr double kInvariantTolerance = 1e-12;

bool relation_related(const RelationWitness& w, const State& x, const State& y);
std::string describe(const RelationWitness& w);

/// Canonical orbit feature of x under the group generated by affine isometries.
double affine_orbit_canonical(const std::vector<AffineIsometry>& gens, double x);

// ---------------------------------------------------------------------------
// Statistical evidence

struct EstimateWithCI {
  double mean = 0.0;
  double std_err = 0.0;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
  /// Computed by exact enumeration rather than sampling; std_err is 0.
  bool exact = false;
};

}  // namespace fdbisim
