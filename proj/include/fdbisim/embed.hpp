#pragma once

#include <map>
#include <memory>
#include <vector>

#include "fdbisim/bisim.hpp"
#include "fdbisim/core.hpp"
#include "fdbisim/lmp.hpp"
#include "fdbisim/mc.hpp"

namespace fdbisim::embed {

/// A finite LMP run in continuous time on X x [0,1): the clock advances at
/// unit speed and the base takes one kernel step each time it wraps.
struct EmbeddedProcess {
  std::shared_ptr<const lmp::FiniteLMP> base;
  mc::ProcessModel model;

  std::size_t size() const { return base->size(); }
};

/// obs(x, s) is the label of x; one proposition per LMP proposition.
EmbeddedProcess embed_lmp(lmp::FiniteLMP l, double horizon = mc::kDefaultHorizon);

/// Clock value reached from s after time t, in [0,1).
double clock_after(double s, double t);

/// P_t((x, s), . ): all mass sits on the slice at clock_after(s, t).
struct KernelRow {
  double clock = 0.0;
  std::vector<double> mass;
  double death = 0.0;
};
KernelRow kernel(const EmbeddedProcess& e, const ClockedState& from, double t);
double kernel_mass(const EmbeddedProcess& e, const ClockedState& from, double t, const StateSet& c);

/// Exact probability that the labels seen at times t_0 < t_1 < ... spell the
/// given word (a dead entry matches the cemetery).
double word_probability(const EmbeddedProcess& e, const ClockedState& from, const mc::ObsWordEquals& word);

/// Obs-words at integer times 0..k for k < max_length over the labels that
/// occur, plus DeadAt(k) for k = 1..max_length.
std::vector<mc::EventSpec> cylinder_events(const EmbeddedProcess& e, std::size_t max_length = 4);

/// Equivalence on X x [0,1) that relates states only at equal clocks: a
/// partition of X for each listed clock and a default partition for every
/// other clock.
class ClockedRelation {
 public:
  explicit ClockedRelation(FinitePartition everywhere);

  static ClockedRelation identity(std::size_t n) { return ClockedRelation(FinitePartition::identity(n)); }

  /// Replaces the partition used at exactly this clock.
  ClockedRelation& set_slice(double clock, FinitePartition p);

  std::size_t size() const { return default_.size(); }
  const FinitePartition& default_slice() const { return default_; }
  const std::map<double, FinitePartition>& slices() const { return slices_; }
  const FinitePartition& at(double clock) const;

  bool related(const ClockedState& a, const ClockedState& b) const;
  /// Related at one clock implies related at every clock.
  bool time_coherent() const;

  /// The same relation as a witness with invariant (block at clock, clock)
  /// and generators that cycle each block at its clocks.
  SymmetryGroup witness() const;

  friend bool operator==(const ClockedRelation&, const ClockedRelation&) = default;

 private:
  FinitePartition default_;
  std::map<double, FinitePartition> slices_;
};

/// ((x,s),(y,s)) related iff x and y are. Throws PreconditionError if p is
/// not a DT-bisimulation of l.
ClockedRelation lift_dt_to_ct(const lmp::FiniteLMP& l, const FinitePartition& p);

/// Smallest time-coherent equivalence containing r: pairs related at some
/// clock become related at every clock, then transitively closed.
ClockedRelation time_coherent_closure(const ClockedRelation& r);

/// Exact bisimulation check on the embedding: labels agree on related pairs
/// and, for every related pair at every clock of r, the masses of all
/// R-closed cylinder sets over the next `depth` kernel steps agree. Sets are
/// closed under the slice at the clock they are observed at; taking every
/// set to be X gives the death events.
bisim::CheckReport verify_embedded_bisim(const EmbeddedProcess& e, const ClockedRelation& r, std::size_t depth = 3);

/// x ~ y iff ((x,s),(y,s)) related. Throws PreconditionError if r is not
/// time-coherent or fails verify_embedded_bisim.
FinitePartition project_ct_to_dt(const EmbeddedProcess& e, const ClockedRelation& r);

/// The equivalence theorem on one LMP: the greatest DT-bisimulation lifts to
/// a verified bisimulation of the embedding, projects back to itself, and
/// relates (x,t),(y,t) exactly when x and y are DT-bisimilar, for each t.
struct TheoremReport {
  bool lift_verified = false;
  bool round_trip = false;
  bool biconditional = false;
  std::size_t pairs_checked = 0;
  bool passed() const { return lift_verified && round_trip && biconditional; }
};
TheoremReport embedding_theorem(const lmp::FiniteLMP& l, const std::vector<double>& t_grid);

}  // namespace fdbisim::embed
