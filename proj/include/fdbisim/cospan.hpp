#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdbisim/bisim.hpp"
#include "fdbisim/embed.hpp"
#include "fdbisim/mc.hpp"

namespace fdbisim::cospan {

/// A quotient that cannot be formed: obs or kernel disagree inside a class.
class ConstructionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Map between processes meant to commute with obs and push the trajectory
/// law of the source onto that of the target.
struct FDHom {
  std::string name;
  mc::ProcessModel source;
  mc::ProcessModel target;
  std::function<State(const State&)> map;
  /// Maps of the source onto itself that the hom cannot tell apart; they
  /// generate its kernel relation.
  std::vector<Generator> deck;
  /// Set when both ends are embedded LMPs and the map acts on bases only,
  /// keeping the clock.
  std::optional<std::vector<std::size_t>> base_map;

  State operator()(const State& x) const { return map(x); }
};

/// g after f. Deck transformations of the composite are not derived; pass
/// them when known.
FDHom compose(const FDHom& g, const FDHom& f, std::vector<Generator> deck = {});

FDHom identity_hom(const mc::ProcessModel& m);

/// Hom between embedded LMPs given by a map of base states.
FDHom finite_hom(const embed::EmbeddedProcess& source, const embed::EmbeddedProcess& target,
                 std::vector<std::size_t> base_map, std::string name);

/// Statistical check: obs commutes exactly on the grid, and for each grid
/// state the one-time marginals at each time and the two-time marginals at
/// consecutive times of map(source path from x) and of the target path from
/// map(x) pass a chi-squared test at z_crit.
bisim::CheckReport verify_hom(const FDHom& h, const std::vector<State>& grid, const std::vector<double>& times,
                              std::size_t n, std::uint64_t seed, double z_crit = mc::kDefaultZCrit,
                              double grid_step = 1e-2);

/// Exact check for homs between embedded LMPs: labels commute and
/// tau_target(h(z), w) equals the source mass of the fibre over w.
bisim::CheckReport verify_finite_hom(const FDHom& h);

// ---------------------------------------------------------------------------
// The four-process example

/// Brownian motion with the integers marked.
mc::ProcessModel line_model();
/// Reflected motion on [0,1] with 0 and 1 marked.
mc::ProcessModel unit_model();
/// Reflected motion on [0,1/2] with 0 marked.
mc::ProcessModel half_model();
/// Motion on the circle of radius 1/(2 pi), angle 0 marked.
mc::ProcessModel circle_model();

double phi1(double theta);  // circle -> [0,1/2], |theta| / 2pi
double phi2(double x);      // [0,1] -> [0,1/2], fold at 1/2
double phi3(double x);      // line -> circle, 2pi (x - nearest integer), lower on ties
double phi4(double x);      // line -> [0,1], triangle wave of period 2

/// phi1..phi4 in that order, then phi2 o phi4 and phi1 o phi3.
std::vector<FDHom> builtin_homs();

/// x ~ y iff h(x) = h(y); the deck transformations are its generators.
SymmetryGroup hom_kernel_bisim(const FDHom& h);

// ---------------------------------------------------------------------------
// Finite pushouts and cospans

struct Pushout {
  embed::EmbeddedProcess glued;
  FDHom phi1;  // from the target of f
  FDHom phi3;  // from the target of g
  /// Class of each state of the disjoint union (target of f first).
  std::vector<std::size_t> class_of;
};

/// Glues the targets of f: E2 -> E1 and g: E2 -> E3 along E2. Throws
/// PreconditionError unless f and g are verified finite homs from the same
/// source, ConstructionError naming the class if the quotient is ill-defined.
Pushout pushout_finite(const FDHom& f, const FDHom& g);

/// The map out of the pushout induced by a cocone (psi1, psi3), looked up on
/// class representatives. nullopt if the cocone does not commute
/// (psi1 o f != psi3 o g), if the lookup is inconsistent, or if the result is
/// not a hom.
std::optional<FDHom> mediating_map(const Pushout& p, const FDHom& f, const FDHom& g, const FDHom& psi1,
                                   const FDHom& psi3);

/// Exhaustive universal-property check: every cocone (psi1, psi3) into each
/// target, found by enumerating all base maps, must factor through exactly
/// one hom out of the pushout, and that hom must be the mediating map.
struct UniversalReport {
  std::size_t targets = 0;
  std::size_t cocones = 0;
  std::size_t failures = 0;
  bool passed() const { return failures == 0; }
};
UniversalReport check_universal_property(const Pushout& p, const FDHom& f, const FDHom& g,
                                         const std::vector<embed::EmbeddedProcess>& targets);

struct Cospan {
  embed::EmbeddedProcess apex;
  FDHom f;
  FDHom g;
};

/// Quotient of the disjoint union by w (states of a first); f and g are the
/// induced maps. Throws PreconditionError unless w is a DT-bisimulation of
/// the union, ConstructionError if the three relation/equality
/// correspondences fail.
Cospan cospan_from_bisim(const embed::EmbeddedProcess& a, const embed::EmbeddedProcess& b, const FinitePartition& w);

}  // namespace fdbisim::cospan
