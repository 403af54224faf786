#include "fdbisim/core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace fdbisim {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string fmt_num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

bool is_integer(double x) { return std::isfinite(x) && x == std::floor(x); }

}  // namespace

double as_real(const State& s) {
  if (const auto* v = std::get_if<double>(&s)) return *v;
  throw DomainError("state " + to_string(s) + " is not real-valued");
}

std::string to_string(const State& s) {
  return std::visit(overloaded{
                        [](double v) { return fmt_num(v); },
                        [](const BranchPoint& b) { return fmt_num(b.pos) + ":" + std::to_string(b.branch); },
                        [](const ClockedState& c) { return std::to_string(c.base) + "@" + fmt_num(c.clock); },
                        [](Cemetery) { return std::string("\xE2\x88\x82"); },
                    },
                    s);
}

double wrap_angle(double theta) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(theta + std::numbers::pi, two_pi);
  if (r <= 0.0) r += two_pi;
  return r - std::numbers::pi;
}

// ---------------------------------------------------------------------------

StateSpace::StateSpace(Kind kind) : kind_(std::move(kind)) {
  std::visit(overloaded{
                 [](const RealLine&) {},
                 [](const Interval& i) {
                   if (!(i.lo < i.hi)) throw DomainError("interval needs lo < hi");
                 },
                 [](const Circle& c) {
                   if (!(c.radius > 0.0)) throw DomainError("circle radius must be positive");
                 },
                 [](const FiniteSet& f) {
                   if (f.n < 1) throw DomainError("finite set needs at least one state");
                 },
                 [](const ClockedProduct& p) {
                   if (p.n < 1) throw DomainError("finite set needs at least one state");
                 },
                 [](const Branches& b) {
                   if (!(b.first_fork < b.second_fork && b.second_fork < b.end))
                     throw DomainError("fork geometry must satisfy first < second < end");
                 },
             },
             kind_);
}

bool StateSpace::contains(const State& s) const {
  if (is_cemetery(s)) return true;
  return std::visit(
      overloaded{
          [&](const RealLine&) { return std::holds_alternative<double>(s) && std::isfinite(std::get<double>(s)); },
          [&](const Interval& i) {
            const auto* v = std::get_if<double>(&s);
            if (!v) return false;
            if (i.boundary == Boundary::Reflecting) return *v >= i.lo && *v <= i.hi;
            return *v > i.lo && *v < i.hi;
          },
          [&](const Circle&) {
            const auto* v = std::get_if<double>(&s);
            return v && *v > -std::numbers::pi && *v <= std::numbers::pi;
          },
          [&](const FiniteSet& f) {
            // Finite states are carried as their index in a double.
            const auto* v = std::get_if<double>(&s);
            return v && is_integer(*v) && *v >= 0 && *v < static_cast<double>(f.n);
          },
          [&](const ClockedProduct& p) {
            const auto* c = std::get_if<ClockedState>(&s);
            return c && c->base < p.n && c->clock >= 0.0 && c->clock < 1.0;
          },
          [&](const Branches& g) {
            const auto* b = std::get_if<BranchPoint>(&s);
            if (!b) return false;
            switch (b->branch) {
              case 1: return b->pos == g.first_fork;
              case 2:
              case 3: return b->pos > g.first_fork && b->pos <= g.end;
              case 4: return b->pos >= g.first_fork && b->pos <= g.second_fork;
              case 5:
              case 6: return b->pos > g.second_fork && b->pos <= g.end;
              default: return false;
            }
          },
      },
      kind_);
}

std::string StateSpace::describe() const {
  return std::visit(overloaded{
                        [](const RealLine&) { return std::string("R"); },
                        [](const Interval& i) {
                          const char* b = i.boundary == Boundary::Reflecting  ? "reflecting"
                                          : i.boundary == Boundary::Absorbing ? "absorbing"
                                                                              : "open";
                          return "interval(" + fmt_num(i.lo) + "," + fmt_num(i.hi) + "," + b + ")";
                        },
                        [](const Circle& c) { return "circle(" + fmt_num(c.radius) + ")"; },
                        [](const FiniteSet& f) { return "finite(" + std::to_string(f.n) + ")"; },
                        [](const ClockedProduct& p) { return "finite(" + std::to_string(p.n) + ")x[0,1)"; },
                        [](const Branches&) { return std::string("fork"); },
                    },
                    kind_);
}

// ---------------------------------------------------------------------------

StateSet StateSet::empty() { return StateSet{}; }

StateSet StateSet::everything() { return empty().complement(); }

StateSet StateSet::point(double b) { return interval(b, b); }

StateSet StateSet::points(std::vector<double> bs) {
  StateSet s;
  std::sort(bs.begin(), bs.end());
  for (double b : bs) s.spans_.push_back({b, b, true, true});
  return s;
}

StateSet StateSet::interval(double lo, double hi, bool lo_closed, bool hi_closed) {
  if (lo > hi) throw DomainError("interval bounds out of order");
  StateSet s;
  s.spans_.push_back({lo, hi, lo_closed && std::isfinite(lo), hi_closed && std::isfinite(hi)});
  return s;
}

StateSet StateSet::integers() {
  StateSet s;
  s.integers_ = true;
  return s;
}

StateSet StateSet::branch_points(std::vector<BranchPoint> pts) {
  StateSet s;
  s.domain_ = Domain::Branch;
  for (const auto& p : pts) s.segments_.push_back({p.branch, p.pos, p.pos});
  return s;
}

StateSet StateSet::branch_segments(std::vector<BranchSegment> segs) {
  StateSet s;
  s.domain_ = Domain::Branch;
  s.segments_ = std::move(segs);
  return s;
}

StateSet StateSet::bases(std::vector<std::size_t> xs) {
  StateSet s;
  s.domain_ = Domain::Clocked;
  std::sort(xs.begin(), xs.end());
  s.bases_ = std::move(xs);
  return s;
}

StateSet StateSet::bases_at(std::vector<std::size_t> xs, double clock) {
  StateSet s = bases(std::move(xs));
  s.clock_ = clock;
  return s;
}

StateSet StateSet::complement() const {
  StateSet s = *this;
  s.complemented_ = !s.complemented_;
  return s;
}

bool StateSet::raw_contains_real(double x) const {
  if (integers_ && is_integer(x)) return true;
  for (const auto& sp : spans_) {
    const bool above = sp.lo_closed ? x >= sp.lo : x > sp.lo;
    const bool below = sp.hi_closed ? x <= sp.hi : x < sp.hi;
    if (above && below) return true;
  }
  return false;
}

bool StateSet::contains_real(double x) const { return raw_contains_real(x) != complemented_; }

bool StateSet::contains(const State& s) const {
  if (is_cemetery(s)) return false;
  bool raw = false;
  switch (domain_) {
    case Domain::Real: {
      const auto* v = std::get_if<double>(&s);
      if (!v) return false;
      raw = raw_contains_real(*v);
      break;
    }
    case Domain::Branch: {
      const auto* b = std::get_if<BranchPoint>(&s);
      if (!b) return false;
      raw = std::any_of(segments_.begin(), segments_.end(), [&](const BranchSegment& seg) {
        return seg.branch == b->branch && b->pos >= seg.lo && b->pos <= seg.hi;
      });
      break;
    }
    case Domain::Clocked: {
      const auto* c = std::get_if<ClockedState>(&s);
      if (!c) return false;
      raw = std::binary_search(bases_.begin(), bases_.end(), c->base) && (!clock_ || *clock_ == c->clock);
      break;
    }
  }
  return raw != complemented_;
}

std::pair<double, double> StateSet::gap_around(double x) const {
  if (!is_real()) throw UnsupportedError("gap_around needs a real state set");
  if (contains_real(x)) return {x, x};
  double lo = -kInf;
  double hi = kInf;
  if (!complemented_) {
    // x sits between members; the nearest member boundaries bound the gap.
    for (const auto& sp : spans_) {
      if (sp.hi <= x) lo = std::max(lo, sp.hi);
      if (sp.lo >= x) hi = std::min(hi, sp.lo);
    }
    if (integers_) {
      lo = std::max(lo, std::floor(x));
      hi = std::min(hi, std::floor(x) + 1.0);
    }
  } else {
    // x lies inside the raw set; the gap is the raw component holding x.
    if (integers_ && is_integer(x)) return {x, x};
    for (const auto& sp : spans_) {
      if (x >= sp.lo && x <= sp.hi) {
        lo = sp.lo;
        hi = sp.hi;
        break;
      }
    }
  }
  return {lo, hi};
}

bool StateSet::meets_range(double a, double b) const {
  if (!is_real()) throw UnsupportedError("meets_range needs a real state set");
  if (a == b) return contains_real(a);
  if (contains_real(a)) return true;
  auto [lo, hi] = gap_around(a);
  // The range starts in the gap (lo, hi); it meets the set iff it leaves the gap.
  if (b > a) return b > hi;
  return b < lo;
}

std::string StateSet::describe() const {
  std::string out;
  switch (domain_) {
    case Domain::Real: {
      std::vector<std::string> parts;
      for (const auto& sp : spans_) {
        if (sp.lo == sp.hi)
          parts.push_back("point " + fmt_num(sp.lo));
        else
          parts.push_back(std::string("interval ") + (sp.lo_closed ? "[" : "(") + fmt_num(sp.lo) + " " +
                          fmt_num(sp.hi) + (sp.hi_closed ? "]" : ")"));
      }
      if (integers_) parts.push_back("integers");
      if (parts.empty()) parts.push_back("empty");
      for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? " | " : "") + parts[i];
      break;
    }
    case Domain::Branch: {
      for (std::size_t i = 0; i < segments_.size(); ++i)
        out += (i ? " | " : "") + std::string("branch ") + std::to_string(segments_[i].branch) + " [" +
               fmt_num(segments_[i].lo) + " " + fmt_num(segments_[i].hi) + "]";
      if (segments_.empty()) out = "empty";
      break;
    }
    case Domain::Clocked: {
      out = "bases {";
      for (std::size_t i = 0; i < bases_.size(); ++i) out += (i ? "," : "") + std::to_string(bases_[i]);
      out += "}";
      if (clock_) out += "@" + fmt_num(*clock_);
      break;
    }
  }
  return complemented_ ? "not (" + out + ")" : out;
}

// ---------------------------------------------------------------------------

std::string to_string(const Observation& o, std::size_t n_props) {
  if (o.dead) return "\xE2\x88\x82";
  std::string s = "(";
  for (std::size_t i = 0; i < n_props; ++i) s += (i ? "," : "") + std::string((o.bits >> i) & 1U ? "1" : "0");
  return s + ")";
}

ObservationMap ObservationMap::from_sets(std::vector<std::string> names, std::vector<StateSet> sets) {
  if (names.size() != sets.size()) throw PreconditionError("one state set per proposition");
  if (names.size() > 64) throw PreconditionError("at most 64 propositions");
  ObservationMap m;
  m.names_ = std::move(names);
  m.sets_ = std::move(sets);
  m.eval_ = [sets = m.sets_](const State& s) {
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sets.size(); ++i)
      if (sets[i].contains(s)) bits |= std::uint64_t{1} << i;
    return bits;
  };
  for (std::size_t i = 0; i < m.sets_.size(); ++i)
    m.description_ += (i ? "; " : "") + m.names_[i] + ": " + m.sets_[i].describe();
  return m;
}

ObservationMap ObservationMap::custom(std::vector<std::string> names, Eval eval, std::string description) {
  ObservationMap m;
  m.names_ = std::move(names);
  m.eval_ = std::move(eval);
  m.description_ = std::move(description);
  return m;
}

Observation ObservationMap::operator()(const State& s) const {
  if (is_cemetery(s)) return Observation{0, true};
  return Observation{eval_ ? eval_(s) : 0, false};
}

std::optional<StateSet> ObservationMap::support() const {
  if (sets_.size() != 1) return std::nullopt;
  return sets_.front();
}

// ---------------------------------------------------------------------------

TrajectoryValue trajectory_value(const Trajectory& tr, double t) {
  if (t < 0.0) throw DomainError("trajectory queried at negative time");
  if (tr.values.empty()) throw DomainError("empty trajectory");
  auto it = std::upper_bound(tr.sample_times.begin(), tr.sample_times.end(), t);
  const auto idx = static_cast<std::size_t>(std::distance(tr.sample_times.begin(), it)) - 1;
  const bool past_end = t > tr.sample_times.back();
  return {tr.values[idx], past_end && !tr.absorbed()};
}

bool trajectory_well_formed(const Trajectory& tr) {
  if (tr.sample_times.empty() || tr.sample_times.size() != tr.values.size()) return false;
  if (tr.sample_times.front() != 0.0) return false;
  for (std::size_t i = 1; i < tr.sample_times.size(); ++i)
    if (!(tr.sample_times[i] > tr.sample_times[i - 1])) return false;
  bool dead = false;
  for (const auto& v : tr.values) {
    if (dead && !is_cemetery(v)) return false;
    dead = dead || is_cemetery(v);
  }
  return true;
}

// ---------------------------------------------------------------------------

FinitePartition::FinitePartition(std::size_t n, const std::vector<std::vector<std::size_t>>& blocks) {
  std::vector<std::size_t> labels(n, n);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (blocks[b].empty()) throw DomainError("partition has an empty block");
    for (std::size_t x : blocks[b]) {
      if (x >= n) throw DomainError("partition names state " + std::to_string(x) + " outside 0.." +
                                    std::to_string(n - 1));
      if (labels[x] != n) throw DomainError("partition blocks overlap at state " + std::to_string(x));
      labels[x] = b;
    }
  }
  for (std::size_t x = 0; x < n; ++x)
    if (labels[x] == n) throw DomainError("partition does not cover state " + std::to_string(x));
  *this = from_labels(labels);
}

FinitePartition FinitePartition::identity(std::size_t n) {
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i;
  return from_labels(labels);
}

FinitePartition FinitePartition::from_labels(const std::vector<std::size_t>& labels) {
  FinitePartition p;
  p.block_of_.resize(labels.size());
  std::vector<std::pair<std::size_t, std::size_t>> seen;  // label -> canonical id
  for (std::size_t x = 0; x < labels.size(); ++x) {
    auto it = std::find_if(seen.begin(), seen.end(), [&](const auto& e) { return e.first == labels[x]; });
    if (it == seen.end()) {
      seen.emplace_back(labels[x], seen.size());
      p.block_of_[x] = seen.size() - 1;
    } else {
      p.block_of_[x] = it->second;
    }
  }
  p.n_blocks_ = seen.size();
  return p;
}

std::vector<std::vector<std::size_t>> FinitePartition::blocks() const {
  std::vector<std::vector<std::size_t>> out(n_blocks_);
  for (std::size_t x = 0; x < block_of_.size(); ++x) out[block_of_[x]].push_back(x);
  return out;
}

bool FinitePartition::refines(const FinitePartition& other) const {
  if (other.size() != size()) return false;
  for (std::size_t x = 0; x < size(); ++x)
    for (std::size_t y = x + 1; y < size(); ++y)
      if (related(x, y) && !other.related(x, y)) return false;
  return true;
}

std::string FinitePartition::describe() const {
  std::string s;
  for (const auto& b : blocks()) {
    s += "{";
    for (std::size_t i = 0; i < b.size(); ++i) s += (i ? "," : "") + std::to_string(b[i]);
    s += "}";
  }
  return s;
}

// ---------------------------------------------------------------------------

Generator Generator::reflect_about(double centre) {
  AffineIsometry a{-1.0, 2.0 * centre};
  return Generator{"reflect " + fmt_num(centre), [a](const State& s) -> State {
                     if (is_cemetery(s)) return s;
                     return a(as_real(s));
                   },
                   a};
}

Generator Generator::translate(double by) {
  AffineIsometry a{1.0, by};
  return Generator{"translate " + fmt_num(by), [a](const State& s) -> State {
                     if (is_cemetery(s)) return s;
                     return a(as_real(s));
                   },
                   a};
}

Generator Generator::custom(std::string name, std::function<State(const State&)> fn) {
  return Generator{std::move(name), std::move(fn), std::nullopt};
}

namespace {

double real_gcd(double a, double b) {
  a = std::fabs(a);
  b = std::fabs(b);
  const double eps = 1e-9 * std::max(a, b);
  while (b > eps) {
    double r = std::fmod(a, b);
    if (r > b - eps) r = 0.0;
    a = b;
    b = r;
  }
  return a;
}

double snapped_mod(double x, double p) {
  double r = std::fmod(x, p);
  if (r < 0) r += p;
  if (p - r < 1e-12 * std::max(1.0, std::fabs(x))) r = 0.0;
  return r;
}

}  // namespace

double affine_orbit_canonical(const std::vector<AffineIsometry>& gens, double x) {
  double period = 0.0;
  std::optional<double> reflection_centre;
  for (const auto& g : gens) {
    if (g.sign > 0) {
      if (g.offset != 0.0) period = period == 0.0 ? std::fabs(g.offset) : real_gcd(period, g.offset);
    } else {
      const double c = g.offset / 2.0;
      if (!reflection_centre) {
        reflection_centre = c;
      } else if (c != *reflection_centre) {
        const double shift = 2.0 * (c - *reflection_centre);
        period = period == 0.0 ? std::fabs(shift) : real_gcd(period, shift);
      }
    }
  }
  if (!reflection_centre) return period == 0.0 ? x : snapped_mod(x, period);
  const double u = x - *reflection_centre;
  if (period == 0.0) return std::fabs(u);
  const double r = snapped_mod(u, period);
  return std::min(r, period - r);
}

SymmetryGroup::SymmetryGroup(StateSpace space, std::vector<Generator> generators, Invariant invariant,
                             std::string description)
    : space_(std::move(space)),
      generators_(std::move(generators)),
      invariant_(std::move(invariant)),
      description_(std::move(description)) {}

SymmetryGroup SymmetryGroup::isometries(StateSpace space, std::vector<Generator> generators,
                                        std::string description) {
  std::vector<AffineIsometry> maps;
  for (const auto& g : generators) {
    if (!g.affine) throw PreconditionError("generator '" + g.name + "' is not an affine isometry");
    maps.push_back(*g.affine);
  }
  Invariant inv = [maps](const State& s) -> std::vector<double> {
    if (is_cemetery(s)) return {kInf};
    return {affine_orbit_canonical(maps, as_real(s))};
  };
  return SymmetryGroup(std::move(space), std::move(generators), std::move(inv), std::move(description));
}

SymmetryGroup SymmetryGroup::identity(StateSpace space) {
  Invariant inv = [](const State& s) -> std::vector<double> {
    return std::visit(overloaded{
                          [](double v) { return std::vector<double>{v}; },
                          [](const BranchPoint& b) { return std::vector<double>{b.pos, double(b.branch)}; },
                          [](const ClockedState& c) { return std::vector<double>{double(c.base), c.clock}; },
                          [](Cemetery) { return std::vector<double>{kInf}; },
                      },
                      s);
  };
  return SymmetryGroup(std::move(space), {}, std::move(inv), "identity");
}

bool SymmetryGroup::all_affine() const {
  return std::all_of(generators_.begin(), generators_.end(), [](const Generator& g) { return g.affine.has_value(); });
}

bool relation_related(const RelationWitness& w, const State& x, const State& y) {
  return std::visit(overloaded{
                        [&](const FinitePartition& p) {
                          auto index = [&](const State& s) -> std::size_t {
                            const auto* v = std::get_if<double>(&s);
                            if (!v || !is_integer(*v) || *v < 0 || *v >= static_cast<double>(p.size()))
                              throw DomainError("state " + to_string(s) + " outside the partitioned set");
                            return static_cast<std::size_t>(*v);
                          };
                          return p.related(index(x), index(y));
                        },
                        [&](const SymmetryGroup& g) {
                          if (!g.space().contains(x) || !g.space().contains(y))
                            throw DomainError("state outside the witness space " + g.space().describe());
                          const auto fx = g.invariant(x);
                          const auto fy = g.invariant(y);
                          if (fx.size() != fy.size()) return false;
                          for (std::size_t i = 0; i < fx.size(); ++i) {
                            if (fx[i] == fy[i]) continue;
                            if (!(std::fabs(fx[i] - fy[i]) <= kInvariantTolerance)) return false;
                          }
                          return true;
                        },
                    },
                    w);
}

std::string describe(const RelationWitness& w) {
  return std::visit(overloaded{
                        [](const FinitePartition& p) { return "partition " + p.describe(); },
                        [](const SymmetryGroup& g) { return g.description(); },
                    },
                    w);
}

}  // namespace fdbisim
