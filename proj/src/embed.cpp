#include "fdbisim/embed.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fdbisim::embed {

namespace {

constexpr double kSnap = 1e-9;
constexpr double kTolerance = 1e-9;

/// Kernel steps taken from clock s within time t.
std::size_t steps_after(double s, double t) { return static_cast<std::size_t>(std::floor(s + t + kSnap)); }

using Row = std::vector<double>;

Row step(const lmp::FiniteLMP& l, const Row& v) {
  Row out(l.size(), 0.0);
  for (std::size_t x = 0; x < l.size(); ++x) {
    if (v[x] == 0.0) continue;
    for (std::size_t y = 0; y < l.size(); ++y) out[y] += v[x] * l.tau(x, y);
  }
  return out;
}

double total(const Row& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

/// Union-find over {0..n-1}.
struct Joiner {
  std::vector<std::size_t> parent;
  explicit Joiner(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void join(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
  void join(const FinitePartition& p) {
    for (const auto& block : p.blocks())
      for (std::size_t i = 1; i < block.size(); ++i) join(block[0], block[i]);
  }
  FinitePartition partition() {
    std::vector<std::size_t> labels(parent.size());
    for (std::size_t i = 0; i < parent.size(); ++i) labels[i] = find(i);
    return FinitePartition::from_labels(labels);
  }
};

/// A clock that no slice of r pins, standing for all the others.
double generic_clock(const ClockedRelation& r) {
  double c = 0.5;
  while (r.slices().count(c)) c = std::nextafter(c, 1.0);
  return c;
}

std::vector<double> clocks_of(const ClockedRelation& r) {
  std::vector<double> out;
  for (const auto& [c, p] : r.slices()) out.push_back(c);
  out.push_back(generic_clock(r));
  return out;
}

/// Walks every sequence of unions of blocks of `sets` up to `depth` steps,
/// keeping the restricted mass vectors of all starts, and compares the
/// totals across related pairs. Stops at the first disagreement.
struct CylinderSearch {
  const lmp::FiniteLMP& l;
  const std::vector<std::vector<std::size_t>>& blocks;
  const std::vector<std::pair<std::size_t, std::size_t>>& pairs;
  std::size_t depth;
  std::size_t comparisons = 0;
  std::vector<std::size_t> failing_masks;
  std::pair<std::size_t, std::size_t> failing_pair{0, 0};
  double gap = 0.0;

  bool run(const std::vector<Row>& rows, std::vector<std::size_t>& masks) {
    if (masks.size() == depth) return true;
    std::vector<Row> moved;
    moved.reserve(rows.size());
    for (const auto& r : rows) moved.push_back(step(l, r));
    const std::size_t n_masks = std::size_t{1} << blocks.size();
    for (std::size_t mask = 1; mask < n_masks; ++mask) {
      std::vector<Row> next = moved;
      for (std::size_t b = 0; b < blocks.size(); ++b) {
        if (mask & (std::size_t{1} << b)) continue;
        for (auto& r : next)
          for (std::size_t z : blocks[b]) r[z] = 0.0;
      }
      masks.push_back(mask);
      for (const auto& [x, y] : pairs) {
        ++comparisons;
        const double d = std::fabs(total(next[x]) - total(next[y]));
        if (d > kTolerance) {
          failing_masks = masks;
          failing_pair = {x, y};
          gap = d;
          return false;
        }
      }
      if (!run(next, masks)) return false;
      masks.pop_back();
    }
    return true;
  }
};

std::string describe_sets(const std::vector<std::vector<std::size_t>>& blocks, const std::vector<std::size_t>& masks) {
  std::string out;
  for (std::size_t mask : masks) {
    out += "{";
    bool first = true;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      if (!(mask & (std::size_t{1} << b))) continue;
      for (std::size_t z : blocks[b]) {
        if (!first) out += ",";
        out += std::to_string(z);
        first = false;
      }
    }
    out += "}";
  }
  return out;
}

}  // namespace

EmbeddedProcess embed_lmp(lmp::FiniteLMP l, double horizon) {
  auto base = std::make_shared<const lmp::FiniteLMP>(std::move(l));
  const auto obs = ObservationMap::custom(
      base->ap_names(),
      [base](const State& s) -> std::uint64_t {
        const auto* c = std::get_if<ClockedState>(&s);
        if (!c) throw DomainError("embedded obs needs a clocked state, got " + to_string(s));
        return base->label(c->base);
      },
      "labels");
  return EmbeddedProcess{base, mc::ProcessModel(mc::EmbeddedLMP{base}, obs, horizon, horizon / 100.0)};
}

double clock_after(double s, double t) {
  const double u = s + t;
  double c = u - std::floor(u + kSnap);
  if (c < kSnap) c = 0.0;
  return c;
}

KernelRow kernel(const EmbeddedProcess& e, const ClockedState& from, double t) {
  if (from.base >= e.size() || !(from.clock >= 0.0 && from.clock < 1.0))
    throw DomainError("state " + to_string(State{from}) + " outside the embedded space");
  if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError("kernel time must be finite and non-negative");
  const auto tk = e.base->power(steps_after(from.clock, t));
  KernelRow row;
  row.clock = clock_after(from.clock, t);
  row.mass.resize(e.size());
  for (std::size_t y = 0; y < e.size(); ++y) row.mass[y] = tk(from.base, y);
  row.death = std::max(0.0, 1.0 - total(row.mass));
  return row;
}

double kernel_mass(const EmbeddedProcess& e, const ClockedState& from, double t, const StateSet& c) {
  const auto row = kernel(e, from, t);
  double m = c.contains(Cemetery{}) ? row.death : 0.0;
  for (std::size_t y = 0; y < e.size(); ++y)
    if (c.contains(ClockedState{y, row.clock})) m += row.mass[y];
  return m;
}

double word_probability(const EmbeddedProcess& e, const ClockedState& from, const mc::ObsWordEquals& word) {
  if (word.times.size() != word.values.size()) throw DomainError("word times and values differ in length");
  const auto& l = *e.base;
  Row v(l.size(), 0.0);
  v.at(from.base) = 1.0;
  std::size_t at_step = 0;
  double last = 0.0;
  for (std::size_t i = 0; i < word.times.size(); ++i) {
    const double t = word.times[i];
    if (t < last) throw DomainError("word times must be non-decreasing");
    last = t;
    const std::size_t k = steps_after(from.clock, t);
    const double before = total(v);
    for (; at_step < k; ++at_step) v = step(l, v);
    if (word.values[i].dead) {
      // Every later letter must be dead as well; the cemetery absorbs.
      for (std::size_t j = i + 1; j < word.values.size(); ++j)
        if (!word.values[j].dead) return 0.0;
      return std::max(0.0, before - total(v));
    }
    for (std::size_t z = 0; z < l.size(); ++z)
      if (l.label(z) != word.values[i].bits) v[z] = 0.0;
  }
  return total(v);
}

std::vector<mc::EventSpec> cylinder_events(const EmbeddedProcess& e, std::size_t max_length) {
  std::vector<std::uint64_t> labels = e.base->labels();
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  std::vector<mc::EventSpec> out;
  std::vector<std::size_t> digits;
  for (std::size_t len = 1; len <= max_length; ++len) {
    digits.assign(len, 0);
    while (true) {
      mc::ObsWordEquals w;
      for (std::size_t i = 0; i < len; ++i) {
        w.times.push_back(static_cast<double>(i));
        w.values.push_back(Observation{labels[digits[i]], false});
      }
      out.push_back(std::move(w));
      std::size_t i = 0;
      while (i < len && ++digits[i] == labels.size()) digits[i++] = 0;
      if (i == len) break;
    }
  }
  for (std::size_t k = 1; k <= max_length; ++k) out.push_back(mc::DeadAt{static_cast<double>(k)});
  return out;
}

// ---------------------------------------------------------------------------
// ClockedRelation

ClockedRelation::ClockedRelation(FinitePartition everywhere) : default_(std::move(everywhere)) {}

ClockedRelation& ClockedRelation::set_slice(double clock, FinitePartition p) {
  if (!(clock >= 0.0 && clock < 1.0)) throw DomainError("clock must lie in [0,1)");
  if (p.size() != default_.size()) throw DomainError("slice partition has the wrong size");
  if (p == default_)
    slices_.erase(clock);
  else
    slices_[clock] = std::move(p);
  return *this;
}

const FinitePartition& ClockedRelation::at(double clock) const {
  const auto it = slices_.find(clock);
  return it == slices_.end() ? default_ : it->second;
}

bool ClockedRelation::related(const ClockedState& a, const ClockedState& b) const {
  if (a.base >= size() || b.base >= size()) throw DomainError("state outside the embedded space");
  return a.clock == b.clock && at(a.clock).related(a.base, b.base);
}

bool ClockedRelation::time_coherent() const { return slices_.empty(); }

SymmetryGroup ClockedRelation::witness() const {
  const auto self = std::make_shared<const ClockedRelation>(*this);
  std::vector<Generator> gens;
  auto add_cycles = [&](const FinitePartition& p, std::optional<double> clock) {
    for (const auto& block : p.blocks()) {
      if (block.size() < 2) continue;
      for (int dir : {1, -1}) {
        std::string name = (dir > 0 ? "cycle " : "uncycle ") + p.describe();
        if (clock) name += " at clock " + std::to_string(*clock);
        gens.push_back(Generator::custom(name, [self, block, clock, dir](const State& s) -> State {
          const auto* c = std::get_if<ClockedState>(&s);
          if (!c) return s;
          const bool here = clock ? c->clock == *clock : !self->slices().count(c->clock);
          if (!here) return s;
          const auto it = std::find(block.begin(), block.end(), c->base);
          if (it == block.end()) return s;
          const auto i = static_cast<std::size_t>(it - block.begin());
          const auto j = (i + block.size() + static_cast<std::size_t>(dir == 1 ? 1 : block.size() - 1)) % block.size();
          return ClockedState{block[j], c->clock};
        }));
      }
    }
  };
  add_cycles(default_, std::nullopt);
  for (const auto& [c, p] : slices_) add_cycles(p, c);
  return SymmetryGroup(
      StateSpace{ClockedProduct{size()}}, std::move(gens),
      [self](const State& s) -> std::vector<double> {
        const auto& c = std::get<ClockedState>(s);
        return {static_cast<double>(self->at(c.clock).block_of(c.base)), c.clock};
      },
      time_coherent() ? "lift of " + default_.describe() : "clocked relation over " + default_.describe());
}

ClockedRelation lift_dt_to_ct(const lmp::FiniteLMP& l, const FinitePartition& p) {
  if (p.size() != l.size()) throw DomainError("partition size does not match the LMP");
  if (!lmp::verify_dt_bisim(l, p)) throw PreconditionError("not a DT-bisimulation: " + p.describe());
  return ClockedRelation(p);
}

ClockedRelation time_coherent_closure(const ClockedRelation& r) {
  Joiner j(r.size());
  j.join(r.default_slice());
  for (const auto& [c, p] : r.slices()) j.join(p);
  return ClockedRelation(j.partition());
}

bisim::CheckReport verify_embedded_bisim(const EmbeddedProcess& e, const ClockedRelation& r, std::size_t depth) {
  if (r.size() != e.size()) throw DomainError("relation size does not match the process");
  const auto& l = *e.base;
  bisim::CheckReport rep;
  rep.check = "embedded_bisimulation";
  rep.details["depth"] = depth;
  rep.details["time_coherent"] = r.time_coherent();
  const auto clocks = clocks_of(r);

  for (double s : clocks) {
    const auto& ps = r.at(s);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t x = 0; x < l.size(); ++x)
      for (std::size_t y = x + 1; y < l.size(); ++y)
        if (ps.related(x, y)) pairs.emplace_back(x, y);
    for (const auto& [x, y] : pairs) {
      ++rep.comparisons;
      if (l.label(x) != l.label(y)) {
        rep.passed = false;
        rep.findings.push_back({"labels differ", ClockedState{x, s}, ClockedState{y, s}, 1.0});
        return rep;
      }
    }
    if (pairs.empty()) continue;
    std::vector<Row> start(l.size(), Row(l.size(), 0.0));
    for (std::size_t x = 0; x < l.size(); ++x) start[x][x] = 1.0;
    for (double c : clocks) {
      const auto blocks = r.at(c).blocks();
      CylinderSearch search{l, blocks, pairs, depth, 0, {}, {0, 0}, 0.0};
      std::vector<std::size_t> masks;
      const bool ok = search.run(start, masks);
      rep.comparisons += search.comparisons;
      if (!ok) {
        rep.passed = false;
        const auto [x, y] = search.failing_pair;
        rep.findings.push_back({"mass of " + describe_sets(blocks, search.failing_masks) + " observed at clock " +
                                    std::to_string(c) + " differs",
                                ClockedState{x, s}, ClockedState{y, s}, search.gap});
        return rep;
      }
    }
  }
  return rep;
}

FinitePartition project_ct_to_dt(const EmbeddedProcess& e, const ClockedRelation& r) {
  if (!r.time_coherent()) throw PreconditionError("relation is not time-coherent");
  const auto rep = verify_embedded_bisim(e, r);
  if (!rep.passed)
    throw PreconditionError("relation is not a bisimulation of the embedding: " + rep.findings.front().what);
  return r.default_slice();
}

TheoremReport embedding_theorem(const lmp::FiniteLMP& l, const std::vector<double>& t_grid) {
  TheoremReport rep;
  const auto e = embed_lmp(l);
  const auto greatest = lmp::dt_bisim_refine(l);
  const auto lifted = lift_dt_to_ct(l, greatest);
  rep.lift_verified = verify_embedded_bisim(e, lifted).passed;
  rep.round_trip = rep.lift_verified && project_ct_to_dt(e, lifted) == greatest;

  rep.biconditional = true;
  for (std::size_t x = 0; x < l.size(); ++x)
    for (std::size_t y = x + 1; y < l.size(); ++y) {
      const bool bisimilar = greatest.related(x, y);
      bool refuted = true;
      if (!bisimilar) {
        // Any bisimulation relating (x,t),(y,t) contains the lift and the
        // pair, hence their time-coherent closure; that closure must fail.
        Joiner j(l.size());
        j.join(greatest);
        j.join(x, y);
        refuted = !verify_embedded_bisim(e, ClockedRelation(j.partition())).passed;
      }
      for (double t : t_grid) {
        ++rep.pairs_checked;
        const double s = clock_after(0.0, t);
        const bool related = lifted.related(ClockedState{x, s}, ClockedState{y, s});
        if (related != bisimilar || (!bisimilar && !refuted)) rep.biconditional = false;
      }
    }
  return rep;
}

}  // namespace fdbisim::embed
