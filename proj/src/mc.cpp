#include "fdbisim/mc.hpp"

#include <algorithm>
#include <atomic>
#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>
#include <thread>

#include "fdbisim/stats.hpp"

namespace fdbisim::mc {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

constexpr std::size_t kChunk = 1024;
constexpr int kRefineDepth = 8;
constexpr double kTimeSnap = 1e-9;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  double normal() { return normal_(eng_); }
  double uniform() { return uniform_(eng_); }

 private:
  boost::random::mt19937_64 eng_;
  boost::random::normal_distribution<double> normal_;
  boost::random::uniform_01<double> uniform_;
};

std::atomic<unsigned> g_workers{0};

template <class Fn>
void for_each_chunk(std::size_t n_chunks, Fn&& fn) {
  const unsigned workers = std::min<std::size_t>(worker_count(), n_chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) fn(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      try {
        for (std::size_t c = next++; c < n_chunks; c = next++) fn(c);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::size_t chunk_count(std::size_t n) { return (n + kChunk - 1) / kChunk; }

// Probability that a Brownian bridge from u to v with variance `var` touches
// the level b; both ends lie strictly on the same side of b.
double bridge_touch(double u, double v, double b, double var) {
  if (!std::isfinite(b)) return 0.0;
  const double e = 2.0 * (b - u) * (b - v) / var;
  return e > 40.0 ? 0.0 : std::exp(-e);
}

double gap_exit(double u, double v, double lo, double hi, double var) {
  const double p_lo = bridge_touch(u, v, lo, var);
  const double p_hi = bridge_touch(u, v, hi, var);
  return 1.0 - (1.0 - p_lo) * (1.0 - p_hi);
}

bool outside(double v, double lo, double hi) { return v <= lo || v >= hi; }

// ---------------------------------------------------------------------------
// One-dimensional diffusions: a free Brownian coordinate with drift, mapped
// into the state space, optionally killed on leaving (lo, hi).

struct Diffusion {
  enum class Map { Identity, Fold, Wrap };
  Map map = Map::Identity;
  double drift = 0.0;
  double scale = 1.0;
  double lo = -kInf;
  double hi = kInf;
  bool killing = false;

  State to_state(double w) const {
    switch (map) {
      case Map::Identity: return w;
      case Map::Fold: {
        const double len = hi - lo;
        double u = std::fmod(w - lo, 2.0 * len);
        if (u < 0) u += 2.0 * len;
        return lo + (u <= len ? u : 2.0 * len - u);
      }
      case Map::Wrap: return wrap_angle(w);
    }
    return w;
  }
};

std::optional<Diffusion> diffusion_of(const ProcessKind& kind) {
  return std::visit(overloaded{
                        [](const BrownianMotion&) -> std::optional<Diffusion> { return Diffusion{}; },
                        [](const DriftedBM& d) -> std::optional<Diffusion> {
                          Diffusion f;
                          f.drift = d.drift;
                          return f;
                        },
                        [](const AbsorbedBM& a) -> std::optional<Diffusion> {
                          Diffusion f;
                          f.lo = a.lo;
                          f.hi = a.hi;
                          f.killing = true;
                          return f;
                        },
                        [](const ReflectedBM& r) -> std::optional<Diffusion> {
                          Diffusion f;
                          f.map = Diffusion::Map::Fold;
                          f.lo = r.lo;
                          f.hi = r.hi;
                          return f;
                        },
                        [](const CircleBM& c) -> std::optional<Diffusion> {
                          Diffusion f;
                          f.map = Diffusion::Map::Wrap;
                          f.scale = 1.0 / c.radius;
                          return f;
                        },
                        [](const auto&) -> std::optional<Diffusion> { return std::nullopt; },
                    },
                    kind);
}

// ---------------------------------------------------------------------------
// Embedded LMP paths: the base state jumps when the clock wraps.

struct ClockedPath {
  double clock0 = 0.0;
  std::size_t base0 = 0;
  std::vector<double> jump_times;  // times at which the clock wraps
  std::vector<std::optional<std::size_t>> bases;  // base after each jump; nullopt = dead

  State at(double t) const {
    const double u = clock0 + t;
    const double k = std::floor(u + kTimeSnap);
    double clock = u - k;
    if (clock < kTimeSnap) clock = 0.0;
    const auto jumps = static_cast<std::size_t>(k);
    if (jumps == 0) return ClockedState{base0, clock};
    if (jumps > bases.size()) {
      if (!bases.empty() && !bases.back()) return Cemetery{};
      throw DomainError("embedded path queried past its simulated range");
    }
    const auto& b = bases[jumps - 1];
    if (!b) return Cemetery{};
    return ClockedState{*b, clock};
  }
};

ClockedPath sample_clocked_path(const lmp::FiniteLMP& l, const ClockedState& x0, double t_end, Rng& rng) {
  ClockedPath p;
  p.clock0 = x0.clock;
  p.base0 = x0.base;
  std::size_t cur = x0.base;
  for (double k = 1.0; k - x0.clock <= t_end + kTimeSnap; k += 1.0) {
    p.jump_times.push_back(k - x0.clock);
    const double u = rng.uniform();
    double acc = 0.0;
    std::optional<std::size_t> next;
    for (std::size_t y = 0; y < l.size(); ++y) {
      acc += l.tau(cur, y);
      if (u < acc) {
        next = y;
        break;
      }
    }
    p.bases.push_back(next);
    if (!next) break;
    cur = *next;
  }
  return p;
}

// Exact evaluation of an event on a path given as a function of time, using
// candidate instants at which membership may change.
bool holds_on_function(const std::function<State(double)>& at, const ObservationMap& obs, const EventSpec& ev,
                       const std::vector<double>& change_times) {
  return std::visit(
      overloaded{
          [&](const HitSetBefore& h) {
            if (h.t <= 0.0) return false;
            std::vector<double> cand{0.0};
            for (double c : change_times)
              if (c >= 0.0 && c < h.t) cand.push_back(c);
            std::sort(cand.begin(), cand.end());
            cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
            const std::size_t base = cand.size();
            for (std::size_t i = 0; i < base; ++i) {
              const double next = i + 1 < base ? cand[i + 1] : h.t;
              cand.push_back(0.5 * (cand[i] + next));
            }
            return std::any_of(cand.begin(), cand.end(), [&](double s) { return h.target.contains(at(s)); });
          },
          [&](const ValueAtTimeIn& v) { return v.set.contains(at(v.t)); },
          [&](const DeadAt& d) { return is_cemetery(at(d.t)); },
          [&](const ObsWordEquals& w) {
            for (std::size_t i = 0; i < w.times.size(); ++i)
              if (obs(at(w.times[i])) != w.values[i]) return false;
            return true;
          },
      },
      ev);
}

std::vector<double> clocked_change_times(const ClockedPath& p, const EventSpec& ev) {
  std::vector<double> out = p.jump_times;
  if (const auto* h = std::get_if<HitSetBefore>(&ev)) {
    if (const auto c = h->target.pinned_clock()) {
      // Instants at which the clock shows the pinned value.
      for (double t = *c - p.clock0; t < h->t; t += 1.0)
        if (t >= 0.0) out.push_back(t);
    }
  }
  return out;
}

void validate_event(const ProcessModel& m, const EventSpec& ev) {
  const double t = event_horizon(ev);
  if (t < 0.0) throw DomainError("event time is negative");
  if (t > m.horizon() + 1e-12) throw DomainError("event time " + fmt(t) + " is beyond the model horizon " + fmt(m.horizon()));
  if (const auto* w = std::get_if<ObsWordEquals>(&ev))
    if (w->times.size() != w->values.size()) throw DomainError("observation word needs one value per time");
}

State validated_start(const ProcessModel& m, const State& x0) {
  if (is_cemetery(x0) || !m.space().contains(x0))
    throw DomainError("start state " + to_string(x0) + " is outside " + m.space().describe());
  return x0;
}

// ---------------------------------------------------------------------------
// Stepping a diffusion through a set of checkpoints with hitting monitors.

struct Monitor {
  double deadline;
  double lo;
  double hi;
  bool hit;
};

struct DiffusionPlan {
  Diffusion f;
  std::vector<double> checkpoints;  // starts with 0
  std::vector<const HitSetBefore*> hits;
  bool exact_jumps = false;
  double h = 0.0;
};

DiffusionPlan make_plan(const ProcessModel& m, const Diffusion& f, std::span<const EventSpec> events,
                        std::span<const double> extra_times) {
  DiffusionPlan p;
  p.f = f;
  p.h = m.grid_step();
  p.checkpoints.push_back(0.0);
  for (double t : extra_times) p.checkpoints.push_back(t);
  for (const auto& ev : events) {
    std::visit(overloaded{
                   [&](const HitSetBefore& h) {
                     if (f.map != Diffusion::Map::Identity)
                       throw UnsupportedError("hitting events are supported only for unreflected motion on the line");
                     if (!h.target.is_real()) throw DomainError("hitting target is not a set of reals");
                     p.hits.push_back(&h);
                     p.checkpoints.push_back(h.t);
                   },
                   [&](const ValueAtTimeIn& v) { p.checkpoints.push_back(v.t); },
                   [&](const DeadAt& d) { p.checkpoints.push_back(d.t); },
                   [&](const ObsWordEquals& w) {
                     for (double t : w.times) p.checkpoints.push_back(t);
                   },
               },
               ev);
  }
  std::sort(p.checkpoints.begin(), p.checkpoints.end());
  p.checkpoints.erase(std::unique(p.checkpoints.begin(), p.checkpoints.end()), p.checkpoints.end());
  p.exact_jumps = p.hits.empty() && !f.killing;
  return p;
}

// Fills `at` with the state at each checkpoint and `monitors` with hit flags.
void run_diffusion(const DiffusionPlan& p, double w0, const State& x0, Rng& rng, std::vector<State>& at,
                   std::vector<Monitor>& monitors) {
  const Diffusion& f = p.f;
  at.assign(p.checkpoints.size(), Cemetery{});
  at[0] = x0;
  monitors.clear();
  for (const auto* h : p.hits) {
    Monitor mon{h->t, 0.0, 0.0, false};
    if (h->t > 0.0 && h->target.contains_real(w0)) {
      mon.hit = true;
    } else {
      auto [lo, hi] = h->target.gap_around(w0);
      mon.lo = lo;
      mon.hi = hi;
    }
    monitors.push_back(mon);
  }
  double t = 0.0;
  double w = w0;
  std::size_t k = 0;
  std::size_t next_cp = 1;
  const double s2 = f.scale * f.scale;
  const double sd_h = f.scale * std::sqrt(p.h);
  while (next_cp < p.checkpoints.size()) {
    const double cp = p.checkpoints[next_cp];
    double t_new;
    if (p.exact_jumps) {
      t_new = cp;
    } else {
      const double grid_next = static_cast<double>(k + 1) * p.h;
      if (grid_next >= cp - kTimeSnap * std::max(1.0, cp)) {
        t_new = cp;
        if (grid_next <= cp + kTimeSnap * std::max(1.0, cp)) ++k;
      } else {
        t_new = grid_next;
        ++k;
      }
    }
    const double dt = t_new - t;
    const bool regular = dt == p.h;
    const double w_new = w + f.drift * dt + (regular ? sd_h : f.scale * std::sqrt(dt)) * rng.normal();
    const double var = s2 * dt;
    for (auto& mon : monitors) {
      if (mon.hit || t >= mon.deadline) continue;
      if (outside(w_new, mon.lo, mon.hi)) {
        mon.hit = true;
      } else {
        const double p_hit = gap_exit(w, w_new, mon.lo, mon.hi, var);
        if (p_hit > 0.0 && rng.uniform() < p_hit) mon.hit = true;
      }
    }
    if (f.killing) {
      const double p_exit = outside(w_new, f.lo, f.hi) ? 1.0 : gap_exit(w, w_new, f.lo, f.hi, var);
      if (p_exit > 0.0 && (p_exit >= 1.0 || rng.uniform() < p_exit)) return;  // remaining checkpoints stay dead
    }
    t = t_new;
    w = w_new;
    if (t == cp) at[next_cp++] = f.to_state(w);
  }
}

std::size_t checkpoint_index(const std::vector<double>& cps, double t) {
  auto it = std::lower_bound(cps.begin(), cps.end(), t);
  return static_cast<std::size_t>(it - cps.begin());
}

bool holds_on_diffusion(const DiffusionPlan& p, const ObservationMap& obs, const EventSpec& ev,
                        const std::vector<State>& at, const std::vector<Monitor>& monitors, std::size_t& hit_index) {
  return std::visit(overloaded{
                        [&](const HitSetBefore&) { return monitors[hit_index++].hit; },
                        [&](const ValueAtTimeIn& v) { return v.set.contains(at[checkpoint_index(p.checkpoints, v.t)]); },
                        [&](const DeadAt& d) { return is_cemetery(at[checkpoint_index(p.checkpoints, d.t)]); },
                        [&](const ObsWordEquals& w) {
                          for (std::size_t i = 0; i < w.times.size(); ++i)
                            if (obs(at[checkpoint_index(p.checkpoints, w.times[i])]) != w.values[i]) return false;
                          return true;
                        },
                    },
                    ev);
}

// Offset in [0, dt] of the first exit from (lo, hi) of a bridge from u to v,
// or -1 when it stays inside. Locates the exit by recursive midpoint sampling.
double first_exit(double u, double v, double var, double dt, double lo, double hi, Rng& rng, int depth) {
  const bool ends_outside = outside(v, lo, hi);
  if (!ends_outside) {
    const double p = gap_exit(u, v, lo, hi, var);
    if (p < 1e-15) return -1.0;
    if (depth == 0) return rng.uniform() < p ? 0.5 * dt : -1.0;
  } else if (depth == 0) {
    return 0.5 * dt;
  }
  const double mid = 0.5 * (u + v) + 0.5 * std::sqrt(var) * rng.normal();
  const double left = first_exit(u, mid, 0.5 * var, 0.5 * dt, lo, hi, rng, depth - 1);
  if (left >= 0.0) return left;
  const double right = first_exit(mid, v, 0.5 * var, 0.5 * dt, lo, hi, rng, depth - 1);
  return right >= 0.0 ? 0.5 * dt + right : -1.0;
}

double hitting_time_once(const Diffusion& f, double w0, const StateSet& target, double t_max, double h, Rng& rng) {
  if (target.contains_real(w0)) return 0.0;
  const auto [lo, hi] = target.gap_around(w0);
  const double s2 = f.scale * f.scale;
  double t = 0.0;
  double w = w0;
  for (std::size_t k = 0;; ++k) {
    const double t_new = std::min(static_cast<double>(k + 1) * h, t_max);
    const double dt = t_new - t;
    if (dt <= 0.0) return kInf;
    const double w_new = w + f.drift * dt + f.scale * std::sqrt(dt) * rng.normal();
    const double var = s2 * dt;
    const double off = first_exit(w, w_new, var, dt, lo, hi, rng, kRefineDepth);
    if (off >= 0.0) return t + off;
    if (f.killing) {
      const double p_exit = outside(w_new, f.lo, f.hi) ? 1.0 : gap_exit(w, w_new, f.lo, f.hi, var);
      if (p_exit > 0.0 && (p_exit >= 1.0 || rng.uniform() < p_exit)) return kInf;
    }
    t = t_new;
    w = w_new;
    if (t >= t_max) return kInf;
  }
}

}  // namespace

// ---------------------------------------------------------------------------

ProcessModel::ProcessModel(ProcessKind kind, ObservationMap obs, double horizon, double grid_step)
    : kind_(std::move(kind)), obs_(std::move(obs)), horizon_(horizon), grid_step_(grid_step) {
  if (!(horizon_ > 0.0) || !std::isfinite(horizon_)) throw DomainError("horizon must be positive and finite");
  if (!(grid_step_ > 0.0)) throw DomainError("grid_step must be positive");
  if (grid_step_ > horizon_ / 100.0 * (1.0 + 1e-12)) throw DomainError("grid_step must be at most horizon/100");
  std::visit(overloaded{
                 [](const AbsorbedBM& a) {
                   if (!(a.lo < a.hi) || !std::isfinite(a.lo)) throw DomainError("absorbing barriers need finite lo < hi");
                 },
                 [](const ReflectedBM& r) {
                   if (!(r.lo < r.hi) || !std::isfinite(r.hi)) throw DomainError("reflecting interval needs lo < hi");
                 },
                 [](const EmbeddedLMP& e) {
                   if (!e.lmp) throw DomainError("embedded process without an LMP");
                 },
                 [](const auto&) {},
             },
             kind_);
  (void)space();
}

StateSpace ProcessModel::space() const {
  return StateSpace(std::visit(overloaded{
                                   [](const AbsorbedBM& a) -> StateSpace::Kind {
                                     return Interval{a.lo, a.hi, Boundary::Absorbing};
                                   },
                                   [](const ReflectedBM& r) -> StateSpace::Kind {
                                     return Interval{r.lo, r.hi, Boundary::Reflecting};
                                   },
                                   [](const CircleBM& c) -> StateSpace::Kind { return Circle{c.radius}; },
                                   [](const ForkProcess& f) -> StateSpace::Kind {
                                     return Branches{f.geometry.first_fork, f.geometry.second_fork, f.geometry.end};
                                   },
                                   [](const EmbeddedLMP& e) -> StateSpace::Kind { return ClockedProduct{e.lmp->size()}; },
                                   [](const auto&) -> StateSpace::Kind { return RealLine{}; },
                               },
                               kind_));
}

std::string ProcessModel::name() const {
  return std::visit(overloaded{
                        [](const DeterministicDrift& d) { return "drift a=" + fmt(d.speed); },
                        [](const BrownianMotion&) { return std::string("bm"); },
                        [](const DriftedBM& d) { return "drifted_bm a=" + fmt(d.drift); },
                        [](const AbsorbedBM& a) { return "absorbed_bm lo=" + fmt(a.lo) + " hi=" + fmt(a.hi); },
                        [](const ReflectedBM& r) { return "reflected_bm lo=" + fmt(r.lo) + " hi=" + fmt(r.hi); },
                        [](const CircleBM& c) { return "circle_bm radius=" + fmt(c.radius); },
                        [](const ForkProcess&) { return std::string("fork"); },
                        [](const EmbeddedLMP& e) { return "embedded_lmp n=" + std::to_string(e.lmp->size()); },
                    },
                    kind_);
}

bool ProcessModel::enumerable() const {
  return std::holds_alternative<DeterministicDrift>(kind_) || std::holds_alternative<ForkProcess>(kind_);
}

ProcessModel ProcessModel::with_resolution(double horizon, double grid_step) const {
  return ProcessModel(kind_, obs_, horizon, grid_step);
}

ObservationMap fork_observation(const ForkGeometry& g) {
  return ObservationMap::from_sets(
      {"P", "Q"}, {StateSet::branch_points({{g.end, 2}, {g.end, 5}}), StateSet::branch_points({{g.end, 3}, {g.end, 6}})});
}

ProcessModel fork_model(const ForkGeometry& g) {
  const double horizon = g.end - g.first_fork + 10.0;
  return ProcessModel(ForkProcess{g}, fork_observation(g), horizon, horizon / 100.0);
}

// ---------------------------------------------------------------------------

std::string describe(const EventSpec& ev, std::size_t n_props) {
  return std::visit(overloaded{
                        [](const HitSetBefore& h) { return "hit {" + h.target.describe() + "} before t=" + fmt(h.t); },
                        [](const ValueAtTimeIn& v) { return "value at t=" + fmt(v.t) + " in {" + v.set.describe() + "}"; },
                        [](const DeadAt& d) { return "dead at t=" + fmt(d.t); },
                        [&](const ObsWordEquals& w) {
                          std::string s = "obs word";
                          for (std::size_t i = 0; i < w.times.size(); ++i)
                            s += " " + to_string(w.values[i], n_props) + "@" + fmt(w.times[i]);
                          return s;
                        },
                    },
                    ev);
}

double event_horizon(const EventSpec& ev) {
  return std::visit(overloaded{
                        [](const HitSetBefore& h) { return h.t; },
                        [](const ValueAtTimeIn& v) { return v.t; },
                        [](const DeadAt& d) { return d.t; },
                        [](const ObsWordEquals& w) {
                          double t = 0.0;
                          for (double s : w.times) t = std::max(t, s);
                          return t;
                        },
                    },
                    ev);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void set_worker_count(unsigned workers) { g_workers = workers; }

unsigned worker_count() {
  const unsigned w = g_workers;
  if (w > 0) return w;
  return std::max(1U, std::thread::hardware_concurrency());
}

// ---------------------------------------------------------------------------

std::vector<WeightedPath> enumerate_paths(const ProcessModel& m, const State& x0) {
  validated_start(m, x0);
  return std::visit(
      overloaded{
          [&](const DeterministicDrift& d) {
            const double x = as_real(x0);
            const double a = d.speed;
            return std::vector<WeightedPath>{{1.0, [x, a](double t) -> State { return x + a * t; }, {}}};
          },
          [&](const ForkProcess& f) {
            const ForkGeometry g = f.geometry;
            const BranchPoint p = std::get<BranchPoint>(x0);
            std::vector<WeightedPath> out;
            auto straight = [g](BranchPoint start, int branch) {
              return [g, start, branch](double t) -> State {
                if (t == 0.0) return start;
                return BranchPoint{std::min(start.pos + t, g.end), branch};
              };
            };
            switch (p.branch) {
              case 1:
                for (int b : {2, 3}) out.push_back({0.5, straight(p, b), {0.0, g.end - p.pos}});
                break;
              case 4:
                for (int b : {5, 6})
                  out.push_back({0.5,
                                 [g, p, b](double t) -> State {
                                   if (p.pos + t <= g.second_fork) return BranchPoint{p.pos + t, 4};
                                   return BranchPoint{std::min(p.pos + t, g.end), b};
                                 },
                                 {g.second_fork - p.pos, g.end - p.pos}});
                break;
              default:
                out.push_back({1.0, straight(p, p.branch), {g.end - p.pos}});
            }
            return out;
          },
          [](const auto&) -> std::vector<WeightedPath> {
            throw UnsupportedError("only deterministic and fork models have enumerable trajectories");
          },
      },
      m.kind());
}

bool event_holds(const ProcessModel& m, const WeightedPath& path, const EventSpec& ev) {
  if (const auto* h = std::get_if<HitSetBefore>(&ev)) {
    if (std::holds_alternative<DeterministicDrift>(m.kind())) {
      if (h->t <= 0.0) return false;
      const double x = as_real(path.at(0.0));
      return h->target.meets_range(x, as_real(path.at(h->t)));
    }
    // Fork paths move at unit speed: membership can change only at piece
    // boundaries or where the position crosses a target segment end.
    std::vector<double> change = path.breakpoints;
    const auto start = std::get<BranchPoint>(path.at(0.0));
    for (const auto& seg : h->target.segments())
      for (double v : {seg.lo, seg.hi}) change.push_back(v - start.pos);
    return holds_on_function(path.at, m.obs(), ev, change);
  }
  return holds_on_function(path.at, m.obs(), ev, path.breakpoints);
}

Trajectory sample_trajectory(const ProcessModel& m, const State& x0, std::uint64_t seed) {
  validated_start(m, x0);
  Rng rng(seed);
  Trajectory tr;
  tr.grid_step = m.grid_step();
  const auto steps = static_cast<std::size_t>(std::llround(m.horizon() / m.grid_step()));
  auto grid_time = [&](std::size_t i) { return std::min(static_cast<double>(i) * m.grid_step(), m.horizon()); };

  if (m.enumerable()) {
    const auto paths = enumerate_paths(m, x0);
    const double u = rng.uniform();
    double acc = 0.0;
    const WeightedPath* chosen = &paths.back();
    for (const auto& p : paths) {
      acc += p.probability;
      if (u < acc) {
        chosen = &p;
        break;
      }
    }
    for (std::size_t i = 0; i <= steps; ++i) {
      tr.sample_times.push_back(grid_time(i));
      tr.values.push_back(chosen->at(grid_time(i)));
    }
    return tr;
  }
  if (const auto* e = std::get_if<EmbeddedLMP>(&m.kind())) {
    const auto path = sample_clocked_path(*e->lmp, std::get<ClockedState>(x0), m.horizon(), rng);
    for (std::size_t i = 0; i <= steps; ++i) {
      tr.sample_times.push_back(grid_time(i));
      tr.values.push_back(path.at(grid_time(i)));
      if (is_cemetery(tr.values.back())) break;
    }
    return tr;
  }
  const Diffusion f = *diffusion_of(m.kind());
  double w = as_real(x0);
  tr.sample_times.push_back(0.0);
  tr.values.push_back(x0);
  const double s2 = f.scale * f.scale;
  for (std::size_t i = 1; i <= steps; ++i) {
    const double dt = grid_time(i) - grid_time(i - 1);
    const double w_new = w + f.drift * dt + f.scale * std::sqrt(dt) * rng.normal();
    tr.sample_times.push_back(grid_time(i));
    if (f.killing) {
      const double p_exit = outside(w_new, f.lo, f.hi) ? 1.0 : gap_exit(w, w_new, f.lo, f.hi, s2 * dt);
      if (p_exit > 0.0 && (p_exit >= 1.0 || rng.uniform() < p_exit)) {
        tr.values.push_back(Cemetery{});
        break;
      }
    }
    w = w_new;
    tr.values.push_back(f.to_state(w));
  }
  return tr;
}

// ---------------------------------------------------------------------------

std::vector<EstimateWithCI> estimate_events(const ProcessModel& m, const State& x0, std::span<const EventSpec> events,
                                            std::size_t n, std::uint64_t seed) {
  validated_start(m, x0);
  if (n < 100) throw DomainError("estimates need at least 100 samples");
  for (const auto& ev : events) validate_event(m, ev);
  std::vector<EstimateWithCI> out(events.size());

  if (m.enumerable()) {
    const auto paths = enumerate_paths(m, x0);
    for (std::size_t e = 0; e < events.size(); ++e) {
      double p = 0.0;
      for (const auto& path : paths)
        if (event_holds(m, path, events[e])) p += path.probability;
      out[e] = EstimateWithCI{p, 0.0, 0, seed, true};
    }
    return out;
  }

  const std::size_t chunks = chunk_count(n);
  std::vector<std::vector<std::uint64_t>> hits(chunks, std::vector<std::uint64_t>(events.size(), 0));

  if (const auto* e = std::get_if<EmbeddedLMP>(&m.kind())) {
    double t_end = 0.0;
    for (const auto& ev : events) t_end = std::max(t_end, event_horizon(ev));
    const auto start = std::get<ClockedState>(x0);
    for_each_chunk(chunks, [&](std::size_t c) {
      Rng rng(derive_seed(seed, c));
      const std::size_t end = std::min(n, (c + 1) * kChunk);
      for (std::size_t i = c * kChunk; i < end; ++i) {
        const auto path = sample_clocked_path(*e->lmp, start, t_end, rng);
        auto at = [&path](double t) { return path.at(t); };
        for (std::size_t k = 0; k < events.size(); ++k) {
          std::vector<double> change = clocked_change_times(path, events[k]);
          if (holds_on_function(at, m.obs(), events[k], change)) ++hits[c][k];
        }
      }
    });
  } else {
    const Diffusion f = *diffusion_of(m.kind());
    const DiffusionPlan plan = make_plan(m, f, events, {});
    const double w0 = as_real(x0);
    for_each_chunk(chunks, [&](std::size_t c) {
      Rng rng(derive_seed(seed, c));
      std::vector<State> at;
      std::vector<Monitor> monitors;
      const std::size_t end = std::min(n, (c + 1) * kChunk);
      for (std::size_t i = c * kChunk; i < end; ++i) {
        run_diffusion(plan, w0, x0, rng, at, monitors);
        std::size_t hit_index = 0;
        for (std::size_t k = 0; k < events.size(); ++k)
          if (holds_on_diffusion(plan, m.obs(), events[k], at, monitors, hit_index)) ++hits[c][k];
      }
    });
  }

  for (std::size_t k = 0; k < events.size(); ++k) {
    std::uint64_t total = 0;
    for (const auto& h : hits) total += h[k];
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(total) / nn;
    const double var = nn > 1 ? p * (1.0 - p) * nn / (nn - 1.0) : 0.0;
    out[k] = EstimateWithCI{p, std::sqrt(var / nn), n, seed, false};
  }
  return out;
}

EstimateWithCI estimate_event(const ProcessModel& m, const State& x0, const EventSpec& ev, std::size_t n,
                              std::uint64_t seed) {
  return estimate_events(m, x0, std::span<const EventSpec>(&ev, 1), n, seed).front();
}

std::vector<std::vector<State>> sample_marginals(const ProcessModel& m, const State& x0, std::span<const double> times,
                                                 std::size_t n, std::uint64_t seed) {
  validated_start(m, x0);
  for (double t : times)
    if (t < 0.0 || t > m.horizon() + 1e-12) throw DomainError("marginal time outside [0, horizon]");
  std::vector<std::vector<State>> out(n);
  const std::size_t chunks = chunk_count(n);

  if (m.enumerable()) {
    const auto paths = enumerate_paths(m, x0);
    for_each_chunk(chunks, [&](std::size_t c) {
      Rng rng(derive_seed(seed, c));
      const std::size_t end = std::min(n, (c + 1) * kChunk);
      for (std::size_t i = c * kChunk; i < end; ++i) {
        const double u = rng.uniform();
        double acc = 0.0;
        const WeightedPath* chosen = &paths.back();
        for (const auto& p : paths) {
          acc += p.probability;
          if (u < acc) {
            chosen = &p;
            break;
          }
        }
        for (double t : times) out[i].push_back(chosen->at(t));
      }
    });
    return out;
  }
  if (const auto* e = std::get_if<EmbeddedLMP>(&m.kind())) {
    double t_end = 0.0;
    for (double t : times) t_end = std::max(t_end, t);
    const auto start = std::get<ClockedState>(x0);
    for_each_chunk(chunks, [&](std::size_t c) {
      Rng rng(derive_seed(seed, c));
      const std::size_t end = std::min(n, (c + 1) * kChunk);
      for (std::size_t i = c * kChunk; i < end; ++i) {
        const auto path = sample_clocked_path(*e->lmp, start, t_end, rng);
        for (double t : times) out[i].push_back(path.at(t));
      }
    });
    return out;
  }
  const Diffusion f = *diffusion_of(m.kind());
  const DiffusionPlan plan = make_plan(m, f, {}, times);
  const double w0 = as_real(x0);
  for_each_chunk(chunks, [&](std::size_t c) {
    Rng rng(derive_seed(seed, c));
    std::vector<State> at;
    std::vector<Monitor> monitors;
    const std::size_t end = std::min(n, (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) {
      run_diffusion(plan, w0, x0, rng, at, monitors);
      for (double t : times) out[i].push_back(at[checkpoint_index(plan.checkpoints, t)]);
    }
  });
  return out;
}

std::vector<double> sample_hitting_times(const ProcessModel& m, const State& x0, const StateSet& target, double t_max,
                                         std::size_t n, std::uint64_t seed) {
  validated_start(m, x0);
  if (!target.is_real()) throw DomainError("hitting target is not a set of reals");
  if (!(t_max > 0.0) || t_max > m.horizon() + 1e-12) throw DomainError("t_max must lie in (0, horizon]");
  const auto f = diffusion_of(m.kind());
  if (!f || f->map != Diffusion::Map::Identity)
    throw UnsupportedError("hitting times are supported only for unreflected motion on the line");
  std::vector<double> out(n, kInf);
  const double w0 = as_real(x0);
  for_each_chunk(chunk_count(n), [&](std::size_t c) {
    Rng rng(derive_seed(seed, c));
    const std::size_t end = std::min(n, (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) out[i] = hitting_time_once(*f, w0, target, t_max, m.grid_step(), rng);
  });
  return out;
}

EstimateWithCI estimate_hitting_laplace(const ProcessModel& m, const State& x0, const StateSet& target, double lambda,
                                        std::size_t n, std::uint64_t seed) {
  if (!(lambda >= 0.0)) throw DomainError("lambda must be nonnegative");
  if (n < 100) throw DomainError("estimates need at least 100 samples");
  auto times = sample_hitting_times(m, x0, target, m.horizon(), n, seed);
  for (double& t : times) t = std::isinf(t) ? 0.0 : std::exp(-lambda * t);
  return stats::summarize(times, seed);
}

// ---------------------------------------------------------------------------

double difference_z(const EstimateWithCI& a, const EstimateWithCI& b) {
  const double gap = a.mean - b.mean;
  const double var = a.std_err * a.std_err + b.std_err * b.std_err;
  if (var == 0.0) return std::fabs(gap) > 1e-12 ? std::copysign(kInf, gap) : 0.0;
  return gap / std::sqrt(var);
}

Verdict distinguish(const ProcessModel& m, const State& x, const State& y, std::span<const EventSpec> events,
                    std::size_t n, std::uint64_t seed, double z_crit) {
  if (events.empty()) throw PreconditionError("distinguish needs at least one event");
  const auto ex = estimate_events(m, x, events, n, derive_seed(seed, 1));
  const auto ey = estimate_events(m, y, events, n, derive_seed(seed, 2));
  Verdict v;
  double best = -1.0;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const double z = difference_z(ex[i], ey[i]);
    if (std::fabs(z) > best) {
      best = std::fabs(z);
      v.event_index = i;
      v.z_score = z;
      v.gap = ex[i].mean - ey[i].mean;
      v.at_x = ex[i];
      v.at_y = ey[i];
    }
  }
  v.distinguished = best > z_crit;
  return v;
}

}  // namespace fdbisim::mc
