#include "fdbisim/bisim.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "fdbisim/analytic.hpp"
#include "fdbisim/stats.hpp"

namespace fdbisim::bisim {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

using json = nlohmann::ordered_json;

constexpr double kExactTolerance = 1e-9;
constexpr std::size_t kMaxFindings = 20;
const std::vector<double> kTimeGrid{0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
const std::vector<double> kLambdaGrid{0.05, 0.2, 0.5, 1.0, 2.0, 5.0};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

double frac(double x) { return x - std::floor(x); }

bool is_integer(double x) { return std::floor(x) == x; }

void add_finding(CheckReport& r, Finding f) {
  if (r.findings.size() < kMaxFindings) r.findings.push_back(std::move(f));
}

bool states_close(const State& a, const State& b) {
  if (a.index() != b.index()) return false;
  return std::visit(overloaded{
                        [&](double u) { return std::fabs(u - std::get<double>(b)) <= kExactTolerance; },
                        [&](const BranchPoint& u) {
                          const auto& v = std::get<BranchPoint>(b);
                          return u.branch == v.branch && std::fabs(u.pos - v.pos) <= kExactTolerance;
                        },
                        [&](const ClockedState& u) {
                          const auto& v = std::get<ClockedState>(b);
                          return u.base == v.base && std::fabs(u.clock - v.clock) <= kExactTolerance;
                        },
                        [](Cemetery) { return true; },
                    },
                    a);
}

bool signatures_differ(const std::vector<double>& a, const std::vector<double>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({1.0, std::fabs(a[i]), std::fabs(b[i])});
    if (std::fabs(a[i] - b[i]) > kExactTolerance * scale) return true;
  }
  return false;
}

std::vector<BranchPoint> fork_grid(const mc::ForkGeometry& g) {
  const double mid = (g.first_fork + g.second_fork) / 2.0;
  const double late = (g.second_fork + g.end) / 2.0;
  return {{g.first_fork, 1}, {g.first_fork, 4}, {g.second_fork, 2}, {g.second_fork, 3}, {g.second_fork, 4},
          {g.end, 2},        {g.end, 3},        {g.end, 5},         {g.end, 6},         {mid, 2},
          {mid, 3},          {mid, 4},          {late, 5},          {late, 6}};
}

/// States a check ranges over: the window grid for real models, every base
/// at a few clock values for embedded LMPs, named points for the fork.
std::vector<State> state_grid(const mc::ProcessModel& m, std::size_t n) {
  if (const auto* f = std::get_if<mc::ForkProcess>(&m.kind())) {
    std::vector<State> out;
    for (const auto& p : fork_grid(f->geometry)) out.push_back(p);
    return out;
  }
  if (const auto* e = std::get_if<mc::EmbeddedLMP>(&m.kind())) {
    std::vector<State> out;
    for (std::size_t i = 0; i < e->lmp->size(); ++i)
      for (double c : {0.0, 0.25, 0.5}) out.push_back(ClockedState{i, c});
    return out;
  }
  std::vector<State> out;
  for (double x : window_grid(m, n)) out.push_back(x);
  return out;
}

/// Grid states plus random draws; quarter-integers of the window are
/// included because that is where propositions usually sit.
std::vector<State> probe_states(const mc::ProcessModel& m, std::size_t samples, std::mt19937_64& rng) {
  std::vector<State> out = state_grid(m, 20);
  if (std::holds_alternative<mc::ForkProcess>(m.kind())) return out;
  if (const auto* e = std::get_if<mc::EmbeddedLMP>(&m.kind())) {
    std::uniform_int_distribution<std::size_t> base(0, e->lmp->size() - 1);
    std::uniform_int_distribution<int> tick(0, 15);
    for (std::size_t i = 0; i < samples; ++i) out.push_back(ClockedState{base(rng), tick(rng) / 16.0});
    return out;
  }
  const Window w = natural_window(m);
  const auto space = m.space();
  for (double q = std::ceil(w.lo * 4.0) / 4.0; q <= w.hi; q += 0.25)
    if (space.contains(q)) out.push_back(q);
  std::uniform_real_distribution<double> pick(w.lo, w.hi);
  for (std::size_t i = 0; i < samples; ++i) {
    const double x = pick(rng);
    if (space.contains(x)) out.push_back(x);
  }
  return out;
}

/// Relatedness on model states: a partition witness over an embedded LMP is
/// read as its time-synchronised lift.
bool related(const RelationWitness& w, const State& x, const State& y) {
  if (const auto* p = std::get_if<FinitePartition>(&w)) {
    const auto* cx = std::get_if<ClockedState>(&x);
    const auto* cy = std::get_if<ClockedState>(&y);
    if (cx && cy) {
      if (cx->base >= p->size() || cy->base >= p->size()) throw DomainError("state outside the partitioned set");
      return cx->clock == cy->clock && p->related(cx->base, cy->base);
    }
  }
  return relation_related(w, x, y);
}

/// Related pairs of probe states: (x, g(x)) for every generator and for
/// random words of two or three generators; all related index pairs for
/// partitions.
std::vector<std::pair<State, State>> related_pairs(const mc::ProcessModel& m, const RelationWitness& w,
                                                   const std::vector<State>& probes, std::mt19937_64& rng) {
  std::vector<std::pair<State, State>> out;
  const auto space = m.space();
  std::visit(overloaded{
                 [&](const FinitePartition& p) {
                   const bool clocked = std::holds_alternative<mc::EmbeddedLMP>(m.kind());
                   for (std::size_t i = 0; i < p.size(); ++i)
                     for (std::size_t j = i + 1; j < p.size(); ++j) {
                       if (!p.related(i, j)) continue;
                       if (clocked) {
                         for (double c : {0.0, 0.5}) out.emplace_back(ClockedState{i, c}, ClockedState{j, c});
                       } else {
                         out.emplace_back(partition_state(m, i), partition_state(m, j));
                       }
                     }
                 },
                 [&](const SymmetryGroup& g) {
                   const auto& gens = g.generators();
                   if (gens.empty()) return;
                   std::uniform_int_distribution<std::size_t> pick(0, gens.size() - 1);
                   std::uniform_int_distribution<int> length(2, 3);
                   for (const auto& x : probes) {
                     for (const auto& gen : gens) {
                       const State y = gen.apply(x);
                       if (space.contains(y)) out.emplace_back(x, y);
                     }
                     State y = x;
                     for (int k = length(rng); k > 0; --k) y = gens[pick(rng)].apply(y);
                     if (space.contains(y)) out.emplace_back(x, y);
                   }
                 },
             },
             w);
  return out;
}

json state_json(const State& s) {
  if (const auto* v = std::get_if<double>(&s)) return *v;
  return to_string(s);
}

// Obs-support change times of a deterministic drift path started at z.
std::vector<double> drift_change_times(const mc::ProcessModel& m, double z) {
  const double a = std::get<mc::DeterministicDrift>(m.kind()).speed;
  std::vector<double> out;
  if (a == 0.0) return out;
  auto push = [&](double level) {
    const double t = (level - z) / a;
    if (t >= 0.0 && t <= m.horizon()) out.push_back(t);
  };
  for (const auto& s : m.obs().sets()) {
    for (const auto& span : s.spans()) {
      push(span.lo);
      push(span.hi);
    }
    if (s.has_integers()) {
      const double far = z + a * m.horizon();
      for (double k = std::ceil(std::min(z, far)); k <= std::max(z, far); k += 1.0) push(k);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Times at which the obs-trace of an enumerable path can change, with the
// midpoints in between and a point just after each change.
std::vector<double> trace_times(const mc::ProcessModel& m, const std::vector<mc::WeightedPath>& paths) {
  std::vector<double> t{0.0, m.horizon()};
  for (const auto& p : paths) {
    t.insert(t.end(), p.breakpoints.begin(), p.breakpoints.end());
    if (std::holds_alternative<mc::DeterministicDrift>(m.kind())) {
      const auto c = drift_change_times(m, as_real(p.at(0.0)));
      t.insert(t.end(), c.begin(), c.end());
    }
  }
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  std::vector<double> out;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < 0.0 || t[i] > m.horizon()) continue;
    out.push_back(t[i]);
    if (i + 1 < t.size()) {
      out.push_back(std::min(t[i] + 1e-6, (t[i] + t[i + 1]) / 2.0));
      out.push_back((t[i] + t[i + 1]) / 2.0);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<double> clipped(const std::vector<double>& grid, double horizon) {
  std::vector<double> out;
  for (double t : grid)
    if (t <= horizon) out.push_back(t);
  return out;
}

// ---------------------------------------------------------------------------
// Closed forms

using Signature = std::function<std::vector<double>(double)>;

Family signature_family(FamilyKind kind, std::string name, Signature sig) {
  Family f;
  f.kind = kind;
  f.name = std::move(name);
  f.separates = [sig = std::move(sig)](double x, double y) { return signatures_differ(sig(x), sig(y)); };
  return f;
}

bool same_set(const ObservationMap& obs, const StateSet& s) {
  return obs.sets().size() == 1 && obs.sets().front() == s;
}

std::vector<double> k_grid(double a) {
  std::vector<double> k;
  for (double lambda : kLambdaGrid) k.push_back(std::sqrt(2.0 * lambda + a * a));
  return k;
}

std::optional<Family> bm_closed_form(const mc::ProcessModel& m, FamilyKind kind) {
  const auto& obs = m.obs();
  const bool want_cdf = kind == FamilyKind::HittingCdf || kind == FamilyKind::Auto;
  const bool want_laplace = kind == FamilyKind::Laplace || kind == FamilyKind::Auto;
  if (same_set(obs, StateSet::point(0.0))) {
    if (want_cdf)
      return signature_family(FamilyKind::HittingCdf, "hitting-time CDF of 0", [](double x) {
        std::vector<double> s;
        for (double t : kTimeGrid) s.push_back(analytic::bm_hit_zero_cdf(x, t));
        return s;
      });
    return signature_family(FamilyKind::Laplace, "Laplace transform of the hitting time of 0", [](double x) {
      std::vector<double> s;
      for (double l : kLambdaGrid) s.push_back(std::exp(-std::fabs(x) * std::sqrt(2.0 * l)));
      return s;
    });
  }
  if (!want_laplace) return std::nullopt;
  if (same_set(obs, StateSet::integers()))
    return signature_family(FamilyKind::Laplace, "Laplace transform of the exit time of the unit cell", [](double x) {
      std::vector<double> s;
      if (is_integer(x)) return std::vector<double>(kLambdaGrid.size(), 1.0);
      for (double l : kLambdaGrid) s.push_back(analytic::bm_two_barrier_laplace(frac(x), l));
      return s;
    });
  if (same_set(obs, StateSet::interval(-1.0, 1.0)))
    return signature_family(FamilyKind::Laplace, "Laplace transform of the exit or entrance time of [-1,1]",
                            [](double x) {
                              std::vector<double> s;
                              for (double l : kLambdaGrid)
                                s.push_back(std::fabs(x) < 1.0 ? analytic::bm_interval_barrier_laplace(x, l)
                                                                : std::exp(-(std::fabs(x) - 1.0) * std::sqrt(2.0 * l)));
                              return s;
                            });
  return std::nullopt;
}

std::optional<Family> drifted_closed_form(const mc::ProcessModel& m, double a, FamilyKind kind) {
  // A negative drift is the mirror image of a positive one.
  const double sign = a < 0.0 ? -1.0 : 1.0;
  a = std::fabs(a);
  const auto& obs = m.obs();
  const bool want_cdf = kind == FamilyKind::HittingCdf || kind == FamilyKind::Auto;
  const bool want_laplace = kind == FamilyKind::Laplace || kind == FamilyKind::Auto;
  if (same_set(obs, StateSet::point(0.0)) && want_cdf)
    return signature_family(FamilyKind::HittingCdf, "hitting-time CDF of 0 (integrated density)", [a, sign](double x) {
      std::vector<double> s;
      const double z = sign * x;
      for (double t : kTimeGrid)
        s.push_back(z == 0.0 ? 1.0
                             : analytic::integrate([&](double u) { return analytic::drifted_bm_hit_zero_density(z, a, u); },
                                                   0.0, t));
      return s;
    });
  if (!want_laplace) return std::nullopt;
  const auto ks = k_grid(a);
  if (same_set(obs, StateSet::integers())) {
    Family f;
    f.kind = FamilyKind::Laplace;
    f.name = "unit-cell exit Laplace transform (g injectivity)";
    f.separates = [a, sign, ks](double x, double y) {
      x *= sign;
      y *= sign;
      if (is_integer(x) || is_integer(y)) return is_integer(x) != is_integer(y);
      return !analytic::g_injectivity_check(frac(x), frac(y), a, ks, kExactTolerance);
    };
    return f;
  }
  if (same_set(obs, StateSet::interval(-1.0, 1.0))) {
    Family f;
    f.kind = FamilyKind::Laplace;
    f.name = "[-1,1] exit (h injectivity) or entrance Laplace transform";
    f.separates = [a, sign, ks](double x, double y) {
      x *= sign;
      y *= sign;
      const bool in_x = std::fabs(x) <= 1.0, in_y = std::fabs(y) <= 1.0;
      if (in_x != in_y) return true;
      if (in_x && (std::fabs(x) == 1.0 || std::fabs(y) == 1.0)) {
        // h degenerates on the boundary; compare P_t(., [-1,1]) instead.
        std::vector<double> sx, sy;
        for (double t : kTimeGrid) {
          sx.push_back(analytic::gaussian_kernel(x + a * t, -1.0, 1.0, t));
          sy.push_back(analytic::gaussian_kernel(y + a * t, -1.0, 1.0, t));
        }
        return signatures_differ(sx, sy);
      }
      if (in_x) return !analytic::h_injectivity_check(x, y, a, ks, kExactTolerance);
      std::vector<double> sx, sy;
      for (double l : kLambdaGrid) {
        sx.push_back(analytic::drifted_outside_interval_laplace(x, a, l));
        sy.push_back(analytic::drifted_outside_interval_laplace(y, a, l));
      }
      sx.push_back(analytic::drifted_outside_interval_laplace(x, a, 0.0));
      sy.push_back(analytic::drifted_outside_interval_laplace(y, a, 0.0));
      return signatures_differ(sx, sy);
    };
    return f;
  }
  return std::nullopt;
}

std::optional<Family> absorbed_closed_form(const mc::ProcessModel& m, const mc::AbsorbedBM& k, FamilyKind kind) {
  const auto& obs = m.obs();
  const double lo = k.lo;
  if (!std::isfinite(k.hi)) {
    if (obs.size() != 0 || kind == FamilyKind::Laplace) return std::nullopt;
    return signature_family(FamilyKind::HittingCdf, "death-time CDF", [lo](double x) {
      std::vector<double> s;
      for (double t : kTimeGrid) s.push_back(analytic::absorbed_bm_death_cdf(x - lo, t));
      return s;
    });
  }
  if (kind == FamilyKind::HittingCdf) return std::nullopt;
  const double b = k.hi - lo;
  auto death = [lo, b](double x) {
    std::vector<double> s;
    for (double l : kLambdaGrid) s.push_back(analytic::bm_two_barrier_laplace((x - lo) / b, l * b * b));
    return s;
  };
  if (obs.size() == 0) return signature_family(FamilyKind::Laplace, "death-time Laplace transform", death);
  if (obs.size() == 1 && obs.sets()[0].spans().size() == 1 && !obs.sets()[0].has_integers() &&
      !obs.sets()[0].is_complemented()) {
    const auto span = obs.sets()[0].spans()[0];
    if (span.lo != span.hi || !(span.lo > lo && span.lo < k.hi)) return std::nullopt;
    const double mark = span.lo - lo;
    return signature_family(FamilyKind::Laplace, "death-time and mark-reaching Laplace transforms",
                            [lo, b, mark, death](double x) {
                              auto s = death(x);
                              for (double l : kLambdaGrid)
                                s.push_back(analytic::absorbed_bm_reach_b_laplace(x - lo, mark, b, l));
                              return s;
                            });
  }
  return std::nullopt;
}

std::optional<Family> closed_form(const mc::ProcessModel& m, FamilyKind kind) {
  return std::visit(overloaded{
                        [&](const mc::BrownianMotion&) { return bm_closed_form(m, kind); },
                        [&](const mc::DriftedBM& d) {
                          return d.drift == 0.0 ? bm_closed_form(m, kind) : drifted_closed_form(m, d.drift, kind);
                        },
                        [&](const mc::AbsorbedBM& a) { return absorbed_closed_form(m, a, kind); },
                        [](const auto&) -> std::optional<Family> { return std::nullopt; },
                    },
                    m.kind());
}

std::vector<mc::EventSpec> exact_events(const mc::ProcessModel& m, const State& x, const State& y) {
  auto events = mc_events(m);
  if (std::holds_alternative<mc::DeterministicDrift>(m.kind())) {
    const auto tx = drift_change_times(m, as_real(x));
    const auto ty = drift_change_times(m, as_real(y));
    // A time at which both paths sit on a set boundary would be decided by
    // rounding; such times carry no information and are skipped.
    auto near = [](const std::vector<double>& ts, double t) {
      return std::any_of(ts.begin(), ts.end(), [t](double u) { return std::fabs(u - t) <= 1e-9 * std::max(1.0, t); });
    };
    for (const auto* pair : {&tx, &ty}) {
      const auto& other = pair == &tx ? ty : tx;
      for (double t : *pair) {
        if (near(other, t)) continue;
        for (const auto& s : m.obs().sets()) events.push_back(mc::ValueAtTimeIn{t, s});
      }
    }
  }
  return events;
}

}  // namespace

// ---------------------------------------------------------------------------

json CheckReport::to_json() const {
  json j;
  j["check"] = check;
  j["passed"] = passed;
  j["comparisons"] = comparisons;
  j["details"] = details;
  json f = json::array();
  for (const auto& x : findings)
    f.push_back(json{{"what", x.what}, {"x", state_json(x.x)}, {"y", state_json(x.y)}, {"statistic", x.statistic}});
  j["findings"] = f;
  return j;
}

Window natural_window(const mc::ProcessModel& m) {
  return std::visit(overloaded{
                        [](const mc::AbsorbedBM& a) {
                          return Window{a.lo, std::isfinite(a.hi) ? a.hi : a.lo + 6.0, true};
                        },
                        [](const mc::ReflectedBM& r) { return Window{r.lo, r.hi, false}; },
                        [](const mc::CircleBM&) { return Window{-std::numbers::pi, std::numbers::pi, true}; },
                        [](const mc::ForkProcess&) -> Window {
                          throw UnsupportedError("the fork has no real window");
                        },
                        [](const mc::EmbeddedLMP&) -> Window {
                          throw UnsupportedError("embedded LMPs have no real window");
                        },
                        [](const auto&) { return Window{-3.0, 3.0, false}; },
                    },
                    m.kind());
}

std::vector<double> window_grid(const mc::ProcessModel& m, std::size_t n) {
  const Window w = natural_window(m);
  std::vector<double> out;
  if (n == 0) return out;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = w.open ? (i + 1.0) / (n + 1.0) : (n == 1 ? 0.5 : static_cast<double>(i) / (n - 1.0));
    out.push_back(w.lo + u * (w.hi - w.lo));
  }
  return out;
}

State partition_state(const mc::ProcessModel& m, std::size_t i) {
  if (std::holds_alternative<mc::EmbeddedLMP>(m.kind())) return ClockedState{i, 0.0};
  return static_cast<double>(i);
}

// ---------------------------------------------------------------------------

CheckReport check_initiation1(const mc::ProcessModel& m, const RelationWitness& w, std::size_t samples,
                              std::uint64_t seed) {
  CheckReport r;
  r.check = "initiation1";
  std::mt19937_64 rng(seed);
  const auto probes = probe_states(m, samples, rng);
  for (const auto& [x, y] : related_pairs(m, w, probes, rng)) {
    ++r.comparisons;
    if (!related(w, x, y)) {
      r.passed = false;
      add_finding(r, {"generator image not related by the invariant", x, y, 0.0});
    }
    if (m.obs()(x) != m.obs()(y)) {
      r.passed = false;
      add_finding(r, {"obs differs: " + to_string(m.obs()(x), m.obs().size()) + " vs " +
                          to_string(m.obs()(y), m.obs().size()),
                      x, y, 0.0});
    }
  }
  r.details["witness"] = describe(w);
  return r;
}

CheckReport check_induction2_symmetry(const mc::ProcessModel& m, const RelationWitness& w,
                                      const SymmetryOptions& opt) {
  const auto* g = std::get_if<SymmetryGroup>(&w);
  if (!g) throw UnsupportedError("induction 2 certificates need a symmetry-group witness");
  CheckReport r;
  r.check = "induction2_symmetry";
  r.details["witness"] = g->description();
  r.details["z_crit"] = opt.z_crit;
  const auto space = m.space();
  const auto& gens = g->generators();
  if (gens.empty()) {
    r.details["mode"] = "equality";
    return r;
  }

  // (ii) generators commute with obs.
  std::mt19937_64 rng(opt.seed);
  for (const auto& x : probe_states(m, 200, rng))
    for (const auto& gen : gens) {
      const State y = gen.apply(x);
      if (!space.contains(y)) continue;
      ++r.comparisons;
      if (m.obs()(x) != m.obs()(y)) {
        r.passed = false;
        add_finding(r, {"generator '" + gen.name + "' does not commute with obs", x, y, 0.0});
      }
    }

  // (i) generators preserve the law.
  std::vector<State> starts;
  if (std::holds_alternative<mc::ForkProcess>(m.kind()) || std::holds_alternative<mc::EmbeddedLMP>(m.kind())) {
    starts = state_grid(m, 0);
  } else {
    const Window win = natural_window(m);
    for (double u : {0.37, 0.71}) starts.push_back(win.lo + u * (win.hi - win.lo));
  }
  const auto times = clipped(opt.times, m.horizon());
  std::string mode;
  std::size_t tests = 0;
  json gen_modes = json::object();

  for (std::size_t gi = 0; gi < gens.size(); ++gi) {
    const auto& gen = gens[gi];
    std::string gen_mode;
    for (std::size_t si = 0; si < starts.size(); ++si) {
      const State& x = starts[si];
      const State gx = gen.apply(x);
      if (!space.contains(gx) || is_cemetery(gx)) continue;

      if (m.enumerable()) {
        const auto px = mc::enumerate_paths(m, x);
        const auto pg = mc::enumerate_paths(m, gx);
        std::vector<mc::WeightedPath> both = px;
        both.insert(both.end(), pg.begin(), pg.end());
        auto check_times = trace_times(m, both);
        check_times.insert(check_times.end(), times.begin(), times.end());
        ++r.comparisons;
        // Exact: g maps the path set from x onto the path set from g(x).
        bool exact = px.size() == pg.size();
        for (std::size_t i = 0; exact && i < px.size(); ++i) {
          bool matched = false;
          for (const auto& q : pg) {
            if (std::fabs(q.probability - px[i].probability) > 1e-12) continue;
            bool all = true;
            for (double t : check_times) all = all && states_close(gen.apply(px[i].at(t)), q.at(t));
            if (all) {
              matched = true;
              break;
            }
          }
          exact = matched;
        }
        if (exact) {
          if (gen_mode.empty()) gen_mode = "exact";
          continue;
        }
        // Coupling: the i-th paths from x and g(x) stay related.
        bool coupled = px.size() == pg.size();
        for (std::size_t i = 0; coupled && i < px.size(); ++i) {
          coupled = std::fabs(px[i].probability - pg[i].probability) <= 1e-12;
          for (double t : check_times) coupled = coupled && related(w, px[i].at(t), pg[i].at(t));
        }
        if (coupled) {
          gen_mode = "coupling";
          continue;
        }
        r.passed = false;
        add_finding(r, {"generator '" + gen.name + "' does not preserve the trajectory law", x, gx, 0.0});
        continue;
      }

      const mc::ProcessModel mm = opt.grid_step > 0.0 ? m.with_resolution(m.horizon(), opt.grid_step) : m;
      const auto seed_x = mc::derive_seed(opt.seed, 2 * (gi * starts.size() + si));
      const auto seed_g = mc::derive_seed(opt.seed, 2 * (gi * starts.size() + si) + 1);
      const auto ax = mc::sample_marginals(mm, x, times, opt.n, seed_x);
      const auto bg = mc::sample_marginals(mm, gx, times, opt.n, seed_g);
      std::vector<std::vector<double>> fa(times.size()), fb(times.size());
      for (std::size_t i = 0; i < opt.n; ++i)
        for (std::size_t k = 0; k < times.size(); ++k) {
          fa[k].push_back(stats::state_feature(gen.apply(ax[i][k])));
          fb[k].push_back(stats::state_feature(bg[i][k]));
        }
      auto record = [&](const stats::TwoSampleResult& res, const std::string& label) {
        ++r.comparisons;
        ++tests;
        if (res.z > opt.z_crit) {
          r.passed = false;
          add_finding(r, {"generator '" + gen.name + "' changes the law of " + label, x, gx, res.z});
        }
      };
      for (std::size_t k = 0; k < times.size(); ++k)
        record(stats::two_sample_chi2(fa[k], fb[k]), "w(" + fmt(times[k]) + ")");
      for (std::size_t k = 0; k + 1 < times.size(); ++k)
        record(stats::two_sample_chi2_joint(fa[k], fa[k + 1], fb[k], fb[k + 1]),
               "(w(" + fmt(times[k]) + "), w(" + fmt(times[k + 1]) + "))");
      gen_mode = "marginals";
    }
    gen_modes[gen.name] = gen_mode.empty() ? "skipped" : gen_mode;
  }
  r.details["generators"] = gen_modes;
  if (tests > 0) {
    r.details["paths"] = opt.n;
    r.details["tests"] = tests;
    r.details["family_false_positive_bound"] = static_cast<double>(tests) * 2.0 * analytic::normal_sf(opt.z_crit);
  }
  return r;
}

EstimateWithCI kernel_mass(const mc::ProcessModel& m, const State& x, double t, const StateSet& c, std::size_t n,
                           std::uint64_t seed) {
  if (t < 0.0) throw DomainError("kernel time must be nonnegative");
  const double* drift = nullptr;
  double zero = 0.0;
  if (std::holds_alternative<mc::BrownianMotion>(m.kind())) drift = &zero;
  if (const auto* d = std::get_if<mc::DriftedBM>(&m.kind())) drift = &d->drift;
  if (drift && c.is_real() && t > 0.0) {
    const double centre = as_real(x) + *drift * t;
    double mass = 0.0;
    for (const auto& s : c.spans())
      if (s.hi > s.lo) mass += analytic::gaussian_kernel(centre, s.lo, s.hi, t);
    if (c.is_complemented()) mass = 1.0 - mass;
    return EstimateWithCI{mass, 0.0, 0, seed, true};
  }
  if (const auto* e = std::get_if<mc::EmbeddedLMP>(&m.kind())) {
    const auto start = std::get<ClockedState>(x);
    const double u = start.clock + t;
    double k = std::floor(u + 1e-9);
    double clock = std::max(0.0, u - k);
    if (clock < 1e-9) clock = 0.0;
    const auto power = e->lmp->power(static_cast<std::size_t>(k));
    double mass = 0.0;
    for (std::size_t z = 0; z < e->lmp->size(); ++z)
      if (c.contains(ClockedState{z, clock})) mass += power(start.base, z);
    return EstimateWithCI{mass, 0.0, 0, seed, true};
  }
  return mc::estimate_event(m, x, mc::ValueAtTimeIn{t, c}, n, seed);
}

bool is_closed(const mc::ProcessModel& m, const RelationWitness& w, const StateSet& c) {
  std::mt19937_64 rng(7);
  const auto probes = probe_states(m, 500, rng);
  for (const auto& [x, y] : related_pairs(m, w, probes, rng))
    if (c.contains(x) != c.contains(y)) return false;
  return true;
}

CheckReport check_induction1(const mc::ProcessModel& m, const RelationWitness& w, const std::vector<double>& t_grid,
                             const std::vector<StateSet>& sets, std::size_t n, std::uint64_t seed, double z_crit) {
  for (const auto& c : sets)
    if (!is_closed(m, w, c)) throw PreconditionError("set {" + c.describe() + "} is not closed under the relation");
  CheckReport r;
  r.check = "induction1";
  r.details["witness"] = describe(w);
  json set_names = json::array();
  for (const auto& c : sets) set_names.push_back(c.describe());
  r.details["sets"] = set_names;
  r.details["times"] = t_grid;
  std::mt19937_64 rng(seed);
  std::vector<State> probes;
  if (std::holds_alternative<mc::ForkProcess>(m.kind()) || std::holds_alternative<mc::EmbeddedLMP>(m.kind())) {
    probes = state_grid(m, 0);
  } else {
    for (double x : window_grid(m, 8)) probes.push_back(x);
  }
  std::uint64_t stream = 0;
  for (const auto& [x, y] : related_pairs(m, w, probes, rng))
    for (double t : t_grid)
      for (const auto& c : sets) {
        const auto a = kernel_mass(m, x, t, c, n, mc::derive_seed(seed, stream++));
        const auto b = kernel_mass(m, y, t, c, n, mc::derive_seed(seed, stream++));
        ++r.comparisons;
        const bool exact = a.exact && b.exact;
        const double stat = exact ? std::fabs(a.mean - b.mean) : std::fabs(mc::difference_z(a, b));
        if (stat > (exact ? kExactTolerance : z_crit)) {
          r.passed = false;
          add_finding(r, {"P_" + fmt(t) + "(., {" + c.describe() + "}) differs", x, y, stat});
        }
      }
  return r;
}

CheckReport check_initiation2(const mc::ProcessModel& m, const State& x, const State& y, std::size_t n,
                              std::uint64_t seed, double z_crit) {
  CheckReport r;
  r.check = "initiation2";
  if (m.enumerable()) {
    r.details["mode"] = "exact obs-trace law";
    const auto px = mc::enumerate_paths(m, x);
    const auto py = mc::enumerate_paths(m, y);
    std::vector<mc::WeightedPath> both = px;
    both.insert(both.end(), py.begin(), py.end());
    const auto times = trace_times(m, both);
    using Trace = std::vector<Observation>;
    auto law = [&](const std::vector<mc::WeightedPath>& paths) {
      std::map<Trace, double> out;
      for (const auto& p : paths) {
        Trace tr;
        for (double t : times) tr.push_back(m.obs()(p.at(t)));
        out[tr] += p.probability;
      }
      return out;
    };
    const auto lx = law(px), ly = law(py);
    std::map<Trace, std::pair<double, double>> joined;
    for (const auto& [k, v] : lx) joined[k].first = v;
    for (const auto& [k, v] : ly) joined[k].second = v;
    for (const auto& [k, v] : joined) {
      ++r.comparisons;
      if (std::fabs(v.first - v.second) > 1e-12) {
        r.passed = false;
        add_finding(r, {"obs-trace probabilities differ", x, y, v.first - v.second});
      }
    }
    r.details["trace_times"] = times.size();
    return r;
  }
  const auto events = mc_events(m);
  const auto v = mc::distinguish(m, x, y, events, n, seed, z_crit);
  r.comparisons = events.size();
  r.details["mode"] = "monte carlo obs-closed events";
  r.details["z_crit"] = z_crit;
  r.details["max_abs_z"] = std::fabs(v.z_score);
  if (v.distinguished) {
    r.passed = false;
    add_finding(r, {"separated by " + mc::describe(events[v.event_index], m.obs().size()), x, y, v.z_score});
  }
  return r;
}

// ---------------------------------------------------------------------------

std::string to_string(FamilyKind k) {
  switch (k) {
    case FamilyKind::Auto:
      return "auto";
    case FamilyKind::HittingCdf:
      return "bt";
    case FamilyKind::Laplace:
      return "laplace";
    case FamilyKind::Exact:
      return "exact";
    case FamilyKind::MonteCarlo:
      return "word";
  }
  return "auto";
}

std::optional<FamilyKind> family_from_string(const std::string& s) {
  for (auto k : {FamilyKind::Auto, FamilyKind::HittingCdf, FamilyKind::Laplace, FamilyKind::Exact,
                 FamilyKind::MonteCarlo})
    if (to_string(k) == s) return k;
  if (s == "mc") return FamilyKind::MonteCarlo;
  return std::nullopt;
}

std::vector<mc::EventSpec> mc_events(const mc::ProcessModel& m) {
  std::vector<mc::EventSpec> out;
  const double horizon = m.horizon();
  if (const auto* e = std::get_if<mc::EmbeddedLMP>(&m.kind())) {
    std::vector<std::uint64_t> labels = e->lmp->labels();
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    for (double t : {0.0, 1.0, 2.0, 3.0}) {
      if (t > horizon) break;
      for (auto v : labels) out.push_back(mc::ObsWordEquals{{t}, {Observation{v, false}}});
      if (t > 0.0) out.push_back(mc::DeadAt{t});
    }
    return out;
  }
  if (std::holds_alternative<mc::ForkProcess>(m.kind())) {
    const auto n = m.obs().size();
    for (double t : {1.0, 2.0, 5.0, 10.0, 50.0, 100.0, horizon})
      for (std::uint64_t bit = 0; bit < n; ++bit)
        out.push_back(mc::ObsWordEquals{{std::min(t, horizon)}, {Observation{std::uint64_t{1} << bit, false}}});
    return out;
  }
  const bool hitting = !std::holds_alternative<mc::ReflectedBM>(m.kind()) &&
                       !std::holds_alternative<mc::CircleBM>(m.kind());
  for (double t : clipped(kTimeGrid, horizon)) {
    for (const auto& s : m.obs().sets()) {
      if (hitting) {
        out.push_back(mc::HitSetBefore{s, t});
        out.push_back(mc::HitSetBefore{s.complement(), t});
      } else {
        out.push_back(mc::ValueAtTimeIn{t, s});
      }
    }
    if (std::holds_alternative<mc::AbsorbedBM>(m.kind())) out.push_back(mc::DeadAt{t});
  }
  return out;
}

Family builtin_family(const mc::ProcessModel& m, FamilyKind kind) {
  if (kind == FamilyKind::Auto || kind == FamilyKind::HittingCdf || kind == FamilyKind::Laplace) {
    if (auto f = closed_form(m, kind)) return *f;
    if (kind != FamilyKind::Auto)
      throw UnsupportedError("no closed-form " + to_string(kind) + " family for " + m.name());
    kind = m.enumerable() ? FamilyKind::Exact : FamilyKind::MonteCarlo;
  }
  Family f;
  f.kind = kind;
  if (kind == FamilyKind::Exact) {
    if (!m.enumerable()) throw UnsupportedError("exact events need an enumerable model");
    f.name = "exact obs events";
    f.events = [m](const State& x, const State& y) { return exact_events(m, x, y); };
  } else {
    f.name = "monte carlo obs-closed events";
    f.events = [m](const State&, const State&) { return mc_events(m); };
  }
  return f;
}

PairVerdict separate_pair(const mc::ProcessModel& m, const Family& f, const State& x, const State& y, std::size_t n,
                          std::uint64_t seed, double z_crit) {
  const auto ox = m.obs()(x), oy = m.obs()(y);
  if (ox != oy) return {true, "obs differs", 0.0};
  if (f.separates) {
    const bool s = f.separates(as_real(x), as_real(y));
    return {s, s ? f.name : "", 0.0};
  }
  const auto events = f.events(x, y);
  if (events.empty()) return {};
  if (f.kind == FamilyKind::Exact) {
    const auto ex = mc::estimate_events(m, x, events, 100, seed);
    const auto ey = mc::estimate_events(m, y, events, 100, seed);
    for (std::size_t i = 0; i < events.size(); ++i) {
      const double gap = ex[i].mean - ey[i].mean;
      if (std::fabs(gap) > 1e-12) return {true, mc::describe(events[i], m.obs().size()), gap};
    }
    return {};
  }
  const auto v = mc::distinguish(m, x, y, events, n, seed, z_crit);
  return {v.distinguished, v.distinguished ? mc::describe(events[v.event_index], m.obs().size()) : "", v.z_score};
}

CheckReport refute_maximality(const mc::ProcessModel& m, const RelationWitness& w, const Family& f,
                              const RefuteOptions& opt) {
  CheckReport r;
  r.check = "refute_maximality";
  const auto states = state_grid(m, opt.grid_points);
  std::size_t unrelated = 0, separated = 0, related_count = 0, related_separated = 0;
  std::map<std::string, std::size_t> separators;
  for (std::size_t i = 0; i < states.size(); ++i)
    for (std::size_t j = 0; j < states.size(); ++j) {
      const State& x = states[i];
      const State& y = states[j];
      const bool rel = related(w, x, y);
      ++r.comparisons;
      if (rel && i == j) {
        ++related_count;
        continue;
      }
      const auto v = separate_pair(m, f, x, y, opt.n, mc::derive_seed(opt.seed, i * states.size() + j), opt.z_crit);
      if (rel) {
        ++related_count;
        if (v.separated) {
          ++related_separated;
          add_finding(r, {"related pair separated by " + v.how, x, y, v.statistic});
        }
      } else {
        ++unrelated;
        if (v.separated) {
          ++separated;
          ++separators[v.how];
        } else {
          add_finding(r, {"unrelated pair not separated", x, y, v.statistic});
        }
      }
    }
  const double coverage = unrelated == 0 ? 1.0 : static_cast<double>(separated) / static_cast<double>(unrelated);
  r.passed = coverage >= 0.99 && related_separated == 0;
  r.details["family"] = f.name;
  r.details["grid"] = states.size();
  r.details["unrelated"] = unrelated;
  r.details["separated"] = separated;
  r.details["coverage"] = coverage;
  r.details["related_pairs"] = related_count;
  r.details["related_separated"] = related_separated;
  json by = json::object();
  for (const auto& [k, v] : separators) by[k] = v;
  r.details["separated_by"] = by;
  if (f.kind == FamilyKind::MonteCarlo) r.details["z_crit"] = opt.z_crit;
  return r;
}

// ---------------------------------------------------------------------------

RelationWitness union_closure(const RelationWitness& a, const RelationWitness& b) {
  if (a.index() != b.index()) throw DomainError("cannot join a partition with a symmetry group");
  if (const auto* pa = std::get_if<FinitePartition>(&a)) {
    const auto& pb = std::get<FinitePartition>(b);
    if (pa->size() != pb.size()) throw DomainError("partitions of different sets");
    std::vector<std::size_t> parent(pa->size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (const auto* p : {pa, &pb})
      for (const auto& block : p->blocks())
        for (std::size_t i = 1; i < block.size(); ++i) parent[find(block[i])] = find(block[0]);
    std::vector<std::size_t> labels(pa->size());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = find(i);
    return FinitePartition::from_labels(labels);
  }
  const auto& ga = std::get<SymmetryGroup>(a);
  const auto& gb = std::get<SymmetryGroup>(b);
  if (ga.space().describe() != gb.space().describe()) throw DomainError("symmetry groups on different spaces");
  if (gb.generators().empty()) return ga;
  if (ga.generators().empty()) return gb;
  if (!ga.all_affine() || !gb.all_affine())
    throw UnsupportedError("joining needs affine generators to recompute the orbit invariant");
  auto gens = ga.generators();
  gens.insert(gens.end(), gb.generators().begin(), gb.generators().end());
  return SymmetryGroup::isometries(ga.space(), std::move(gens), ga.description() + " + " + gb.description());
}

// ---------------------------------------------------------------------------

SymmetryGroup reflection_witness(double centre) {
  return SymmetryGroup::isometries(StateSpace{}, {Generator::reflect_about(centre)}, "reflect " + fmt(centre));
}

SymmetryGroup translation_witness(double period) {
  return SymmetryGroup::isometries(StateSpace{}, {Generator::translate(period), Generator::translate(-period)},
                                   "translate " + fmt(period));
}

SymmetryGroup reflection_translation_witness() {
  return SymmetryGroup::isometries(
      StateSpace{}, {Generator::reflect_about(0.0), Generator::translate(1.0), Generator::translate(-1.0)},
      "reflect 0 + translate 1");
}

SymmetryGroup naive_witness() {
  auto scale = [](double k) {
    return [k](const State& s) -> State {
      if (is_cemetery(s)) return s;
      return k * as_real(s);
    };
  };
  SymmetryGroup::Invariant inv = [](const State& s) -> std::vector<double> {
    if (is_cemetery(s)) return {kInf};
    return {as_real(s) != 0.0 ? 1.0 : 0.0};
  };
  return SymmetryGroup(StateSpace{},
                       {Generator::custom("scale 2", scale(2.0)), Generator::custom("scale 1/2", scale(0.5)),
                        Generator::custom("negate", scale(-1.0))},
                       inv, "nonzero states all related");
}

SymmetryGroup positive_half_witness() {
  auto scale_positive = [](double k) {
    return [k](const State& s) -> State {
      if (is_cemetery(s)) return s;
      const double x = as_real(s);
      return x > 0.0 ? k * x : x;
    };
  };
  SymmetryGroup::Invariant inv = [](const State& s) -> std::vector<double> {
    if (is_cemetery(s)) return {kInf};
    const double x = as_real(s);
    return x > 0.0 ? std::vector<double>{1.0, 0.0} : std::vector<double>{0.0, x};
  };
  return SymmetryGroup(StateSpace{},
                       {Generator::custom("scale positives by 2", scale_positive(2.0)),
                        Generator::custom("scale positives by 1/2", scale_positive(0.5))},
                       inv, "positive states all related");
}

}  // namespace fdbisim::bisim
