#include "fdbisim/cospan.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "fdbisim/stats.hpp"

namespace fdbisim::cospan {

namespace {

constexpr double kTolerance = 1e-9;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::string fmt(double v) {
  std::string s = std::to_string(v);
  s.erase(s.find_last_not_of('0') + 1);
  if (!s.empty() && s.back() == '.') s.pop_back();
  return s;
}

std::shared_ptr<const lmp::FiniteLMP> lmp_of(const mc::ProcessModel& m) {
  const auto* e = std::get_if<mc::EmbeddedLMP>(&m.kind());
  if (!e) throw PreconditionError("expected an embedded LMP, got " + m.name());
  return e->lmp;
}

embed::EmbeddedProcess embedded(const mc::ProcessModel& m) { return embed::EmbeddedProcess{lmp_of(m), m}; }

const std::vector<std::size_t>& base_map_of(const FDHom& h) {
  if (!h.base_map) throw PreconditionError(h.name + " is not a map between embedded LMPs");
  return *h.base_map;
}

bool same_lmp(const mc::ProcessModel& a, const mc::ProcessModel& b) {
  const auto la = lmp_of(a), lb = lmp_of(b);
  return la == lb || *la == *lb;
}

std::vector<double> feature(const State& s) {
  return std::visit([](const auto& v) -> std::vector<double> {
    using T = std::decay_t<decltype(v)>;
    if constexpr (std::is_same_v<T, double>) return {v};
    else if constexpr (std::is_same_v<T, ClockedState>) return {static_cast<double>(v.base), v.clock};
    else if constexpr (std::is_same_v<T, BranchPoint>) return {static_cast<double>(v.branch), v.pos};
    else return {kInf};
  }, s);
}

double real_map(const State& s, double (*f)(double)) {
  if (is_cemetery(s)) return std::nan("");
  return f(as_real(s));
}

FDHom real_hom(std::string name, mc::ProcessModel src, mc::ProcessModel tgt, double (*f)(double),
               std::vector<Generator> deck) {
  return FDHom{std::move(name), std::move(src), std::move(tgt),
               [f](const State& s) -> State {
                 if (is_cemetery(s)) return s;
                 return real_map(s, f);
               },
               std::move(deck), std::nullopt};
}

double wrap(double theta) {
  double t = std::remainder(theta, kTwoPi);
  if (t <= -std::numbers::pi) t += kTwoPi;
  return t;
}

std::string describe_class(const std::vector<std::size_t>& class_of, std::size_t c, std::size_t n1) {
  std::string out = "{";
  bool first = true;
  for (std::size_t i = 0; i < class_of.size(); ++i) {
    if (class_of[i] != c) continue;
    if (!first) out += ",";
    out += i < n1 ? "E1:" + std::to_string(i) : "E3:" + std::to_string(i - n1);
    first = false;
  }
  return out + "}";
}

}  // namespace

FDHom compose(const FDHom& g, const FDHom& f, std::vector<Generator> deck) {
  FDHom out{g.name + " o " + f.name, f.source, g.target,
            [gm = g.map, fm = f.map](const State& s) { return gm(fm(s)); }, std::move(deck), std::nullopt};
  if (f.base_map && g.base_map) {
    std::vector<std::size_t> m(f.base_map->size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = g.base_map->at(f.base_map->at(i));
    out.base_map = std::move(m);
  }
  return out;
}

FDHom identity_hom(const mc::ProcessModel& m) {
  FDHom h{"id", m, m, [](const State& s) { return s; }, {}, std::nullopt};
  if (const auto* e = std::get_if<mc::EmbeddedLMP>(&m.kind())) {
    std::vector<std::size_t> id(e->lmp->size());
    std::iota(id.begin(), id.end(), 0);
    h.base_map = std::move(id);
  }
  return h;
}

FDHom finite_hom(const embed::EmbeddedProcess& source, const embed::EmbeddedProcess& target,
                 std::vector<std::size_t> base_map, std::string name) {
  if (base_map.size() != source.size()) throw DomainError(name + ": base map has the wrong length");
  for (std::size_t v : base_map)
    if (v >= target.size()) throw DomainError(name + ": base map leaves the target");
  std::vector<Generator> deck;
  // Cycles of each fibre generate the kernel.
  for (std::size_t w = 0; w < target.size(); ++w) {
    std::vector<std::size_t> fibre;
    for (std::size_t z = 0; z < base_map.size(); ++z)
      if (base_map[z] == w) fibre.push_back(z);
    if (fibre.size() < 2) continue;
    for (int dir : {1, -1})
      deck.push_back(Generator::custom((dir > 0 ? "cycle fibre " : "uncycle fibre ") + std::to_string(w),
                                       [fibre, dir](const State& s) -> State {
                                         const auto* c = std::get_if<ClockedState>(&s);
                                         if (!c) return s;
                                         const auto it = std::find(fibre.begin(), fibre.end(), c->base);
                                         if (it == fibre.end()) return s;
                                         const std::size_t i = static_cast<std::size_t>(it - fibre.begin());
                                         const std::size_t k = fibre.size();
                                         return ClockedState{fibre[(i + (dir > 0 ? 1 : k - 1)) % k], c->clock};
                                       }));
  }
  auto bm = std::make_shared<const std::vector<std::size_t>>(base_map);
  return FDHom{std::move(name), source.model, target.model,
               [bm](const State& s) -> State {
                 if (is_cemetery(s)) return s;
                 const auto& c = std::get<ClockedState>(s);
                 return ClockedState{bm->at(c.base), c.clock};
               },
               std::move(deck), std::move(base_map)};
}

bisim::CheckReport verify_hom(const FDHom& h, const std::vector<State>& grid, const std::vector<double>& times,
                              std::size_t n, std::uint64_t seed, double z_crit, double grid_step) {
  if (grid.empty()) throw PreconditionError("verify_hom needs a nonempty grid");
  if (times.empty()) throw PreconditionError("verify_hom needs at least one time");
  bisim::CheckReport r;
  r.check = "homomorphism " + h.name;
  r.details["n"] = n;
  r.details["z_crit"] = z_crit;
  const auto tgt_space = h.target.space();
  for (const auto& x : grid) {
    ++r.comparisons;
    const State y = h(x);
    if (!tgt_space.contains(y)) {
      r.passed = false;
      r.findings.push_back({"image outside the target space", x, y, 0.0});
      continue;
    }
    if (h.source.obs()(x) != h.target.obs()(y)) {
      r.passed = false;
      r.findings.push_back({"obs does not commute", x, y, 0.0});
    }
  }
  if (!r.passed) return r;

  const double t_max = *std::max_element(times.begin(), times.end());
  const double horizon = std::max(t_max, 100.0 * grid_step);
  const auto src = h.source.with_resolution(horizon, grid_step);
  const auto tgt = h.target.with_resolution(horizon, grid_step);
  double worst = -kInf;
  std::uint64_t stream = 0;
  for (const auto& x : grid) {
    const State y = h(x);
    const auto a = mc::sample_marginals(src, x, times, n, mc::derive_seed(seed, stream++));
    const auto b = mc::sample_marginals(tgt, y, times, n, mc::derive_seed(seed, stream++));
    std::vector<std::vector<double>> fa(times.size(), std::vector<double>(n)), fb = fa;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < times.size(); ++k) {
        fa[k][i] = stats::state_feature(h(a[i][k]));
        fb[k][i] = stats::state_feature(b[i][k]);
      }
    auto judge = [&](const stats::TwoSampleResult& t, const std::string& what) {
      ++r.comparisons;
      worst = std::max(worst, t.z);
      if (t.z > z_crit) {
        r.passed = false;
        r.findings.push_back({what, x, y, t.z});
      }
    };
    for (std::size_t k = 0; k < times.size(); ++k)
      judge(stats::two_sample_chi2(fa[k], fb[k]), "marginal at t=" + fmt(times[k]) + " differs");
    for (std::size_t k = 0; k + 1 < times.size(); ++k)
      judge(stats::two_sample_chi2_joint(fa[k], fa[k + 1], fb[k], fb[k + 1]),
            "joint marginal at t=" + fmt(times[k]) + "," + fmt(times[k + 1]) + " differs");
  }
  r.details["max_z"] = worst;
  return r;
}

bisim::CheckReport verify_finite_hom(const FDHom& h) {
  const auto& m = base_map_of(h);
  const auto src = lmp_of(h.source), tgt = lmp_of(h.target);
  bisim::CheckReport r;
  r.check = "finite homomorphism " + h.name;
  if (m.size() != src->size()) throw DomainError(h.name + ": base map has the wrong length");
  if (src->ap_names() != tgt->ap_names()) {
    r.passed = false;
    r.findings.push_back({"proposition names differ", Cemetery{}, Cemetery{}, 0.0});
    return r;
  }
  for (std::size_t z = 0; z < src->size(); ++z) {
    const State x = ClockedState{z, 0.0}, y = ClockedState{m[z], 0.0};
    ++r.comparisons;
    if (src->label(z) != tgt->label(m[z])) {
      r.passed = false;
      r.findings.push_back({"labels do not commute", x, y, 0.0});
    }
    for (std::size_t w = 0; w < tgt->size(); ++w) {
      double fibre = 0.0;
      for (std::size_t u = 0; u < src->size(); ++u)
        if (m[u] == w) fibre += src->tau(z, u);
      ++r.comparisons;
      const double gap = std::fabs(fibre - tgt->tau(m[z], w));
      if (gap > kTolerance) {
        r.passed = false;
        r.findings.push_back({"mass into the fibre over " + std::to_string(w) + " differs", x, y, gap});
      }
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// The four-process example

mc::ProcessModel line_model() {
  return mc::ProcessModel(mc::BrownianMotion{}, ObservationMap::from_sets({"integer"}, {StateSet::integers()}));
}
mc::ProcessModel unit_model() {
  return mc::ProcessModel(mc::ReflectedBM{0.0, 1.0}, ObservationMap::from_sets({"end"}, {StateSet::points({0.0, 1.0})}));
}
mc::ProcessModel half_model() {
  return mc::ProcessModel(mc::ReflectedBM{0.0, 0.5}, ObservationMap::from_sets({"zero"}, {StateSet::point(0.0)}));
}
mc::ProcessModel circle_model() {
  return mc::ProcessModel(mc::CircleBM{1.0 / kTwoPi}, ObservationMap::from_sets({"zero"}, {StateSet::point(0.0)}));
}

double phi1(double theta) { return std::fabs(theta) / kTwoPi; }

double phi2(double x) { return x <= 0.5 ? x : 1.0 - x; }

double phi3(double x) {
  const double y = std::ceil(x - 0.5);
  return kTwoPi * (x - y);
}

double phi4(double x) {
  const double n = std::floor(x / 2.0);
  const double u = x - 2.0 * n;
  return u < 1.0 ? u : 2.0 - u;
}

std::vector<FDHom> builtin_homs() {
  const auto flip = Generator::custom("theta -> -theta", [](const State& s) -> State {
    if (is_cemetery(s)) return s;
    return wrap(-as_real(s));
  });
  std::vector<FDHom> out;
  out.push_back(real_hom("phi1", circle_model(), half_model(), phi1, {flip}));
  out.push_back(real_hom("phi2", unit_model(), half_model(), phi2, {Generator::reflect_about(0.5)}));
  out.push_back(real_hom("phi3", line_model(), circle_model(), phi3, {Generator::translate(1.0)}));
  out.push_back(real_hom("phi4", line_model(), unit_model(), phi4,
                         {Generator::reflect_about(0.0), Generator::translate(2.0)}));
  out.push_back(compose(out[1], out[3], {Generator::reflect_about(0.0), Generator::translate(1.0)}));
  out.push_back(compose(out[0], out[2], {Generator::reflect_about(0.0), Generator::translate(1.0)}));
  return out;
}

SymmetryGroup hom_kernel_bisim(const FDHom& h) {
  return SymmetryGroup(
      h.source.space(), h.deck, [map = h.map](const State& s) { return feature(map(s)); }, "kernel of " + h.name);
}

// ---------------------------------------------------------------------------
// Finite pushouts and cospans

Pushout pushout_finite(const FDHom& f, const FDHom& g) {
  const auto& fm = base_map_of(f);
  const auto& gm = base_map_of(g);
  if (!same_lmp(f.source, g.source)) throw PreconditionError("f and g must share their source");
  for (const auto* h : {&f, &g}) {
    const auto rep = verify_finite_hom(*h);
    if (!rep.passed) throw PreconditionError(h->name + " is not a homomorphism: " + rep.findings.front().what);
  }
  const auto l1 = lmp_of(f.target), l3 = lmp_of(g.target);
  if (l1->ap_names() != l3->ap_names()) throw PreconditionError("targets use different propositions");
  const std::size_t n1 = l1->size(), n3 = l3->size();

  std::vector<std::size_t> parent(n1 + n3);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t z = 0; z < fm.size(); ++z) parent[find(fm[z])] = find(n1 + gm[z]);
  std::vector<std::size_t> roots(n1 + n3);
  for (std::size_t i = 0; i < roots.size(); ++i) roots[i] = find(i);
  const auto classes = FinitePartition::from_labels(roots);
  std::vector<std::size_t> class_of = classes.labels();
  const std::size_t k = classes.block_count();

  auto label_of = [&](std::size_t i) { return i < n1 ? l1->label(i) : l3->label(i - n1); };
  auto row_of = [&](std::size_t i) {
    std::vector<double> row(k, 0.0);
    if (i < n1) {
      for (std::size_t v = 0; v < n1; ++v) row[class_of[v]] += l1->tau(i, v);
    } else {
      for (std::size_t v = 0; v < n3; ++v) row[class_of[n1 + v]] += l3->tau(i - n1, v);
    }
    return row;
  };

  lmp::Matrix tau(k);
  std::vector<std::uint64_t> labels(k);
  std::vector<bool> seen(k, false);
  std::vector<std::vector<double>> rows(k);
  for (std::size_t i = 0; i < n1 + n3; ++i) {
    const std::size_t c = class_of[i];
    const auto row = row_of(i);
    if (!seen[c]) {
      seen[c] = true;
      labels[c] = label_of(i);
      rows[c] = row;
      continue;
    }
    if (labels[c] != label_of(i))
      throw ConstructionError("class " + describe_class(class_of, c, n1) + " mixes observations");
    for (std::size_t d = 0; d < k; ++d)
      if (std::fabs(rows[c][d] - row[d]) > kTolerance)
        throw ConstructionError("class " + describe_class(class_of, c, n1) + " has inconsistent kernel rows");
  }
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t d = 0; d < k; ++d) tau(c, d) = rows[c][d];

  const auto e1 = embedded(f.target), e3 = embedded(g.target);
  auto glued = embed::embed_lmp(lmp::FiniteLMP(tau, l1->ap_names(), labels), f.target.horizon());
  std::vector<std::size_t> m1(class_of.begin(), class_of.begin() + static_cast<std::ptrdiff_t>(n1));
  std::vector<std::size_t> m3(class_of.begin() + static_cast<std::ptrdiff_t>(n1), class_of.end());
  auto phi1 = finite_hom(e1, glued, std::move(m1), "phi1");
  auto phi3 = finite_hom(e3, glued, std::move(m3), "phi3");
  return Pushout{std::move(glued), std::move(phi1), std::move(phi3), std::move(class_of)};
}

std::optional<FDHom> mediating_map(const Pushout& p, const FDHom& f, const FDHom& g, const FDHom& psi1,
                                   const FDHom& psi3) {
  const auto& fm = base_map_of(f);
  const auto& gm = base_map_of(g);
  const auto& m1 = base_map_of(psi1);
  const auto& m3 = base_map_of(psi3);
  if (!same_lmp(psi1.target, psi3.target)) return std::nullopt;
  const std::size_t n1 = m1.size();
  if (n1 + m3.size() != p.class_of.size()) return std::nullopt;
  for (std::size_t z = 0; z < fm.size(); ++z)
    if (m1[fm[z]] != m3[gm[z]]) return std::nullopt;

  std::vector<std::optional<std::size_t>> gamma(p.glued.size());
  for (std::size_t i = 0; i < p.class_of.size(); ++i) {
    const std::size_t image = i < n1 ? m1[i] : m3[i - n1];
    auto& slot = gamma[p.class_of[i]];
    if (slot && *slot != image) return std::nullopt;
    slot = image;
  }
  std::vector<std::size_t> base(gamma.size());
  for (std::size_t c = 0; c < gamma.size(); ++c) base[c] = gamma[c].value();
  auto h = finite_hom(p.glued, embedded(psi1.target), std::move(base), "gamma");
  if (!verify_finite_hom(h).passed) return std::nullopt;
  return h;
}

namespace {

/// Calls fn with every map {0..n-1} -> {0..k-1}.
void for_each_map(std::size_t n, std::size_t k, const std::function<void(const std::vector<std::size_t>&)>& fn) {
  std::vector<std::size_t> m(n, 0);
  if (k == 0) {
    if (n == 0) fn(m);
    return;
  }
  while (true) {
    fn(m);
    std::size_t i = 0;
    while (i < n && ++m[i] == k) m[i++] = 0;
    if (i == n) return;
  }
}

}  // namespace

UniversalReport check_universal_property(const Pushout& p, const FDHom& f, const FDHom& g,
                                         const std::vector<embed::EmbeddedProcess>& targets) {
  UniversalReport rep;
  const auto e1 = embedded(f.target), e3 = embedded(g.target);
  const auto& fm = base_map_of(f);
  const auto& gm = base_map_of(g);
  const auto& p1 = base_map_of(p.phi1);
  const auto& p3 = base_map_of(p.phi3);
  for (const auto& t : targets) {
    ++rep.targets;
    std::vector<std::vector<std::size_t>> homs1, homs3, homs4;
    for_each_map(e1.size(), t.size(), [&](const std::vector<std::size_t>& m) {
      if (verify_finite_hom(finite_hom(e1, t, m, "psi1")).passed) homs1.push_back(m);
    });
    for_each_map(e3.size(), t.size(), [&](const std::vector<std::size_t>& m) {
      if (verify_finite_hom(finite_hom(e3, t, m, "psi3")).passed) homs3.push_back(m);
    });
    for_each_map(p.glued.size(), t.size(), [&](const std::vector<std::size_t>& m) {
      if (verify_finite_hom(finite_hom(p.glued, t, m, "gamma")).passed) homs4.push_back(m);
    });
    for (const auto& m1 : homs1)
      for (const auto& m3 : homs3) {
        bool commutes = true;
        for (std::size_t z = 0; z < fm.size() && commutes; ++z) commutes = m1[fm[z]] == m3[gm[z]];
        if (!commutes) continue;
        ++rep.cocones;
        std::size_t factorings = 0;
        const std::vector<std::size_t>* found = nullptr;
        for (const auto& m4 : homs4) {
          bool ok = true;
          for (std::size_t i = 0; i < m1.size() && ok; ++i) ok = m4[p1[i]] == m1[i];
          for (std::size_t i = 0; i < m3.size() && ok; ++i) ok = m4[p3[i]] == m3[i];
          if (ok) {
            ++factorings;
            found = &m4;
          }
        }
        const auto med = mediating_map(p, f, g, finite_hom(e1, t, m1, "psi1"), finite_hom(e3, t, m3, "psi3"));
        if (factorings != 1 || !med || *med->base_map != *found) ++rep.failures;
      }
  }
  return rep;
}

Cospan cospan_from_bisim(const embed::EmbeddedProcess& a, const embed::EmbeddedProcess& b, const FinitePartition& w) {
  if (a.base->ap_names() != b.base->ap_names()) throw PreconditionError("processes use different propositions");
  const auto u = lmp::disjoint_union(*a.base, *b.base);
  if (w.size() != u.size()) throw DomainError("relation size does not match the disjoint union");
  if (!lmp::verify_dt_bisim(u, w)) throw PreconditionError("not a bisimulation of the disjoint union: " + w.describe());

  auto apex = embed::embed_lmp(lmp::quotient(u, w), a.model.horizon());
  const std::size_t n1 = a.size(), n2 = b.size();
  std::vector<std::size_t> fm(n1), gm(n2);
  for (std::size_t i = 0; i < n1; ++i) fm[i] = w.block_of(i);
  for (std::size_t j = 0; j < n2; ++j) gm[j] = w.block_of(n1 + j);
  Cospan c{apex, finite_hom(a, apex, fm, "f"), finite_hom(b, apex, gm, "g")};
  for (const auto* h : {&c.f, &c.g}) {
    const auto rep = verify_finite_hom(*h);
    if (!rep.passed) throw ConstructionError(h->name + " is not a homomorphism: " + rep.findings.front().what);
  }
  for (std::size_t i = 0; i < n1; ++i)
    for (std::size_t j = 0; j < n2; ++j)
      if (w.related(i, n1 + j) != (fm[i] == gm[j])) throw ConstructionError("f(x) = g(y) does not match the relation");
  for (std::size_t i = 0; i < n1; ++i)
    for (std::size_t j = 0; j < n1; ++j)
      if (w.related(i, j) != (fm[i] == fm[j])) throw ConstructionError("f(x) = f(x') does not match the relation");
  for (std::size_t i = 0; i < n2; ++i)
    for (std::size_t j = 0; j < n2; ++j)
      if (w.related(n1 + i, n1 + j) != (gm[i] == gm[j]))
        throw ConstructionError("g(y) = g(y') does not match the relation");
  return c;
}

}  // namespace fdbisim::cospan
