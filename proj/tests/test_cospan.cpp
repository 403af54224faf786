#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "fdbisim/cospan.hpp"
#include "support.hpp"

using namespace fdbisim;
using namespace fdbisim::cospan;
using lmp::FiniteLMP;
using lmp::Matrix;

namespace {

FiniteLMP make_lmp(std::vector<std::vector<double>> rows, std::vector<std::uint64_t> labels) {
  Matrix tau(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.size(); ++j) tau(i, j) = rows[i][j];
  return FiniteLMP(tau, {"P"}, std::move(labels));
}

double nearest_integer_distance(double x) { return std::fabs(x - std::round(x)); }

const FDHom& hom(const std::vector<FDHom>& hs, const std::string& name) {
  for (const auto& h : hs)
    if (h.name == name) return h;
  throw std::runtime_error("no hom " + name);
}

std::vector<State> grid_for(const std::string& name) {
  if (name == "phi1") return {0.0, 1.0, -2.5, std::numbers::pi};
  if (name == "phi2") return {0.0, 0.3, 0.75, 1.0};
  return {0.0, 0.3, -1.6, 2.5};
}

std::vector<embed::EmbeddedProcess> targets_for(const std::vector<const FiniteLMP*>& sources) {
  std::vector<embed::EmbeddedProcess> out;
  for (const auto* l : sources)
    for (auto& q : testsupport::small_quotients(*l, 3)) out.push_back(embed::embed_lmp(std::move(q)));
  out.push_back(embed::embed_lmp(make_lmp({{1.0}}, {0})));
  out.push_back(embed::embed_lmp(make_lmp({{0.0}}, {0})));
  out.push_back(embed::embed_lmp(make_lmp({{1.0, 0.0}, {0.5, 0.0}}, {0, 1})));
  return out;
}

}  // namespace

TEST_CASE("the four maps: spot values and the common composite") {
  CHECK(phi2(0.75) == 0.25);
  CHECK(phi3(0.5) == doctest::Approx(std::numbers::pi).epsilon(1e-15));
  CHECK(phi3(-0.5) == doctest::Approx(std::numbers::pi).epsilon(1e-15));
  CHECK(phi3(1.25) == doctest::Approx(std::numbers::pi / 2));
  CHECK(phi3(0.75) == doctest::Approx(-std::numbers::pi / 2));
  CHECK(phi4(1.75) == 0.25);
  CHECK(phi4(3.0) == 1.0);
  CHECK(phi4(-0.25) == 0.25);
  CHECK(phi1(-std::numbers::pi) == doctest::Approx(0.5));
  const auto hs = builtin_homs();
  CHECK(hs.size() == 6);
  const auto& a = hom(hs, "phi2 o phi4");
  const auto& b = hom(hs, "phi1 o phi3");
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double x = -5.0 + 10.0 * i / 9999.0;
    const double fa = as_real(a(x)), fb = as_real(b(x));
    worst = std::max({worst, std::fabs(fa - fb), std::fabs(fa - nearest_integer_distance(x))});
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("obs commutes exactly for every built-in map") {
  for (const auto& h : builtin_homs()) {
    std::vector<double> xs;
    if (h.name == "phi1") {
      for (int i = -8; i <= 8; ++i) xs.push_back(i * std::numbers::pi / 8);
    } else if (h.name == "phi2") {
      for (int i = 0; i <= 16; ++i) xs.push_back(i / 16.0);
    } else {
      for (int i = -32; i <= 32; ++i) xs.push_back(i / 8.0);
    }
    for (double x : xs) CHECK_MESSAGE(h.source.obs()(x) == h.target.obs()(h(x)), h.name << " at " << x);
  }
}

TEST_CASE("marginal tests accept the built-in maps") {
  const auto hs = builtin_homs();
  for (const auto& h : hs) {
    const auto r = verify_hom(h, grid_for(h.name), {0.25, 0.5, 1.0}, 20000, 7);
    CHECK_MESSAGE(r.passed, h.name << " max z " << r.details["max_z"].get<double>());
  }
  const auto phi2_full = verify_hom(hom(hs, "phi2"), {0.75}, {0.25, 0.5, 1.0}, 100000, 3);
  CHECK(phi2_full.passed);
  const mc::ProcessModel bm(mc::BrownianMotion{}, ObservationMap{});
  CHECK(verify_hom(identity_hom(bm), {0.0, 1.0}, {0.5, 1.0}, 20000, 1).passed);
}

TEST_CASE("marginal tests reject a map that scales variance") {
  const mc::ProcessModel bm(mc::BrownianMotion{}, ObservationMap{});
  const FDHom half{"x/2", bm, bm, [](const State& s) -> State { return as_real(s) / 2.0; }, {}, std::nullopt};
  const auto r = verify_hom(half, {0.0}, {0.5, 1.0}, 100000, 2);
  CHECK_FALSE(r.passed);
  CHECK(r.details["max_z"].get<double>() > 100.0);
  // Obs failures are found before any sampling.
  const FDHom shift{"x+1/2", cospan::line_model(), cospan::line_model(),
                    [](const State& s) -> State { return as_real(s) + 0.5; }, {}, std::nullopt};
  const auto o = verify_hom(shift, {0.0}, {1.0}, 100, 1);
  CHECK_FALSE(o.passed);
  CHECK(o.findings.front().what == "obs does not commute");
  CHECK_THROWS_AS(verify_hom(shift, {}, {1.0}, 100, 1), PreconditionError);
}

TEST_CASE("kernel relations of the maps") {
  const auto hs = builtin_homs();
  const auto k4 = hom_kernel_bisim(hom(hs, "phi4"));
  CHECK(relation_related(k4, 0.25, 1.75));
  CHECK_FALSE(relation_related(k4, 0.25, 1.25));
  CHECK(bisim::check_initiation1(hom(hs, "phi4").source, k4, 200, 1).passed);
  const auto id = hom_kernel_bisim(identity_hom(line_model()));
  CHECK(relation_related(id, 0.3, 0.3));
  CHECK_FALSE(relation_related(id, 0.3, -0.3));

  // Both composites give the greatest bisimulation of Brownian motion with
  // the integers marked: frac(x) = frac(y) or frac(x) = 1 - frac(y).
  const auto ka = hom_kernel_bisim(hom(hs, "phi2 o phi4"));
  const auto kb = hom_kernel_bisim(hom(hs, "phi1 o phi3"));
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> pick(-400, 400);
  std::size_t related = 0;
  for (int i = 0; i < 10000; ++i) {
    const double x = pick(rng) / 80.0, y = pick(rng) / 80.0;
    const double fx = x - std::floor(x), fy = y - std::floor(y);
    const bool oracle = std::fabs(fx - fy) < 1e-12 || std::fabs(fx - (1.0 - fy)) < 1e-12 ||
                        (fx == 0.0 && fy == 0.0);
    CHECK(relation_related(ka, x, y) == oracle);
    CHECK(relation_related(kb, x, y) == oracle);
    if (relation_related(k4, x, y)) CHECK(oracle);
    related += oracle;
  }
  CHECK(related > 100);
  CHECK(bisim::check_initiation1(line_model(), ka, 200, 2).passed);
}

TEST_CASE("finite homomorphisms are checked exactly") {
  const auto two = embed::embed_lmp(make_lmp({{0.5, 0.5}, {0.25, 0.75}}, {0, 0}));
  const auto one = embed::embed_lmp(make_lmp({{1.0}}, {0}));
  CHECK(verify_finite_hom(finite_hom(two, one, {0, 0}, "collapse")).passed);
  const auto leaky = embed::embed_lmp(make_lmp({{0.5}}, {0}));
  CHECK_FALSE(verify_finite_hom(finite_hom(two, leaky, {0, 0}, "to leaky")).passed);
  const auto h = finite_hom(two, one, {0, 0}, "collapse");
  CHECK(std::get<ClockedState>(h(ClockedState{1, 0.25})) == ClockedState{0, 0.25});
  CHECK(verify_hom(h, {ClockedState{0, 0.0}, ClockedState{1, 0.5}}, {0.5, 1.5, 2.5}, 20000, 4).passed);
  const auto k = hom_kernel_bisim(h);
  CHECK(relation_related(k, ClockedState{0, 0.5}, ClockedState{1, 0.5}));
  CHECK_FALSE(relation_related(k, ClockedState{0, 0.5}, ClockedState{1, 0.25}));
}

TEST_CASE("pushout of identity legs is the target") {
  const auto e = embed::embed_lmp(make_lmp({{0.25, 0.5}, {0.0, 1.0}}, {1, 0}));
  const auto id = identity_hom(e.model);
  const auto p = pushout_finite(id, id);
  CHECK(p.glued.size() == 2);
  CHECK(*p.phi1.base_map == std::vector<std::size_t>{0, 1});
  CHECK(*p.phi1.base_map == *p.phi3.base_map);
  CHECK(*p.glued.base == *e.base);
  const FiniteLMP& l = *e.base;
  const auto u = check_universal_property(p, id, id, targets_for({&l}));
  CHECK(u.passed());
  CHECK(u.cocones > 0);
}

TEST_CASE("pushout gluing two chains along a point") {
  // E2 is a single absorbing point; it lands on the loop states of E1 and E3.
  const auto e2 = embed::embed_lmp(make_lmp({{1.0}}, {0}));
  const auto l1 = make_lmp({{1.0, 0.0}, {1.0, 0.0}}, {0, 1});
  const auto l3 = make_lmp({{1.0, 0.0}, {0.5, 0.0}}, {0, 0});
  const auto e1 = embed::embed_lmp(l1);
  const auto e3 = embed::embed_lmp(l3);
  const auto f = finite_hom(e2, e1, {0}, "f");
  const auto g = finite_hom(e2, e3, {0}, "g");
  const auto p = pushout_finite(f, g);
  REQUIRE(p.glued.size() == 3);
  // Hand construction: {a,c}, {b}, {d}.
  CHECK(p.class_of == std::vector<std::size_t>{0, 1, 0, 2});
  CHECK(p.glued.base->tau(0, 0) == 1.0);
  CHECK(p.glued.base->tau(1, 0) == 1.0);
  CHECK(p.glued.base->tau(2, 0) == 0.5);
  CHECK(p.glued.base->labels() == std::vector<std::uint64_t>{0, 1, 0});
  CHECK(verify_finite_hom(p.phi1).passed);
  CHECK(verify_finite_hom(p.phi3).passed);
  const auto lhs = compose(p.phi1, f), rhs = compose(p.phi3, g);
  CHECK(*lhs.base_map == *rhs.base_map);

  const auto u = check_universal_property(p, f, g, targets_for({&l1, &l3, p.glued.base.get()}));
  CHECK(u.passed());
  CHECK(u.cocones >= 1);

  // With symmetric loops there are many cocones, all of which factor.
  const auto loops = make_lmp({{1.0, 0.0}, {0.0, 1.0}}, {0, 0});
  const auto f2 = finite_hom(e2, embed::embed_lmp(loops), {0}, "f");
  const auto g2 = finite_hom(e2, embed::embed_lmp(make_lmp({{1.0}}, {0})), {0}, "g");
  const auto p2 = pushout_finite(f2, g2);
  CHECK(p2.glued.size() == 2);
  const auto three = make_lmp({{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}, {0, 0, 0});
  const auto u2 = check_universal_property(p2, f2, g2, targets_for({&three}));
  CHECK(u2.passed());
  CHECK(u2.cocones >= 9 + 4 + 1);

  // A leg that is not a homomorphism is refused.
  const auto bad = finite_hom(e2, e3, {1}, "bad");
  CHECK_THROWS_AS(pushout_finite(f, bad), PreconditionError);
}

TEST_CASE("cospans from bisimulations") {
  const auto swap = make_lmp({{0.0, 1.0}, {1.0, 0.0}}, {0, 0});
  const auto a = embed::embed_lmp(swap);
  const auto b = embed::embed_lmp(swap);
  const auto pointwise = FinitePartition(4, {{0, 2}, {1, 3}});
  const auto c = cospan_from_bisim(a, b, pointwise);
  CHECK(c.apex.size() == 2);
  CHECK(*c.f.base_map == std::vector<std::size_t>{0, 1});
  CHECK(*c.g.base_map == std::vector<std::size_t>{0, 1});
  const auto orbit = cospan_from_bisim(a, b, FinitePartition(4, {{0, 1, 2, 3}}));
  CHECK(orbit.apex.size() == 1);
  CHECK(orbit.apex.base->tau(0, 0) == 1.0);
  CHECK_THROWS_AS(cospan_from_bisim(a, embed::embed_lmp(make_lmp({{0.0, 1.0}, {1.0, 0.0}}, {0, 1})),
                                    FinitePartition(4, {{0, 1, 2, 3}})),
                  PreconditionError);
}

TEST_CASE("cospan iff clauses and the bisimilarity theorem on random pairs") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n1 = 1 + trial % 3, n2 = 1 + (trial / 3) % 3;
    const auto l1 = testsupport::random_lmp(rng, n1, true, 1);
    const auto l2 = testsupport::random_lmp(rng, n2, true, 1);
    const auto a = embed::embed_lmp(l1), b = embed::embed_lmp(l2);
    const auto u = lmp::disjoint_union(l1, l2);
    const auto top = testsupport::brute_force_greatest(u);
    std::vector<std::vector<bool>> glued(n1, std::vector<bool>(n2, false));
    testsupport::for_each_partition(n1 + n2, [&](const std::vector<std::size_t>& rgs) {
      if (!testsupport::is_dt_bisimulation(u, rgs)) return;
      const auto w = FinitePartition::from_labels(rgs);
      const auto c = cospan_from_bisim(a, b, w);
      const auto& f = *c.f.base_map;
      const auto& g = *c.g.base_map;
      for (std::size_t x = 0; x < n1; ++x)
        for (std::size_t y = 0; y < n2; ++y) {
          CHECK((rgs[x] == rgs[n1 + y]) == (f[x] == g[y]));
          if (f[x] == g[y]) glued[x][y] = true;
        }
      for (std::size_t x = 0; x < n1; ++x)
        for (std::size_t x2 = 0; x2 < n1; ++x2) CHECK((rgs[x] == rgs[x2]) == (f[x] == f[x2]));
      for (std::size_t y = 0; y < n2; ++y)
        for (std::size_t y2 = 0; y2 < n2; ++y2) CHECK((rgs[n1 + y] == rgs[n1 + y2]) == (g[y] == g[y2]));
    });
    for (std::size_t x = 0; x < n1; ++x)
      for (std::size_t y = 0; y < n2; ++y) CHECK(glued[x][y] == top.related(x, n1 + y));
  }
}
