// Acceptance run: one PASS/FAIL line per criterion, exit status 0 iff all pass.
// Usage: acceptance <path to the fdbisim CLI>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "fdbisim/analytic.hpp"
#include "fdbisim/bisim.hpp"
#include "fdbisim/cospan.hpp"
#include "fdbisim/embed.hpp"
#include "fdbisim/lmp.hpp"
#include "fdbisim/mc.hpp"
#include "support.hpp"

using namespace fdbisim;
using lmp::FiniteLMP;
using lmp::Matrix;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

// Composite Simpson on [a, b] with n (even) panels.
double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

FiniteLMP make_lmp(std::vector<std::vector<double>> rows, std::vector<std::uint64_t> labels) {
  Matrix tau(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.size(); ++j) tau(i, j) = rows[i][j];
  return FiniteLMP(tau, {"P"}, std::move(labels));
}

mc::ProcessModel bm_zero() {
  return mc::ProcessModel(mc::BrownianMotion{}, ObservationMap::from_sets({"zero"}, {StateSet::point(0.0)}));
}

// ---------------------------------------------------------------------------

Outcome brownian_hitting_law() {
  mc::set_worker_count(1);
  // Reflection principle: P^1(T_0 < 1) = P(|N| > 1) = 1 - 2 * int_0^1 phi.
  const double oracle =
      1.0 - 2.0 * simpson([](double u) { return std::exp(-u * u / 2.0) / std::sqrt(2.0 * std::numbers::pi); }, 0.0,
                          1.0, 2000);
  const auto m = bm_zero().with_resolution(1.0, 1e-3);
  const auto t0 = Clock::now();
  const auto est = mc::estimate_event(m, 1.0, mc::HitSetBefore{StateSet::point(0.0), 1.0}, 1000000, 20240601);
  const double secs = seconds_since(t0);
  mc::set_worker_count(0);
  const double z = (est.mean - oracle) / est.std_err;
  const bool ok = std::fabs(z) <= 3.29 && secs < 60.0 && std::fabs(oracle - analytic::bm_hit_zero_cdf(1.0, 1.0)) < 1e-12;
  return {ok, "estimate " + fmt(est.mean, 6) + " vs " + fmt(oracle, 6) + ", z " + fmt(z, 3) + ", " + fmt(secs, 3) +
                  " s single-threaded"};
}

Outcome gallery() {
  const auto entries = bisim::run_gallery({});
  std::size_t passed = 0;
  bool fork_exact = false;
  double worst_coverage = 1.0;
  for (const auto& e : entries) {
    passed += e.passed;
    for (const auto& c : e.checks) {
      if (c.check == "refute_maximality" && c.details.contains("coverage"))
        worst_coverage = std::min(worst_coverage, c.details["coverage"].get<double>());
      if (c.check == "fork_separation") {
        const auto& d = c.details;
        fork_exact = d["P^x1(obs(w(5)) = P)"].get<double>() == 1.0 && d["P^x2(obs(w(5)) = P)"].get<double>() == 0.0 &&
                     d["P^y1(obs(w(5)) = P)"].get<double>() == 0.5;
      }
    }
  }
  const bool ok = passed == entries.size() && entries.size() >= 11 && fork_exact && worst_coverage >= 0.99;
  return {ok, std::to_string(passed) + "/" + std::to_string(entries.size()) + " entries, min coverage " +
                  fmt(worst_coverage) + ", fork probabilities exact: " + (fork_exact ? "yes" : "no")};
}

Outcome naive_counterexample() {
  const auto m = bm_zero();
  const auto w = bisim::naive_witness();
  const auto zero = StateSet::point(0.0);
  const std::vector<StateSet> sets{StateSet::empty(), zero, zero.complement(), StateSet::everything()};
  const auto i1 = bisim::check_initiation1(m, w, 200, 1);
  const auto ind1 = bisim::check_induction1(m, w, {0.1, 0.5, 1.0, 2.0, 5.0}, sets, 20000, 1);
  bisim::RefuteOptions opt;
  const auto r = bisim::refute_maximality(m, w, bisim::builtin_family(m, bisim::FamilyKind::HittingCdf), opt);
  const auto refuted = r.details["related_separated"].get<std::size_t>();
  const bool ok = i1.passed && ind1.passed && refuted > 0;
  return {ok, std::string("initiation 1 ") + (i1.passed ? "passes" : "fails") + ", induction 1 " +
                  (ind1.passed ? "passes" : "fails") + ", B_t separates " + std::to_string(refuted) +
                  " related pairs"};
}

Outcome injectivity_lemmas() {
  const auto t0 = Clock::now();
  std::vector<double> ks;
  for (int i = 0; i < 50; ++i) ks.push_back(1.0 + 9.0 * i / 49.0);
  const double tol = 1e-6;
  std::size_t scans = 0, bad = 0;
  for (double a : {0.5, 1.0, 2.0}) {
    for (double z1 : {0.1, 0.25, 0.5, 0.77, 0.9}) {
      bool self = false;
      for (int i = 1; i < 1000; ++i) {
        const double z2 = i * 1e-3;
        const bool acc = analytic::g_injectivity_check(z1, z2, a, ks, tol);
        if (std::fabs(z2 - z1) < 1e-12) self = acc;
        if (acc && std::fabs(z2 - z1) > 2e-3) ++bad;
      }
      bad += !self;
      ++scans;
    }
    for (double z1 : {-0.8, -0.3, 0.0, 0.45, 0.9}) {
      bool self = false;
      for (int i = -999; i < 1000; ++i) {
        const double z2 = i * 1e-3;
        const bool acc = analytic::h_injectivity_check(z1, z2, a, ks, tol);
        if (std::fabs(z2 - z1) < 1e-12) self = acc;
        if (acc && std::fabs(z2 - z1) > 2e-3) ++bad;
      }
      bad += !self;
      ++scans;
    }
  }
  const double secs = seconds_since(t0);
  return {bad == 0 && secs < 5.0, std::to_string(scans) + " scans, " + std::to_string(bad) + " violations, " +
                                      fmt(secs, 3) + " s"};
}

Outcome dt_oracle_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(5);
  std::size_t agree = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + trial % 6;
    const auto l = testsupport::random_lmp(rng, n, trial % 4 != 0);
    agree += lmp::dt_bisim_refine(l) == testsupport::brute_force_greatest(l);
  }
  const double secs = seconds_since(t0);
  return {agree == 200 && secs < 30.0, std::to_string(agree) + "/200 equal, " + fmt(secs, 3) + " s"};
}

// Independent backward recursion for tau(x, A1) * ... : v_k = 1_{A_k} * (tau v_{k+1}).
std::vector<double> products_oracle(const FiniteLMP& l, const std::vector<std::vector<std::size_t>>& sets) {
  const std::size_t n = l.size();
  std::vector<double> v(n, 1.0);
  for (std::size_t k = sets.size(); k-- > 0;) {
    std::vector<double> in(n, 0.0);
    for (std::size_t z : sets[k]) in[z] = v[z];
    std::vector<double> next(n, 0.0);
    for (std::size_t x = 0; x < n; ++x)
      for (std::size_t z = 0; z < n; ++z) next[x] += l.tau(x, z) * in[z];
    v = next;
  }
  return v;
}

Outcome n_step_lemma() {
  std::mt19937_64 rng(17);
  std::size_t sequences = 0, violations = 0;
  for (std::size_t size = 1; size <= 5; ++size)
    for (int rep = 0; rep < 3; ++rep) {
      const auto l = testsupport::random_lmp(rng, size, true);
      const auto p = lmp::dt_bisim_refine(l);
      const auto sets = testsupport::closed_sets(p);
      for (std::size_t len = 1; len <= 4; ++len) {
        std::vector<std::size_t> idx(len, 0);
        while (true) {
          std::vector<std::vector<std::size_t>> seq;
          for (auto i : idx) seq.push_back(sets[i]);
          const auto oracle = products_oracle(l, seq);
          std::vector<double> got(size);
          for (std::size_t x = 0; x < size; ++x) {
            got[x] = lmp::n_step_product(l, x, seq);
            if (std::fabs(got[x] - oracle[x]) > 1e-9) ++violations;
          }
          for (std::size_t x = 0; x < size; ++x)
            for (std::size_t y = x + 1; y < size; ++y)
              if (p.related(x, y) && std::fabs(got[x] - got[y]) > 1e-9) ++violations;
          ++sequences;
          std::size_t k = 0;
          while (k < len && ++idx[k] == sets.size()) idx[k++] = 0;
          if (k == len) break;
        }
      }
    }
  return {violations == 0, std::to_string(sequences) + " closed set sequences, " + std::to_string(violations) +
                               " violations"};
}

Outcome embedding_round_trip() {
  std::mt19937_64 rng(99);
  const std::vector<double> grid{0.0, 0.2, 0.5, 0.99, 1.0, 1.7, 2.5, 4.25};
  std::size_t passed = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + trial % 5;
    const auto l = testsupport::random_lmp(rng, n, trial % 3 != 0);
    const auto top = testsupport::brute_force_greatest(l);
    const auto e = embed::embed_lmp(l);
    const auto lifted = embed::lift_dt_to_ct(l, top);
    const bool verified = embed::verify_embedded_bisim(e, lifted).passed;
    const bool round_trip = embed::project_ct_to_dt(e, lifted) == top;
    const bool theorem = embed::embedding_theorem(l, grid).passed();
    passed += verified && round_trip && theorem;
  }
  return {passed == 100, std::to_string(passed) + "/100 LMPs: lift verified, projection exact, theorem holds"};
}

std::vector<State> hom_grid(const std::string& name) {
  if (name == "phi1") return {0.0, 1.0, -2.5, std::numbers::pi};
  if (name == "phi2") return {0.0, 0.3, 0.75, 1.0};
  return {0.0, 0.3, -1.6, 2.5};
}

Outcome hom_gallery() {
  std::size_t passed = 0;
  std::string worst;
  const auto homs = cospan::builtin_homs();
  for (const auto& h : homs) {
    const auto r = cospan::verify_hom(h, hom_grid(h.name), {0.25, 0.5, 1.0}, 100000, 11, 4.0);
    passed += r.passed;
    if (!r.passed) worst += " " + h.name;
  }
  const mc::ProcessModel bm(mc::BrownianMotion{}, ObservationMap{});
  const cospan::FDHom half{"x/2", bm, bm, [](const State& s) -> State { return as_real(s) / 2.0; }, {}, std::nullopt};
  const auto broken = cospan::verify_hom(half, {0.0, 1.0}, {0.5, 1.0}, 100000, 12, 4.0);
  const bool ok = passed == homs.size() && !broken.passed;
  return {ok, std::to_string(passed) + "/" + std::to_string(homs.size()) + " maps (incl. composites) pass" + worst +
                  ", x/2 rejected with max z " + fmt(broken.details["max_z"].get<double>(), 4)};
}

std::vector<embed::EmbeddedProcess> small_targets(const std::vector<const FiniteLMP*>& sources) {
  std::vector<embed::EmbeddedProcess> out;
  for (const auto* l : sources)
    for (auto& q : testsupport::small_quotients(*l, 3)) out.push_back(embed::embed_lmp(std::move(q)));
  out.push_back(embed::embed_lmp(make_lmp({{1.0}}, {0})));
  out.push_back(embed::embed_lmp(make_lmp({{0.0}}, {0})));
  out.push_back(embed::embed_lmp(make_lmp({{1.0, 0.0}, {0.5, 0.0}}, {0, 1})));
  out.push_back(embed::embed_lmp(make_lmp({{0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}, {1.0, 0.0, 0.0}}, {0, 0, 0})));
  return out;
}

Outcome pushouts() {
  std::size_t examples = 0, cocones = 0, failures = 0;
  auto run = [&](const FiniteLMP& l2, const FiniteLMP& l1, const FiniteLMP& l3, std::vector<std::size_t> fm,
                 std::vector<std::size_t> gm) {
    const auto e2 = embed::embed_lmp(l2);
    const auto f = cospan::finite_hom(e2, embed::embed_lmp(l1), std::move(fm), "f");
    const auto g = cospan::finite_hom(e2, embed::embed_lmp(l3), std::move(gm), "g");
    const auto p = cospan::pushout_finite(f, g);
    if (*cospan::compose(p.phi1, f).base_map != *cospan::compose(p.phi3, g).base_map) ++failures;
    const auto u = cospan::check_universal_property(p, f, g, small_targets({&l1, &l3, p.glued.base.get()}));
    failures += u.failures;
    cocones += u.cocones;
    ++examples;
  };
  const auto point = make_lmp({{1.0}}, {0});
  run(point, make_lmp({{1.0, 0.0}, {1.0, 0.0}}, {0, 1}), make_lmp({{1.0, 0.0}, {0.5, 0.0}}, {0, 0}), {0}, {0});
  run(point, make_lmp({{1.0, 0.0}, {0.0, 1.0}}, {0, 0}), point, {0}, {0});
  const auto swap = make_lmp({{0.0, 1.0}, {1.0, 0.0}}, {0, 0});
  run(swap, point, swap, {0, 0}, {0, 1});
  const auto chain = make_lmp({{0.0, 0.5, 0.5}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}, {0, 1, 1});
  const auto two = make_lmp({{0.0, 1.0}, {0.0, 1.0}}, {0, 1});
  run(chain, two, two, {0, 1, 1}, {0, 1, 1});

  // Cospan iff clauses on every DT-bisimulation of random pairs.
  std::mt19937_64 rng(41);
  std::size_t relations = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n1 = 1 + trial % 3, n2 = 1 + (trial / 3) % 3;
    const auto l1 = testsupport::random_lmp(rng, n1, true, 1);
    const auto l2 = testsupport::random_lmp(rng, n2, true, 1);
    const auto a = embed::embed_lmp(l1), b = embed::embed_lmp(l2);
    const auto u = lmp::disjoint_union(l1, l2);
    testsupport::for_each_partition(n1 + n2, [&](const std::vector<std::size_t>& rgs) {
      if (!testsupport::is_dt_bisimulation(u, rgs)) return;
      const auto c = cospan::cospan_from_bisim(a, b, FinitePartition::from_labels(rgs));
      const auto& f = *c.f.base_map;
      const auto& g = *c.g.base_map;
      for (std::size_t x = 0; x < n1; ++x)
        for (std::size_t y = 0; y < n2; ++y) failures += (rgs[x] == rgs[n1 + y]) != (f[x] == g[y]);
      for (std::size_t x = 0; x < n1; ++x)
        for (std::size_t x2 = 0; x2 < n1; ++x2) failures += (rgs[x] == rgs[x2]) != (f[x] == f[x2]);
      for (std::size_t y = 0; y < n2; ++y)
        for (std::size_t y2 = 0; y2 < n2; ++y2) failures += (rgs[n1 + y] == rgs[n1 + y2]) != (g[y] == g[y2]);
      ++relations;
    });
  }
  return {failures == 0 && cocones > 0, std::to_string(examples) + " pushouts, " + std::to_string(cocones) +
                                            " cocones checked, " + std::to_string(relations) +
                                            " cospans, " + std::to_string(failures) + " failures"};
}

std::string run_capture(const std::string& cmd, int& status) {
  std::string out;
  std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen(cmd.c_str(), "r"), pclose);
  if (!pipe) {
    status = -1;
    return out;
  }
  std::array<char, 4096> buf{};
  std::size_t got = 0;
  while ((got = std::fread(buf.data(), 1, buf.size(), pipe.get())) > 0) out.append(buf.data(), got);
  status = pclose(pipe.release());
  return out;
}

Outcome determinism(const std::string& cli) {
  if (cli.empty()) return {false, "no CLI path given"};
  const std::string cmd = "'" + cli + "' gallery --seed 42";
  int s1 = 0, s2 = 0;
  const auto a = run_capture(cmd, s1);
  const auto b = run_capture(cmd, s2);
  const bool ok = s1 == 0 && s2 == 0 && !a.empty() && a == b;
  return {ok, std::to_string(a.size()) + " bytes, runs " + (a == b ? "identical" : "differ") + ", exit " +
                  std::to_string(s1) + "/" + std::to_string(s2)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"Brownian hitting law", brownian_hitting_law},
      {"greatest-bisimulation gallery", gallery},
      {"naive-definition counterexample", naive_counterexample},
      {"injectivity lemmas", injectivity_lemmas},
      {"DT oracle equivalence", dt_oracle_equivalence},
      {"n-step lemma", n_step_lemma},
      {"embedding round trip", embedding_round_trip},
      {"homomorphism gallery", hom_gallery},
      {"pushouts and cospans", pushouts},
      {"gallery determinism", [&] { return determinism(cli); }},
  };
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    all = all && o.passed;
    std::cout << "criterion " << i + 1 << " " << (o.passed ? "PASS" : "FAIL") << "  " << criteria[i].first << ": "
              << o.detail << std::endl;
  }
  return all ? 0 : 1;
}
