#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fdbisim/analytic.hpp"
#include "fdbisim/bisim.hpp"
#include "fdbisim/cospan.hpp"
#include "fdbisim/dsl.hpp"
#include "fdbisim/embed.hpp"
#include "fdbisim/lmp.hpp"
#include "fdbisim/mc.hpp"

using namespace fdbisim;
using json = nlohmann::ordered_json;

namespace {

enum Exit : int {
  kPass = 0,
  kRefuted = 1,
  kComputation = 2,
  kUsage = 64,
  kSyntax = 65,
  kUnreadable = 66,
  kSemantic = 67,
  kInternal = 70,
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UnreadableError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UnreadableError("cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

dsl::ModelFile load(const std::string& path) {
  const auto text = read_file(path);
  try {
    return dsl::parse_model(text);
  } catch (dsl::ParseError& e) {
    throw dsl::ParseError(e.kind(), e.line(), e.column(), path + ": " + e.message());
  }
}

State state_arg(const std::string& text, const dsl::ModelFile& m) {
  try {
    return dsl::parse_state(text, m);
  } catch (const dsl::ParseError& e) {
    throw UsageError(e.message());
  }
}

std::uint64_t default_seed() {
  if (const char* s = std::getenv("FDBISIM_SEED")) {
    char* end = nullptr;
    const auto v = std::strtoull(s, &end, 10);
    if (end && *end == '\0' && end != s) return v;
    throw UsageError("FDBISIM_SEED must be an unsigned integer");
  }
  return 42;
}

json header(const std::string& command) {
  json j;
  j["schema_version"] = 1;
  j["command"] = command;
  return j;
}

void emit(const json& j) { std::cout << j.dump(2) << '\n'; }

json state_json(const State& s) { return dsl::format_state(s); }

json lmp_json(const lmp::FiniteLMP& l) {
  json j;
  j["states"] = l.size();
  j["props"] = l.ap_names();
  json rows = json::array(), labels = json::array();
  for (std::size_t i = 0; i < l.size(); ++i) {
    json row = json::array();
    for (std::size_t k = 0; k < l.size(); ++k) row.push_back(l.tau(i, k));
    rows.push_back(row);
    json lab = json::array();
    for (std::size_t p = 0; p < l.ap_names().size(); ++p)
      if (l.label(i) >> p & 1) lab.push_back(l.ap_names()[p]);
    labels.push_back(lab);
  }
  j["rows"] = rows;
  j["labels"] = labels;
  return j;
}

json partition_json(const FinitePartition& p) { return p.blocks(); }

// ---------------------------------------------------------------------------
// check

struct CheckArgs {
  std::string model, relation;
  std::size_t n = 100000;
  std::optional<std::uint64_t> seed;
  double z_crit = mc::kDefaultZCrit;
  double grid_step = 0.0;
  std::size_t samples = 200;
};

int run_check(const CheckArgs& a) {
  auto mf = load(a.model);
  if (!a.relation.empty()) {
    std::string text = a.relation;
    if (std::ifstream probe(a.relation); probe) text = read_file(a.relation);
    mf.relation = dsl::parse_relation(text);
  }
  if (!mf.relation) throw UsageError("no relation given and the model file declares none");
  RelationWitness w;
  try {
    w = dsl::make_witness(*mf.relation, mf);
  } catch (const dsl::ParseError& e) {
    throw dsl::ParseError(e.kind(), 0, 0, "relation: " + e.message());
  }
  const auto seed = a.seed.value_or(default_seed());
  auto model = mf.model();
  if (a.grid_step > 0.0) model = model.with_resolution(model.horizon(), a.grid_step);

  std::vector<bisim::CheckReport> reports;
  reports.push_back(bisim::check_initiation1(model, w, a.samples, seed));
  if (mf.is_lmp()) {
    const auto l = mf.lmp();
    const auto& p = std::get<FinitePartition>(w);
    bisim::CheckReport dt;
    dt.check = "dt_bisimulation";
    dt.comparisons = 1;
    dt.passed = lmp::verify_dt_bisim(l, p);
    reports.push_back(dt);
    if (dt.passed) {
      const auto e = embed::embed_lmp(l);
      reports.push_back(embed::verify_embedded_bisim(e, embed::lift_dt_to_ct(l, p)));
    }
  } else {
    bisim::SymmetryOptions opt;
    opt.n = a.n;
    opt.seed = seed;
    opt.z_crit = a.z_crit;
    opt.grid_step = a.grid_step;
    reports.push_back(bisim::check_induction2_symmetry(model, w, opt));
  }
  bool passed = true;
  json j = header("check");
  j["model"] = model.name();
  j["relation"] = describe(w);
  j["seed"] = seed;
  j["n"] = a.n;
  j["z_crit"] = a.z_crit;
  json checks = json::array();
  for (const auto& r : reports) {
    checks.push_back(r.to_json());
    passed = passed && r.passed;
  }
  j["checks"] = checks;
  j["passed"] = passed;
  emit(j);
  return passed ? kPass : kRefuted;
}

// ---------------------------------------------------------------------------
// distinguish

struct DistinguishArgs {
  std::string model, x, y, family = "auto";
  std::size_t n = 100000;
  std::optional<std::uint64_t> seed;
  double z_crit = mc::kDefaultZCrit;
  bool with_mc = false;
};

bisim::FamilyKind family_kind(const std::string& s) {
  if (s == "bt") return bisim::FamilyKind::HittingCdf;
  if (s == "laplace") return bisim::FamilyKind::Laplace;
  if (s == "word") return bisim::FamilyKind::MonteCarlo;
  if (s == "exact") return bisim::FamilyKind::Exact;
  return bisim::FamilyKind::Auto;
}

int run_distinguish(const DistinguishArgs& a) {
  const auto mf = load(a.model);
  const auto model = mf.model();
  const State x = state_arg(a.x, mf), y = state_arg(a.y, mf);
  const auto seed = a.seed.value_or(default_seed());
  const auto family = bisim::builtin_family(model, family_kind(a.family));
  const auto v = bisim::separate_pair(model, family, x, y, a.n, seed, a.z_crit);

  json j = header("distinguish");
  j["model"] = model.name();
  j["x"] = state_json(x);
  j["y"] = state_json(y);
  j["family"] = family.name;
  j["verdict"] = v.separated ? "Distinguished" : "Indistinguishable";
  j["event"] = v.how;
  if (family.separates) {
    j["closed_form"] = true;
    if (std::holds_alternative<mc::BrownianMotion>(model.kind()) && family.kind == bisim::FamilyKind::HittingCdf &&
        model.obs()(0.0) != model.obs()(1e-9)) {
      j["gap"] = analytic::bm_hit_zero_cdf(std::fabs(as_real(x)), 1.0) -
                 analytic::bm_hit_zero_cdf(std::fabs(as_real(y)), 1.0);
      j["gap_event"] = "T_0 < 1";
    } else {
      j["gap"] = nullptr;
    }
    j["z"] = nullptr;
    if (a.with_mc) {
      // Sampled companion on the obs-closed events.
      const auto events = bisim::mc_events(model);
      const auto mcv = mc::distinguish(model, x, y, events, a.n, seed, a.z_crit);
      j["mc"] = {{"event", mc::describe(events[mcv.event_index], model.obs().size())},
                 {"gap", mcv.gap},
                 {"z", mcv.z_score},
                 {"distinguished", mcv.distinguished}};
    }
  } else if (family.kind == bisim::FamilyKind::Exact) {
    j["closed_form"] = false;
    j["gap"] = v.statistic;
    j["z"] = nullptr;
  } else {
    j["closed_form"] = false;
    const auto events = family.events(x, y);
    if (events.empty()) throw UnsupportedError("the family has no events for this pair");
    const auto mcv = mc::distinguish(model, x, y, events, a.n, seed, a.z_crit);
    j["gap"] = mcv.gap;
    j["z"] = mcv.z_score;
  }
  j["n"] = a.n;
  j["seed"] = seed;
  emit(j);
  return kPass;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string model, x0;
  std::size_t paths = 1;
  double horizon = 0.0, grid_step = 0.0;
  std::optional<std::uint64_t> seed;
};

int run_simulate(const SimulateArgs& a) {
  const auto mf = load(a.model);
  auto model = mf.model();
  const State x0 = state_arg(a.x0, mf);
  if (a.horizon > 0.0 || a.grid_step > 0.0)
    model = model.with_resolution(a.horizon > 0.0 ? a.horizon : model.horizon(),
                                  a.grid_step > 0.0 ? a.grid_step : model.grid_step());
  const auto seed = a.seed.value_or(default_seed());
  std::cout << "path_id,t,value\n";
  for (std::size_t i = 0; i < a.paths; ++i) {
    const auto tr = mc::sample_trajectory(model, x0, mc::derive_seed(seed, i));
    for (std::size_t k = 0; k < tr.values.size(); ++k)
      std::cout << i << ',' << dsl::format_number(tr.sample_times[k]) << ',' << dsl::format_state(tr.values[k])
                << '\n';
  }
  return kPass;
}

// ---------------------------------------------------------------------------
// hittime

struct HittimeArgs {
  std::string model, x0, target;
  std::optional<double> t, lambda;
  std::size_t n = 100000;
  std::optional<std::uint64_t> seed;
};

// Closed forms for one-point targets of motion on the line, two-point targets
// straddling the start for standard motion.
std::optional<double> closed_hit_cdf(const mc::ProcessModel& m, double x, const StateSet& c, double t) {
  const auto& spans = c.spans();
  if (c.is_complemented() || c.has_integers() || spans.size() != 1 || spans[0].lo != spans[0].hi) return std::nullopt;
  const double d = x - spans[0].lo;
  if (std::holds_alternative<mc::BrownianMotion>(m.kind())) return analytic::bm_hit_zero_cdf(std::fabs(d), t);
  if (const auto* db = std::get_if<mc::DriftedBM>(&m.kind())) {
    if (d == 0.0) return 1.0;
    const double a = d > 0 ? db->drift : -db->drift;
    return analytic::integrate([&](double s) { return analytic::drifted_bm_hit_zero_density(std::fabs(d), a, s); },
                               0.0, t);
  }
  return std::nullopt;
}

std::optional<double> closed_hit_laplace(const mc::ProcessModel& m, double x, const StateSet& c, double lambda) {
  const auto& spans = c.spans();
  if (c.is_complemented() || c.has_integers()) return std::nullopt;
  double mu = 0.0;
  if (const auto* db = std::get_if<mc::DriftedBM>(&m.kind())) mu = db->drift;
  else if (!std::holds_alternative<mc::BrownianMotion>(m.kind())) return std::nullopt;
  if (spans.size() == 1 && spans[0].lo == spans[0].hi) {
    const double d = x - spans[0].lo;
    const double r = std::sqrt(mu * mu + 2.0 * lambda);
    return d >= 0 ? std::exp(-d * (mu + r)) : std::exp(d * (r - mu));
  }
  if (mu == 0.0 && spans.size() == 2 && spans[0].lo == spans[0].hi && spans[1].lo == spans[1].hi &&
      spans[0].lo < x && x < spans[1].lo) {
    const double w = spans[1].lo - spans[0].lo;
    // Scaling: T for the interval of width w from x is w^2 times T for (0,1).
    return analytic::bm_two_barrier_laplace((x - spans[0].lo) / w, lambda * w * w);
  }
  return std::nullopt;
}

int run_hittime(const HittimeArgs& a) {
  if (a.t.has_value() == a.lambda.has_value()) throw UsageError("give exactly one of --t and --lambda");
  const auto mf = load(a.model);
  const auto model = mf.model();
  const State x0 = state_arg(a.x0, mf);
  dsl::SetSpec spec;
  try {
    spec = dsl::parse_set(a.target);
  } catch (const dsl::ParseError& e) {
    throw UsageError("target: " + e.message());
  }
  const auto target = spec.to_set();
  const auto seed = a.seed.value_or(default_seed());
  std::optional<double> closed;
  EstimateWithCI est;
  std::string quantity;
  double param = 0.0;
  if (a.t) {
    quantity = "cdf";
    param = *a.t;
    if (std::holds_alternative<double>(x0)) closed = closed_hit_cdf(model, as_real(x0), target, param);
    est = mc::estimate_event(model, x0, mc::HitSetBefore{target, param}, a.n, seed);
  } else {
    quantity = "laplace";
    param = *a.lambda;
    if (std::holds_alternative<double>(x0)) closed = closed_hit_laplace(model, as_real(x0), target, param);
    est = mc::estimate_hitting_laplace(model, x0, target, param, a.n, seed);
  }
  std::cout << "x0,target,quantity,parameter,closed_form,mc_mean,mc_se,n,z\n";
  const double z = closed && est.std_err > 0 ? (est.mean - *closed) / est.std_err : 0.0;
  std::cout << dsl::format_state(x0) << ",\"" << spec.kind;
  for (double v : spec.args) std::cout << ' ' << dsl::format_number(v);
  std::cout << "\"," << quantity << ',' << dsl::format_number(param) << ','
            << (closed ? dsl::format_number(*closed) : std::string("NA")) << ',' << dsl::format_number(est.mean)
            << ',' << dsl::format_number(est.std_err) << ',' << est.n_samples << ','
            << (closed ? dsl::format_number(z) : std::string("NA")) << '\n';
  return kPass;
}

// ---------------------------------------------------------------------------
// refine, embed, pushout

lmp::FiniteLMP load_lmp(const std::string& path) {
  const auto mf = load(path);
  if (!mf.is_lmp()) throw dsl::ParseError(dsl::ParseError::Kind::Semantic, 1, 1, path + ": expected an lmp model");
  return mf.lmp();
}

int run_refine(const std::string& path) {
  const auto l = load_lmp(path);
  const auto p = lmp::dt_bisim_refine(l);
  json j = header("refine");
  j["states"] = l.size();
  j["blocks"] = partition_json(p);
  j["block_count"] = p.block_count();
  emit(j);
  return kPass;
}

int run_embed(const std::string& path, double t, std::size_t grid) {
  const auto l = load_lmp(path);
  const auto e = embed::embed_lmp(l);
  json j = header("embed");
  j["lmp"] = lmp_json(l);
  j["t"] = t;
  json kernels = json::array();
  for (std::size_t x = 0; x < l.size(); ++x) {
    const auto row = embed::kernel(e, ClockedState{x, 0.0}, t);
    json k;
    k["from"] = dsl::format_state(ClockedState{x, 0.0});
    k["clock"] = row.clock;
    k["mass"] = row.mass;
    k["death"] = row.death;
    kernels.push_back(k);
  }
  j["kernel"] = kernels;
  const auto p = lmp::dt_bisim_refine(l);
  const auto lifted = embed::lift_dt_to_ct(l, p);
  const auto rep = embed::verify_embedded_bisim(e, lifted);
  j["dt_bisimulation"] = partition_json(p);
  j["lift"] = {{"time_coherent", lifted.time_coherent()}, {"verification", rep.to_json()}};
  std::vector<double> t_grid;
  for (std::size_t i = 0; i < grid; ++i) t_grid.push_back(0.25 + 0.5 * static_cast<double>(i));
  const auto th = embed::embedding_theorem(l, t_grid);
  j["theorem"] = {{"t_grid", t_grid},
                  {"lift_verified", th.lift_verified},
                  {"round_trip", th.round_trip},
                  {"biconditional", th.biconditional},
                  {"pairs_checked", th.pairs_checked},
                  {"passed", th.passed()}};
  emit(j);
  return th.passed() && rep.passed ? kPass : kComputation;
}

std::vector<std::size_t> map_spec(const std::string& s, std::size_t domain, std::size_t codomain) {
  std::vector<std::size_t> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t v = 0;
    const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || p != item.data() + item.size()) throw UsageError("bad map entry '" + item + "'");
    if (v >= codomain) throw UsageError("map entry " + item + " outside the target");
    out.push_back(v);
  }
  if (out.size() != domain)
    throw UsageError("map '" + s + "' has " + std::to_string(out.size()) + " entries, expected " +
                     std::to_string(domain));
  return out;
}

int run_pushout(const std::vector<std::string>& models, const std::string& f_spec, const std::string& g_spec) {
  const auto e1 = embed::embed_lmp(load_lmp(models[0]));
  const auto e2 = embed::embed_lmp(load_lmp(models[1]));
  const auto e3 = embed::embed_lmp(load_lmp(models[2]));
  const auto f = cospan::finite_hom(e2, e1, map_spec(f_spec, e2.size(), e1.size()), "f");
  const auto g = cospan::finite_hom(e2, e3, map_spec(g_spec, e2.size(), e3.size()), "g");
  const auto p = cospan::pushout_finite(f, g);
  bool commutes = true;
  for (std::size_t z = 0; z < e2.size(); ++z)
    commutes = commutes && (*p.phi1.base_map)[(*f.base_map)[z]] == (*p.phi3.base_map)[(*g.base_map)[z]];
  json j = header("pushout");
  j["glued"] = lmp_json(*p.glued.base);
  j["class_of"] = p.class_of;
  j["phi1"] = *p.phi1.base_map;
  j["phi3"] = *p.phi3.base_map;
  j["phi1_hom"] = cospan::verify_finite_hom(p.phi1).passed;
  j["phi3_hom"] = cospan::verify_finite_hom(p.phi3).passed;
  j["commutes"] = commutes;
  emit(j);
  return commutes ? kPass : kComputation;
}

// ---------------------------------------------------------------------------
// gallery

int run_gallery(std::optional<std::uint64_t> seed, std::size_t paths, std::size_t grid_points, bool table) {
  bisim::GalleryOptions opt;
  opt.seed = seed.value_or(default_seed());
  opt.symmetry_paths = paths;
  opt.grid_points = grid_points;
  const auto entries = bisim::run_gallery(opt);
  bool all = true;
  for (const auto& e : entries) all = all && e.passed;
  if (table) {
    std::cout << std::left << std::setw(28) << "example" << std::setw(6) << "pass" << "claim\n";
    for (const auto& e : entries)
      std::cout << std::setw(28) << e.key << std::setw(6) << (e.passed ? "yes" : "NO") << e.claim << '\n';
  } else {
    emit(bisim::gallery_json(entries, opt));
  }
  return all ? kPass : kRefuted;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bisimulation checks for Feller-Dynkin processes and labelled Markov processes"};
  app.require_subcommand(1);
  unsigned workers = 0;
  app.add_option("--workers", workers, "Monte Carlo worker threads (0 = all cores)");

  CheckArgs ca;
  auto* check = app.add_subcommand("check", "Certify a relation as a bisimulation");
  check->add_option("model", ca.model)->required();
  check->add_option("relation", ca.relation, "Relation text or file; defaults to the model's own");
  check->add_option("--n", ca.n);
  check->add_option("--seed", ca.seed);
  check->add_option("--zcrit", ca.z_crit);
  check->add_option("--grid-step", ca.grid_step);
  check->add_option("--samples", ca.samples, "Related pairs sampled for the obs check");

  DistinguishArgs da;
  auto* dist = app.add_subcommand("distinguish", "Try to tell two states apart");
  dist->add_option("model", da.model)->required();
  dist->add_option("x", da.x)->required();
  dist->add_option("y", da.y)->required();
  dist->add_option("--family", da.family)->check(CLI::IsMember({"auto", "bt", "laplace", "word", "exact"}));
  dist->add_option("--n", da.n);
  dist->add_option("--seed", da.seed);
  dist->add_option("--zcrit", da.z_crit);
  dist->add_flag("--mc", da.with_mc, "Also run the Monte Carlo test next to a closed form");

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Sample trajectories as CSV");
  sim->add_option("model", sa.model)->required();
  sim->add_option("x0", sa.x0)->required();
  sim->add_option("--paths", sa.paths);
  sim->add_option("--horizon", sa.horizon);
  sim->add_option("--grid-step", sa.grid_step);
  sim->add_option("--seed", sa.seed);

  HittimeArgs ha;
  auto* hit = app.add_subcommand("hittime", "Hitting-time law, closed form next to Monte Carlo");
  hit->add_option("model", ha.model)->required();
  hit->add_option("x0", ha.x0)->required();
  hit->add_option("target", ha.target, "Set, e.g. \"point 0\"")->required();
  hit->add_option("--t", ha.t, "P(T < t)");
  hit->add_option("--lambda", ha.lambda, "E exp(-lambda T)");
  hit->add_option("--n", ha.n);
  hit->add_option("--seed", ha.seed);

  std::string refine_path;
  auto* refine = app.add_subcommand("refine", "Greatest DT bisimulation of an LMP");
  refine->add_option("model", refine_path)->required();

  std::string embed_path;
  double embed_t = 1.5;
  std::size_t embed_grid = 8;
  auto* emb = app.add_subcommand("embed", "Continuous-time embedding of an LMP");
  emb->add_option("model", embed_path)->required();
  emb->add_option("--t", embed_t, "Time of the printed kernel");
  emb->add_option("--grid", embed_grid, "Points of the theorem's t-grid");

  std::vector<std::string> po_models(3);
  std::string f_spec, g_spec;
  auto* po = app.add_subcommand("pushout", "Glue two LMPs along homomorphisms f: E2->E1, g: E2->E3");
  po->add_option("m1", po_models[0], "Target of f")->required();
  po->add_option("m2", po_models[1], "Common source")->required();
  po->add_option("m3", po_models[2], "Target of g")->required();
  po->add_option("f", f_spec, "Base map of f, e.g. 0,1,1")->required();
  po->add_option("g", g_spec, "Base map of g")->required();

  std::optional<std::uint64_t> gal_seed;
  std::size_t gal_paths = 100000, gal_grid = 20;
  bool gal_table = false;
  auto* gal = app.add_subcommand("gallery", "Run every worked example");
  gal->add_option("--seed", gal_seed);
  gal->add_option("--paths", gal_paths, "Paths per symmetry check");
  gal->add_option("--grid-points", gal_grid);
  gal->add_flag("--table", gal_table, "Plain table instead of JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    mc::set_worker_count(workers);
    if (*check) return run_check(ca);
    if (*dist) return run_distinguish(da);
    if (*sim) return run_simulate(sa);
    if (*hit) return run_hittime(ha);
    if (*refine) return run_refine(refine_path);
    if (*emb) return run_embed(embed_path, embed_t, embed_grid);
    if (*po) return run_pushout(po_models, f_spec, g_spec);
    if (*gal) return run_gallery(gal_seed, gal_paths, gal_grid, gal_table);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const UnreadableError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUnreadable;
  } catch (const dsl::ParseError& e) {
    const bool syntax = e.kind() == dsl::ParseError::Kind::Syntax;
    std::cerr << (syntax ? "syntax error" : "semantic error");
    if (e.line() > 0) std::cerr << " at line " << e.line() << ", column " << e.column();
    std::cerr << ": " << e.message() << '\n';
    return syntax ? kSyntax : kSemantic;
  } catch (const PreconditionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kComputation;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kComputation;
  } catch (const UnsupportedError& e) {
    std::cerr << "unsupported: " << e.what() << '\n';
    return kComputation;
  } catch (const cospan::ConstructionError& e) {
    std::cerr << "construction failed: " << e.what() << '\n';
    return kComputation;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kInternal;
}
