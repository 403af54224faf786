#include "fdbisim/dsl.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "fdbisim/bisim.hpp"
#include "fdbisim/embed.hpp"

namespace fdbisim::dsl {

namespace {

using Kind = ParseError::Kind;

struct Token {
  std::string text;
  std::size_t column;  // 1-based
};

struct Line {
  std::size_t number;
  std::vector<Token> tokens;
  std::string rest_from(std::size_t i) const {
    std::string out;
    for (std::size_t k = i; k < tokens.size(); ++k) out += tokens[k].text;
    return out;
  }
};

std::vector<Token> tokenize(std::string_view line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    if (line[i] == '#') break;
    if (std::isspace(static_cast<unsigned char>(line[i]))) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i])) && line[i] != '#') ++i;
    out.push_back({std::string(line.substr(start, i - start)), start + 1});
  }
  return out;
}

[[noreturn]] void fail(Kind k, std::size_t line, std::size_t column, const std::string& msg) {
  throw ParseError(k, line, column, msg);
}

double number(const Line& l, std::size_t i) {
  if (i >= l.tokens.size()) {
    const std::size_t col = l.tokens.empty() ? 1 : l.tokens.back().column + l.tokens.back().text.size();
    fail(Kind::Syntax, l.number, col, "expected a number");
  }
  const auto& t = l.tokens[i];
  double v = 0.0;
  const char* b = t.text.data();
  const char* e = b + t.text.size();
  const auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) fail(Kind::Syntax, l.number, t.column, "expected a number, got '" + t.text + "'");
  if (!std::isfinite(v)) fail(Kind::Semantic, l.number, t.column, "numbers must be finite");
  return v;
}

std::size_t index(const Line& l, std::size_t i, std::string text) {
  const auto& t = l.tokens.at(i);
  if (text.empty()) text = t.text;
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size())
    fail(Kind::Syntax, l.number, t.column, "expected a state index, got '" + t.text + "'");
  return v;
}

bool is_identifier(const std::string& s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

const std::map<std::string, std::vector<std::string>>& process_keys() {
  static const std::map<std::string, std::vector<std::string>> keys{
      {"bm", {}},
      {"drift", {"a"}},
      {"drifted_bm", {"a"}},
      {"absorbed_bm", {"lo", "hi", "mark"}},
      {"reflected_bm", {"lo", "hi"}},
      {"circle_bm", {"radius"}},
      {"fork", {"first", "second", "end"}},
  };
  return keys;
}

const std::map<std::string, std::pair<std::size_t, std::size_t>>& set_arity() {
  static const std::map<std::string, std::pair<std::size_t, std::size_t>> a{
      {"point", {1, 1}}, {"points", {1, 64}}, {"integers", {0, 0}}, {"interval", {2, 2}}};
  return a;
}

const std::map<std::string, std::pair<std::size_t, std::size_t>>& relation_arity() {
  static const std::map<std::string, std::pair<std::size_t, std::size_t>> a{
      {"identity", {0, 0}},    {"reflect", {0, 1}},      {"translate", {1, 1}},
      {"reflect_translate", {0, 1}}, {"naive", {0, 0}}, {"positive_half", {0, 0}}};
  return a;
}

SetSpec set_from(const Line& l, std::size_t first, std::size_t end) {
  if (first >= end) fail(Kind::Syntax, l.number, l.tokens.back().column, "expected a set");
  SetSpec s;
  s.kind = l.tokens[first].text;
  const auto it = set_arity().find(s.kind);
  if (it == set_arity().end()) fail(Kind::Semantic, l.number, l.tokens[first].column, "unknown set kind '" + s.kind + "'");
  for (std::size_t i = first + 1; i < end; ++i) s.args.push_back(number(l, i));
  const auto [lo, hi] = it->second;
  if (s.args.size() < lo || s.args.size() > hi)
    fail(Kind::Syntax, l.number, l.tokens[first].column, "wrong number of arguments for '" + s.kind + "'");
  if (s.kind == "interval" && !(s.args[0] <= s.args[1]))
    fail(Kind::Semantic, l.number, l.tokens[first].column, "interval bounds out of order");
  return s;
}

std::vector<std::vector<std::size_t>> parse_blocks(const std::string& text, std::size_t line, std::size_t column) {
  std::vector<std::vector<std::size_t>> blocks;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '{') fail(Kind::Syntax, line, column + i, "expected '{'");
    ++i;
    std::vector<std::size_t> block;
    while (i < text.size() && text[i] != '}') {
      const std::size_t start = i;
      while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
      if (start == i) fail(Kind::Syntax, line, column + i, "expected a state index");
      block.push_back(std::stoul(text.substr(start, i - start)));
      if (i < text.size() && text[i] == ',') ++i;
    }
    if (i >= text.size()) fail(Kind::Syntax, line, column + i, "unterminated block");
    ++i;
    blocks.push_back(std::move(block));
  }
  if (blocks.empty()) fail(Kind::Syntax, line, column, "expected at least one block");
  return blocks;
}

RelationClause relation_from(const Line& l, std::size_t first) {
  if (first >= l.tokens.size()) fail(Kind::Syntax, l.number, l.tokens.back().column, "expected a relation");
  RelationClause r;
  r.kind = l.tokens[first].text;
  if (r.kind == "partition") {
    if (first + 1 >= l.tokens.size()) fail(Kind::Syntax, l.number, l.tokens[first].column, "expected blocks");
    r.blocks = parse_blocks(l.rest_from(first + 1), l.number, l.tokens[first + 1].column);
    return r;
  }
  const auto it = relation_arity().find(r.kind);
  if (it == relation_arity().end())
    fail(Kind::Semantic, l.number, l.tokens[first].column, "unknown relation '" + r.kind + "'");
  for (std::size_t i = first + 1; i < l.tokens.size(); ++i) r.args.push_back(number(l, i));
  const auto [lo, hi] = it->second;
  if (r.args.size() < lo || r.args.size() > hi)
    fail(Kind::Syntax, l.number, l.tokens[first].column, "wrong number of arguments for '" + r.kind + "'");
  return r;
}

std::vector<Line> lines_of(std::string_view text) {
  std::vector<Line> out;
  std::size_t number = 0, start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('\n', start), text.size());
    ++number;
    std::string_view raw = text.substr(start, end - start);
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    auto tokens = tokenize(raw);
    if (!tokens.empty()) out.push_back({number, std::move(tokens)});
    if (end == text.size()) break;
    start = end + 1;
  }
  return out;
}

double param_or(const ProcessDecl& p, const std::string& key, double fallback) {
  const auto v = p.param(key);
  return v ? *v : fallback;
}

}  // namespace

ParseError::ParseError(Kind kind, std::size_t line, std::size_t column, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + message),
      kind_(kind),
      line_(line),
      column_(column),
      message_(message) {}

std::string format_number(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

StateSet SetSpec::to_set() const {
  if (kind == "point") return StateSet::point(args.at(0));
  if (kind == "points") return StateSet::points(args);
  if (kind == "integers") return StateSet::integers();
  if (kind == "interval") return StateSet::interval(args.at(0), args.at(1));
  throw DomainError("unknown set kind " + kind);
}

std::optional<double> ProcessDecl::param(const std::string& key) const {
  for (const auto& [k, v] : params)
    if (k == key) return v;
  return std::nullopt;
}

SetSpec parse_set(std::string_view text) {
  const Line l{1, tokenize(text)};
  if (l.tokens.empty()) fail(Kind::Syntax, 1, 1, "expected a set");
  return set_from(l, 0, l.tokens.size());
}

RelationClause parse_relation(std::string_view text) {
  const Line l{1, tokenize(text)};
  if (l.tokens.empty()) fail(Kind::Syntax, 1, 1, "expected a relation");
  return relation_from(l, l.tokens[0].text == "relation" ? 1 : 0);
}

ModelFile parse_model(std::string_view text) {
  const auto lines = lines_of(text);
  std::optional<ProcessDecl> process;
  std::optional<LmpDecl> lmp;
  std::size_t decl_line = 0;
  std::vector<ObsClause> obs;
  std::optional<RelationClause> relation;
  std::vector<std::pair<const Line*, std::size_t>> rows, labels;
  const Line* props_line = nullptr;
  const Line* first_obs = nullptr;

  for (const auto& l : lines) {
    const auto& head = l.tokens[0];
    if (head.text == "process" || head.text == "lmp") {
      if (process || lmp) fail(Kind::Semantic, l.number, head.column, "a model file declares exactly one model");
      if (l.tokens.size() < 2) fail(Kind::Syntax, l.number, head.column, "expected a kind after '" + head.text + "'");
      decl_line = l.number;
      if (head.text == "lmp") {
        if (l.tokens.size() != 2) fail(Kind::Syntax, l.number, l.tokens[2].column, "unexpected token");
        LmpDecl d;
        d.n = index(l, 1, "");
        if (d.n == 0) fail(Kind::Semantic, l.number, l.tokens[1].column, "an LMP needs at least one state");
        lmp = std::move(d);
        continue;
      }
      ProcessDecl p;
      p.kind = l.tokens[1].text;
      const auto keys = process_keys().find(p.kind);
      if (keys == process_keys().end())
        fail(Kind::Semantic, l.number, l.tokens[1].column, "unknown process kind '" + p.kind + "'");
      for (std::size_t i = 2; i < l.tokens.size(); ++i) {
        const auto& t = l.tokens[i];
        const auto eq = t.text.find('=');
        if (eq == std::string::npos || eq == 0) fail(Kind::Syntax, l.number, t.column, "expected key=value");
        const std::string key = t.text.substr(0, eq);
        const bool known = key == "horizon" || key == "grid_step" ||
                           std::find(keys->second.begin(), keys->second.end(), key) != keys->second.end();
        if (!known) fail(Kind::Semantic, l.number, t.column, "unknown key '" + key + "' for process " + p.kind);
        if (p.param(key)) fail(Kind::Semantic, l.number, t.column, "duplicate key '" + key + "'");
        Line value{l.number, {{t.text.substr(eq + 1), t.column + eq + 1}}};
        p.params.emplace_back(key, number(value, 0));
      }
      process = std::move(p);
    } else if (head.text == "obs") {
      if (!first_obs) first_obs = &l;
      std::size_t end = l.tokens.size();
      ObsClause c;
      if (end >= 3 && l.tokens[end - 2].text == "as") {
        c.name = l.tokens[end - 1].text;
        if (!is_identifier(c.name)) fail(Kind::Syntax, l.number, l.tokens[end - 1].column, "bad proposition name");
        end -= 2;
      } else {
        c.name = "p" + std::to_string(obs.size());
      }
      c.set = set_from(l, 1, end);
      for (const auto& o : obs)
        if (o.name == c.name) fail(Kind::Semantic, l.number, head.column, "duplicate proposition '" + c.name + "'");
      obs.push_back(std::move(c));
    } else if (head.text == "props") {
      if (props_line) fail(Kind::Semantic, l.number, head.column, "duplicate props line");
      props_line = &l;
    } else if (head.text == "row") {
      rows.emplace_back(&l, 0);
    } else if (head.text == "label") {
      labels.emplace_back(&l, 0);
    } else if (head.text == "relation" || head.text == "partition") {
      if (relation) fail(Kind::Semantic, l.number, head.column, "at most one relation per file");
      relation = relation_from(l, head.text == "relation" ? 1 : 0);
    } else {
      fail(Kind::Syntax, l.number, head.column, "unknown statement '" + head.text + "'");
    }
  }

  if (!process && !lmp) fail(Kind::Semantic, 1, 1, "no process or lmp declared");
  ModelFile m;
  m.relation = relation;
  if (process) {
    for (const auto* group : {&rows, &labels})
      if (!group->empty()) {
        const auto& l = *group->front().first;
        fail(Kind::Semantic, l.number, 1, "'" + l.tokens[0].text + "' needs an lmp declaration");
      }
    if (props_line) fail(Kind::Semantic, props_line->number, 1, "'props' needs an lmp declaration");
    if (process->kind == "fork" && !obs.empty())
      fail(Kind::Semantic, first_obs->number, 1, "the fork has fixed observations");
    if (relation && relation->kind == "partition")
      fail(Kind::Semantic, decl_line, 1, "partition relations need an lmp");
    m.body = *process;
    m.obs = std::move(obs);
    try {
      (void)m.model();
    } catch (const DomainError& e) {
      fail(Kind::Semantic, decl_line, 1, e.what());
    }
    return m;
  }

  if (first_obs) fail(Kind::Semantic, first_obs->number, 1, "an lmp is labelled with 'label', not 'obs'");
  LmpDecl d = *lmp;
  if (props_line) {
    for (std::size_t i = 1; i < props_line->tokens.size(); ++i) {
      const auto& t = props_line->tokens[i];
      if (!is_identifier(t.text)) fail(Kind::Syntax, props_line->number, t.column, "bad proposition name");
      if (std::find(d.props.begin(), d.props.end(), t.text) != d.props.end())
        fail(Kind::Semantic, props_line->number, t.column, "duplicate proposition '" + t.text + "'");
      d.props.push_back(t.text);
    }
  }
  d.rows.assign(d.n, std::vector<double>(d.n, 0.0));
  std::vector<bool> seen(d.n, false);
  for (const auto& [lp, _] : rows) {
    const Line& l = *lp;
    if (l.tokens.size() < 2) fail(Kind::Syntax, l.number, l.tokens[0].column, "expected 'row i:'");
    std::string head = l.tokens[1].text;
    std::size_t first = 2;
    if (!head.empty() && head.back() == ':') {
      head.pop_back();
    } else if (l.tokens.size() > 2 && l.tokens[2].text == ":") {
      first = 3;
    } else {
      fail(Kind::Syntax, l.number, l.tokens[1].column, "expected ':' after the row index");
    }
    const std::size_t i = index(l, 1, head);
    if (i >= d.n) fail(Kind::Semantic, l.number, l.tokens[1].column, "row " + std::to_string(i) + " on a missing state");
    if (seen[i]) fail(Kind::Semantic, l.number, l.tokens[1].column, "row " + std::to_string(i) + " given twice");
    seen[i] = true;
    if (l.tokens.size() - first != d.n)
      fail(Kind::Syntax, l.number, l.tokens[0].column,
           "row has " + std::to_string(l.tokens.size() - first) + " entries, expected " + std::to_string(d.n));
    double sum = 0.0;
    for (std::size_t j = 0; j < d.n; ++j) {
      const double v = number(l, first + j);
      if (v < 0.0 || v > 1.0) fail(Kind::Semantic, l.number, l.tokens[first + j].column, "mass outside [0,1]");
      d.rows[i][j] = v;
      sum += v;
    }
    if (sum > 1.0 + lmp::kMassTolerance)
      fail(Kind::Semantic, l.number, l.tokens[0].column, "row mass " + format_number(sum) + " > 1");
  }
  d.labels.assign(d.n, {});
  const bool implicit_props = props_line == nullptr;
  for (const auto& [lp, _] : labels) {
    const Line& l = *lp;
    if (l.tokens.size() < 2) fail(Kind::Syntax, l.number, l.tokens[0].column, "expected 'label i P ...'");
    const std::size_t i = index(l, 1, "");
    if (i >= d.n) fail(Kind::Semantic, l.number, l.tokens[1].column, "label on missing state " + std::to_string(i));
    for (std::size_t k = 2; k < l.tokens.size(); ++k) {
      const auto& t = l.tokens[k];
      if (!is_identifier(t.text)) fail(Kind::Syntax, l.number, t.column, "bad proposition name");
      if (std::find(d.props.begin(), d.props.end(), t.text) == d.props.end()) {
        if (!implicit_props) fail(Kind::Semantic, l.number, t.column, "undeclared proposition '" + t.text + "'");
        d.props.push_back(t.text);
      }
      d.labels[i].push_back(t.text);
    }
  }
  if (d.props.size() > 63) fail(Kind::Semantic, decl_line, 1, "too many propositions");
  for (auto& lab : d.labels) {
    std::sort(lab.begin(), lab.end(), [&](const std::string& a, const std::string& b) {
      return std::find(d.props.begin(), d.props.end(), a) < std::find(d.props.begin(), d.props.end(), b);
    });
    lab.erase(std::unique(lab.begin(), lab.end()), lab.end());
  }
  if (relation && relation->kind != "partition" && relation->kind != "identity")
    fail(Kind::Semantic, decl_line, 1, "an lmp takes a partition relation");
  m.body = std::move(d);
  if (m.relation && m.relation->kind == "partition") {
    try {
      (void)make_witness(*m.relation, m);
    } catch (const ParseError& e) {
      fail(Kind::Semantic, decl_line, 1, e.message());
    }
  }
  return m;
}

lmp::FiniteLMP ModelFile::lmp() const {
  const auto* d = std::get_if<LmpDecl>(&body);
  if (!d) throw DomainError("not an lmp model");
  lmp::Matrix tau(d->n);
  for (std::size_t i = 0; i < d->n; ++i)
    for (std::size_t j = 0; j < d->n; ++j) tau(i, j) = d->rows[i][j];
  std::vector<std::uint64_t> labels(d->n, 0);
  for (std::size_t i = 0; i < d->n; ++i)
    for (const auto& p : d->labels[i]) {
      const auto k = static_cast<std::size_t>(std::find(d->props.begin(), d->props.end(), p) - d->props.begin());
      labels[i] |= std::uint64_t{1} << k;
    }
  auto props = d->props;
  return lmp::FiniteLMP(std::move(tau), std::move(props), std::move(labels));
}

mc::ProcessModel ModelFile::model() const {
  if (is_lmp()) return embed::embed_lmp(lmp()).model;
  const auto& p = std::get<ProcessDecl>(body);
  const double horizon = param_or(p, "horizon", mc::kDefaultHorizon);
  const double step = param_or(p, "grid_step", mc::kDefaultGridStep);
  if (p.kind == "fork") {
    mc::ForkGeometry g{param_or(p, "first", 0.0), param_or(p, "second", 95.0), param_or(p, "end", 100.0)};
    if (!(g.first_fork < g.second_fork && g.second_fork < g.end)) throw DomainError("fork needs first < second < end");
    return mc::fork_model(g).with_resolution(horizon, step);
  }
  std::vector<std::string> names;
  std::vector<StateSet> sets;
  for (const auto& o : obs) {
    names.push_back(o.name);
    sets.push_back(o.set.to_set());
  }
  mc::ProcessKind kind;
  if (p.kind == "bm") kind = mc::BrownianMotion{};
  else if (p.kind == "drift") kind = mc::DeterministicDrift{param_or(p, "a", 1.0)};
  else if (p.kind == "drifted_bm") kind = mc::DriftedBM{param_or(p, "a", 1.0)};
  else if (p.kind == "absorbed_bm") {
    kind = mc::AbsorbedBM{param_or(p, "lo", 0.0), param_or(p, "hi", kInf)};
    if (const auto mark = p.param("mark")) {
      names.push_back("mark");
      sets.push_back(StateSet::point(*mark));
    }
  } else if (p.kind == "reflected_bm") kind = mc::ReflectedBM{param_or(p, "lo", 0.0), param_or(p, "hi", 1.0)};
  else if (p.kind == "circle_bm") {
    const double r = param_or(p, "radius", 1.0);
    if (!(r > 0.0)) throw DomainError("circle radius must be positive");
    kind = mc::CircleBM{r};
  } else throw DomainError("unknown process kind " + p.kind);
  return mc::ProcessModel(kind, ObservationMap::from_sets(std::move(names), std::move(sets)), horizon, step);
}

std::optional<RelationWitness> ModelFile::witness() const {
  if (!relation) return std::nullopt;
  return make_witness(*relation, *this);
}

RelationWitness make_witness(const RelationClause& r, const ModelFile& m) {
  auto bad = [](const std::string& msg) -> ParseError { return ParseError(Kind::Semantic, 0, 0, msg); };
  if (m.is_lmp()) {
    const std::size_t n = std::get<LmpDecl>(m.body).n;
    if (r.kind == "identity") return FinitePartition::identity(n);
    if (r.kind != "partition") throw bad("an lmp takes a partition relation");
    std::vector<bool> seen(n, false);
    for (const auto& b : r.blocks)
      for (std::size_t x : b) {
        if (x >= n) throw bad("partition mentions missing state " + std::to_string(x));
        if (seen[x]) throw bad("state " + std::to_string(x) + " is in two blocks");
        seen[x] = true;
      }
    std::vector<std::vector<std::size_t>> blocks = r.blocks;
    for (std::size_t x = 0; x < n; ++x)
      if (!seen[x]) blocks.push_back({x});
    blocks.erase(std::remove_if(blocks.begin(), blocks.end(), [](const auto& b) { return b.empty(); }), blocks.end());
    return FinitePartition(n, blocks);
  }
  if (r.kind == "partition") throw bad("partition relations need an lmp");
  const auto model = m.model();
  const auto space = model.space();
  if (r.kind == "identity") return SymmetryGroup::identity(space);
  const bool line = std::holds_alternative<RealLine>(space.kind());
  if (r.kind == "naive" || r.kind == "positive_half") {
    if (!line) throw bad(r.kind + " is defined on the real line only");
    return r.kind == "naive" ? bisim::naive_witness() : bisim::positive_half_witness();
  }
  if (std::holds_alternative<Branches>(space.kind()) || std::holds_alternative<ClockedProduct>(space.kind()))
    throw bad("relation '" + r.kind + "' needs a real state space");
  if (r.kind == "reflect") {
    double c = 0.0;
    if (!r.args.empty()) {
      c = r.args[0];
    } else if (const auto* iv = std::get_if<Interval>(&space.kind()); iv && std::isfinite(iv->hi)) {
      c = (iv->lo + iv->hi) / 2.0;
    }
    return SymmetryGroup::isometries(space, {Generator::reflect_about(c)}, "reflect " + format_number(c));
  }
  if (r.kind == "translate") {
    const double p = r.args.at(0);
    if (p == 0.0) throw bad("translation period must be nonzero");
    return SymmetryGroup::isometries(space, {Generator::translate(p), Generator::translate(-p)},
                                     "translate " + format_number(p));
  }
  if (r.kind == "reflect_translate") {
    const double p = r.args.empty() ? 1.0 : r.args[0];
    if (p == 0.0) throw bad("translation period must be nonzero");
    return SymmetryGroup::isometries(space, {Generator::reflect_about(0.0), Generator::translate(p), Generator::translate(-p)},
                                     "reflect 0 + translate " + format_number(p));
  }
  throw bad("unknown relation " + r.kind);
}

std::string serialize(const ModelFile& m) {
  std::ostringstream out;
  auto nums = [&](const std::vector<double>& v) {
    for (double x : v) out << ' ' << format_number(x);
  };
  if (const auto* p = std::get_if<ProcessDecl>(&m.body)) {
    out << "process " << p->kind;
    for (const auto& [k, v] : p->params) out << ' ' << k << '=' << format_number(v);
    out << '\n';
    for (const auto& o : m.obs) {
      out << "obs " << o.set.kind;
      nums(o.set.args);
      out << " as " << o.name << '\n';
    }
  } else {
    const auto& d = std::get<LmpDecl>(m.body);
    out << "lmp " << d.n << '\n';
    if (!d.props.empty()) {
      out << "props";
      for (const auto& p : d.props) out << ' ' << p;
      out << '\n';
    }
    for (std::size_t i = 0; i < d.n; ++i) {
      out << "row " << i << ':';
      nums(d.rows[i]);
      out << '\n';
    }
    for (std::size_t i = 0; i < d.n; ++i) {
      if (d.labels[i].empty()) continue;
      out << "label " << i;
      for (const auto& p : d.labels[i]) out << ' ' << p;
      out << '\n';
    }
  }
  if (m.relation) {
    const auto& r = *m.relation;
    if (r.kind == "partition") {
      out << "partition ";
      for (const auto& b : r.blocks) {
        out << '{';
        for (std::size_t i = 0; i < b.size(); ++i) out << (i ? "," : "") << b[i];
        out << '}';
      }
    } else {
      out << "relation " << r.kind;
      nums(r.args);
    }
    out << '\n';
  }
  return out.str();
}

State parse_state(std::string_view text, const ModelFile& m) {
  auto bad = [&](const std::string& why) {
    return ParseError(Kind::Syntax, 0, 0, "bad state '" + std::string(text) + "': " + why);
  };
  auto real = [&](std::string_view s) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) throw bad("expected a finite number");
    return v;
  };
  const auto at = text.find('@');
  const auto model = m.model();
  State s;
  if (m.is_lmp()) {
    const auto base_text = text.substr(0, at);
    std::size_t b = 0;
    const auto [p, ec] = std::from_chars(base_text.data(), base_text.data() + base_text.size(), b);
    if (ec != std::errc() || p != base_text.data() + base_text.size()) throw bad("expected base[@clock]");
    s = ClockedState{b, at == std::string_view::npos ? 0.0 : real(text.substr(at + 1))};
  } else if (std::holds_alternative<mc::ForkProcess>(model.kind())) {
    if (at == std::string_view::npos) throw bad("expected pos@branch");
    s = BranchPoint{real(text.substr(0, at)), static_cast<int>(real(text.substr(at + 1)))};
  } else {
    if (at != std::string_view::npos) throw bad("expected a number");
    s = real(text);
  }
  if (!model.space().contains(s)) throw bad("outside the state space " + model.space().describe());
  return s;
}

std::string format_state(const State& s) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, double>) return format_number(v);
        else if constexpr (std::is_same_v<T, BranchPoint>) return format_number(v.pos) + "@" + std::to_string(v.branch);
        else if constexpr (std::is_same_v<T, ClockedState>) return std::to_string(v.base) + "@" + format_number(v.clock);
        else return "∂";
      },
      s);
}

}  // namespace fdbisim::dsl
