#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "fdbisim/core.hpp"
#include "fdbisim/lmp.hpp"
#include "fdbisim/mc.hpp"

namespace fdbisim::dsl {

/// Model text error with a 1-based position. Syntax errors are malformed
/// lines; semantic errors are well-formed lines that describe no valid model.
class ParseError : public std::runtime_error {
 public:
  enum class Kind { Syntax, Semantic };
  ParseError(Kind kind, std::size_t line, std::size_t column, const std::string& message);

  Kind kind() const { return kind_; }
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }
  const std::string& message() const { return message_; }

 private:
  Kind kind_;
  std::size_t line_;
  std::size_t column_;
  std::string message_;
};

/// `point 0`, `points 0 1`, `integers`, `interval -1 1`.
struct SetSpec {
  std::string kind;
  std::vector<double> args;
  StateSet to_set() const;
  friend bool operator==(const SetSpec&, const SetSpec&) = default;
};

struct ObsClause {
  std::string name;
  SetSpec set;
  friend bool operator==(const ObsClause&, const ObsClause&) = default;
};

/// `process <kind> key=value ...`
struct ProcessDecl {
  std::string kind;
  std::vector<std::pair<std::string, double>> params;
  std::optional<double> param(const std::string& key) const;
  friend bool operator==(const ProcessDecl&, const ProcessDecl&) = default;
};

/// `lmp n`, `props P Q`, `row i: ...`, `label i P ...`.
struct LmpDecl {
  std::size_t n = 0;
  std::vector<std::string> props;
  std::vector<std::vector<double>> rows;
  std::vector<std::vector<std::string>> labels;
  friend bool operator==(const LmpDecl&, const LmpDecl&) = default;
};

/// `relation <kind> args...` or `partition {0,1}{2}`.
struct RelationClause {
  std::string kind;
  std::vector<double> args;
  std::vector<std::vector<std::size_t>> blocks;
  friend bool operator==(const RelationClause&, const RelationClause&) = default;
};

struct ModelFile {
  std::variant<ProcessDecl, LmpDecl> body;
  std::vector<ObsClause> obs;
  std::optional<RelationClause> relation;

  bool is_lmp() const { return std::holds_alternative<LmpDecl>(body); }
  lmp::FiniteLMP lmp() const;  // throws DomainError for process files
  /// The process; an LMP file yields its embedding.
  mc::ProcessModel model() const;
  std::optional<RelationWitness> witness() const;

  friend bool operator==(const ModelFile&, const ModelFile&) = default;
};

ModelFile parse_model(std::string_view text);
/// Canonical text; parse_model(serialize(m)) == m.
std::string serialize(const ModelFile& m);

/// A relation given on its own: `reflect 0`, `translate 1`, `partition {0}{1,2}`
/// (a leading `relation` keyword is allowed).
RelationClause parse_relation(std::string_view text);
SetSpec parse_set(std::string_view text);
/// Witness of a relation clause for a model; throws ParseError (semantic)
/// when the clause does not fit the model.
RelationWitness make_witness(const RelationClause& r, const ModelFile& m);

/// A state of the model: a real, `pos@branch` for the fork, `base` or
/// `base@clock` for LMPs.
State parse_state(std::string_view text, const ModelFile& m);
std::string format_state(const State& s);

/// Shortest text that reads back as the same double.
std::string format_number(double v);

}  // namespace fdbisim::dsl
