#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "arithlab/arith/vocab.hpp"
#include "arithlab/interp/subtask.hpp"
#include "arithlab/model/config.hpp"

namespace arithlab::interp {

// A claimed (node -> subtask, digit) assignment with the evidence that
// admitted it. Joint tags (a subtask split across two heads at one
// position) carry the partner node.
struct SubtaskTag {
  model::NodeId node;
  SubtaskKind kind = SubtaskKind::SA;
  int digit = -1;  // -1 for OPR/SGN
  double attention_score = 0.0;
  double pca_cluster_score = -1.0;     // -1 when not applicable
  double intervention_success = -1.0;  // -1 when not applicable
  bool low_confidence = false;
  std::optional<model::NodeId> joint_with;

  std::string label() const { return subtask_label(kind, digit); }
};

// Declarative constraint set an algorithm imposes on tagged nodes.
struct Constraint {
  enum class Type {
    Coverage,        // at least one tag of (kind, digit)
    WindowAll,       // every tag of (kind, digit) within [lo_pos, hi_pos]
    DeadlineExists,  // at least one tag of (kind, digit) at pos <= hi_pos
    OrderAfter,      // every (after) tag preceded by some (before) tag
  };
  Type type = Type::Coverage;
  SubtaskKind kind = SubtaskKind::SA;
  int digit = -1;
  int lo_pos = 0;
  int hi_pos = 0;
  SubtaskKind before_kind = SubtaskKind::ST;  // OrderAfter only
  int before_digit = -1;

  std::string describe(const arith::Layout& layout) const;
};

struct AlgorithmSchema {
  int n_digits = 0;
  std::string name;
  // Subtasks the tagger searches for, with their positional windows.
  struct Target {
    SubtaskKind kind;
    int digit;
    int lo_pos;
    int hi_pos;
    bool required;
  };
  std::vector<Target> targets;
  std::vector<Constraint> constraints;

  // The ordering-constraint graph must be acyclic.
  void validate() const;

  nlohmann::json to_json() const;
  static AlgorithmSchema from_json(const nlohmann::json& j);

  // Built-in schemas per operation class.
  static AlgorithmSchema addition(int n_digits);
  static AlgorithmSchema subtraction(int n_digits);
  static AlgorithmSchema mixed(int n_digits);
};

struct ConstraintResult {
  std::string description;
  bool passed = false;
  std::string witness;
};

struct ConstraintReport {
  std::vector<ConstraintResult> results;
  int failed = 0;

  bool all_passed() const { return failed == 0; }
};

// Evaluates every schema constraint against a tag set.
ConstraintReport check_constraints(const std::vector<SubtaskTag>& tags,
                                   const AlgorithmSchema& schema);

}  // namespace arithlab::interp
