#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "arithlab/interp/analyzer.hpp"

namespace arithlab::interp {

// Analysis artifacts gathered for one model, the source for the two fact
// files: behaviors.json holds model-agnostic facts (attention targets, fail
// fractions, impacted digits), features.json holds the math-specific
// subtask tags with their evidence.
struct AnalysisArtifacts {
  model::ModelConfig cfg;
  std::map<QClass, NodeSweep> sweeps;
  // Mean attention sources above threshold per head node, from the class
  // probes of the sweep's class.
  std::map<std::string, std::vector<std::pair<int, double>>> attention_sources;
  std::vector<SubtaskTag> tags;
  double useful_threshold = 0.001;
};

nlohmann::json behaviors_json(const AnalysisArtifacts& a);
nlohmann::json features_json(const AnalysisArtifacts& a);

// Writes behaviors.json and features.json under out_dir.
void emit_facts(const AnalysisArtifacts& a, const std::string& out_dir);

}  // namespace arithlab::interp
