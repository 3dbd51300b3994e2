#include "arithlab/interp/facts.hpp"

#include <filesystem>
#include <fstream>

namespace arithlab::interp {

nlohmann::json behaviors_json(const AnalysisArtifacts& a) {
  const arith::Layout layout(a.cfg.n_digits);
  nlohmann::json nodes = nlohmann::json::object();

  for (const auto& [cls, sweep] : a.sweeps) {
    for (std::size_t i = 0; i < sweep.nodes.size(); ++i) {
      if (sweep.fail_fraction[i] < a.useful_threshold) continue;
      const auto key = sweep.nodes[i].str();
      auto& entry = nodes[key];
      entry["position"] = sweep.nodes[i].pos;
      entry["layer"] = sweep.nodes[i].layer;
      entry["site"] = sweep.nodes[i].is_mlp() ? "mlp" : "head";
      if (!sweep.nodes[i].is_mlp()) entry["head"] = sweep.nodes[i].head;
      auto& per_class = entry["classes"][qclass_name(cls)];
      per_class["fail_fraction"] = sweep.fail_fraction[i];
      per_class["min_quantum"] = sweep.min_quantum[i];
      nlohmann::json impacts = nlohmann::json::array();
      for (int bit = 0; bit < a.cfg.n_digits + 2; ++bit)
        if (sweep.impact_mask[i] & (1u << bit))
          impacts.push_back("A" + std::to_string(a.cfg.n_digits + 1 - bit));
      per_class["impacted_answer_tokens"] = impacts;
    }
  }

  for (const auto& [node_key, sources] : a.attention_sources) {
    if (!nodes.contains(node_key)) continue;
    nlohmann::json attends = nlohmann::json::array();
    for (const auto& [pos, weight] : sources)
      attends.push_back({{"position", pos}, {"token", layout.role_name(pos)}, {"weight", weight}});
    nodes[node_key]["attends_to"] = attends;
  }

  return {{"schema_version", 1},
          {"kind", "behaviors"},
          {"n_digits", a.cfg.n_digits},
          {"n_layers", a.cfg.n_layers},
          {"n_heads", a.cfg.n_heads},
          {"useful_threshold", a.useful_threshold},
          {"nodes", nodes}};
}

nlohmann::json features_json(const AnalysisArtifacts& a) {
  nlohmann::json feats = nlohmann::json::array();
  for (const auto& t : a.tags) {
    nlohmann::json f{{"node", t.node.str()},
                     {"subtask", t.label()},
                     {"kind", subtask_name(t.kind)},
                     {"digit", t.digit},
                     {"evidence",
                      {{"attention_score", t.attention_score},
                       {"pca_cluster_score", t.pca_cluster_score},
                       {"intervention_success", t.intervention_success}}},
                     {"low_confidence", t.low_confidence}};
    if (t.joint_with) f["joint_with"] = t.joint_with->str();
    feats.push_back(std::move(f));
  }
  return {{"schema_version", 1},
          {"kind", "features"},
          {"n_digits", a.cfg.n_digits},
          {"features", feats}};
}

void emit_facts(const AnalysisArtifacts& a, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream f(out_dir + "/behaviors.json");
    f << behaviors_json(a).dump(2) << "\n";
  }
  {
    std::ofstream f(out_dir + "/features.json");
    f << features_json(a).dump(2) << "\n";
  }
}

}  // namespace arithlab::interp
