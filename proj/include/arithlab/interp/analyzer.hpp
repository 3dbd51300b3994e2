#pragma once

#include <array>
#include <map>
#include <span>
#include <vector>

#include "arithlab/interp/expectation.hpp"
#include "arithlab/interp/probes.hpp"
#include "arithlab/interp/schema.hpp"
#include "arithlab/model/infer.hpp"

namespace arithlab::interp {

enum class AblationMode { Mean, Zero };

struct PCAResult {
  std::vector<std::array<double, 2>> coords;  // per probe, top-2 components
  std::vector<int> labels;                    // class id per probe
  std::vector<double> evr;                    // explained variance ratios, non-increasing
  double cluster_score = 0.0;                 // held-out nearest-centroid accuracy
  bool degenerate = false;                    // zero-variance activations
};

// Ablation sweep result over every node against one probe set.
struct NodeSweep {
  std::vector<model::NodeId> nodes;
  std::vector<double> fail_fraction;       // correct -> incorrect fraction per node
  std::vector<std::uint32_t> impact_mask;  // union of broken answer slots (bit 0 = sign)
  std::vector<int> min_quantum;            // lowest broken complexity run, -1 if none
};

struct InterventionOutcome {
  arith::Answer expected;
  bool match = false;
};

// Read-only circuit analysis over one trained model: mean-ablation node
// sweeps, attention profiles, PCA cluster checks, interchange interventions
// and schema-driven subtask tagging.
class Analyzer {
 public:
  struct Options {
    AblationMode mode = AblationMode::Mean;
    int reference_questions = 10000;
    double reference_sub_fraction = 0.0;  // task mix of the reference set
    double useful_threshold = 0.001;
    double attention_threshold = 0.01;
    double pca_accept = 0.9;
    double intervention_accept = 0.95;
    int probe_count = 512;
    int pca_per_class = 60;
    int intervention_pairs = 200;
    std::uint64_t seed = 20250810;
  };

  Analyzer(const model::ModelWeights& weights, Options opt);

  const Options& options() const { return opt_; }
  const model::ModelWeights& weights() const { return w_; }
  int n_digits() const { return w_.cfg.n_digits; }

  // Sites that can influence a prediction (every position but the last).
  std::vector<model::NodeId> all_nodes() const;

  std::span<const float> mean_activation(const model::NodeId& node) const;

  NodeSweep sweep_nodes(const ProbeSet& probe) const;
  std::map<model::NodeId, double> find_useful_nodes(const ProbeSet& probe) const;

  // Mean post-softmax attention from node.pos to every source position,
  // averaged over the probe set; entries above the threshold.
  std::vector<std::pair<int, double>> mean_attention_profile(const ProbeSet& probe,
                                                             const model::NodeId& node) const;

  PCAResult pca_node(const model::NodeId& node, const TriProbes& probes) const;
  PCAResult pca_node_bits(const model::NodeId& node, const BitProbes& probes) const;

  InterventionOutcome interchange_intervention(std::span<const model::NodeId> nodes,
                                               const InterventionPair& pair, SubtaskKind kind,
                                               int digit) const;
  double intervention_success(std::span<const model::NodeId> nodes, SubtaskKind kind, int digit,
                              int n_pairs, std::uint64_t seed) const;

  std::vector<SubtaskTag> tag_subtasks(const AlgorithmSchema& schema) const;

 private:
  std::vector<float> node_patch_vector(const model::NodeId& node) const;
  void ensure_class_probes(QClass cls) const;
  const ProbeSet& class_probe_set(QClass cls) const;
  const std::vector<double>& class_attention(QClass cls) const;  // L*H*S*S means
  double attention_mean(QClass cls, const model::NodeId& node, int src_pos) const;
  std::vector<std::vector<float>> node_activations(const model::NodeId& node,
                                                   const ProbeSet& probe) const;

  model::ModelWeights w_;
  Options opt_;
  arith::Layout layout_;
  // Mean node outputs over the reference set, by [layer][pos*H + h] and MLP.
  std::vector<std::vector<std::vector<float>>> mean_head_;  // [L][S*H][D]
  std::vector<std::vector<std::vector<float>>> mean_mlp_;   // [L][S][D]
  mutable std::map<QClass, ProbeSet> class_probes_;
  mutable std::map<QClass, std::vector<double>> class_attention_;
};

// Per-cache attention profile (single captured run, batch row 0).
std::vector<std::pair<int, double>> attention_profile(const model::ActivationCache& cache,
                                                      const model::NodeId& node,
                                                      double min_weight = 0.01);

// Per-class node usage and inserted-node reuse accounting.
struct PolysemanticityReport {
  int total_used = 0;
  int total_inserted = 0;
  struct Row {
    QClass cls;
    int used = 0;
    double used_pct = 0.0;  // of total_used
    int inserted_used = 0;
    double inserted_pct = 0.0;  // of total_inserted
  };
  std::vector<Row> rows;
  std::vector<model::NodeId> inserted_reused;  // useful for >= 1 subtraction class

  nlohmann::json to_json() const;
};

PolysemanticityReport polysemanticity_report(
    const std::map<QClass, std::map<model::NodeId, double>>& used_per_class,
    const std::vector<model::NodeId>& inserted_nodes);

}  // namespace arithlab::interp
