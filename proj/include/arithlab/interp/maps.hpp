#pragma once

#include <string>
#include <vector>

#include "arithlab/arith/vocab.hpp"
#include "arithlab/interp/analyzer.hpp"

namespace arithlab::interp {

// Compacted position x (layer, head/MLP) grid, the Table-1/4/5 and Fig-8/9
// rendering shape. Cells hold short labels; unused cells render as filler.
struct GridMap {
  std::string title;
  std::vector<int> positions;           // columns (token positions, ascending)
  std::vector<std::string> col_names;   // role names
  std::vector<std::string> row_names;   // "L0H0".."L1MLP"
  std::vector<std::vector<std::string>> cells;  // [row][col], "" = unused
};

// Rows for every (layer, head/MLP); columns restricted to positions where
// any node clears the usefulness threshold.
GridMap build_fail_map(const NodeSweep& sweep, const arith::Layout& layout,
                       const model::ModelConfig& cfg, double threshold);

// Lowest complexity quantum broken per node, prefix taken from the probe op.
GridMap build_complexity_map(const NodeSweep& sweep, const arith::Layout& layout,
                             const model::ModelConfig& cfg, double threshold,
                             char quantum_prefix);

// Answer digits impacted per node ("A3 A2"-style cells).
GridMap build_impact_map(const NodeSweep& sweep, const arith::Layout& layout,
                         const model::ModelConfig& cfg, double threshold);

// Subtask labels per tagged node.
GridMap build_subtask_map(const std::vector<SubtaskTag>& tags, const arith::Layout& layout,
                          const model::ModelConfig& cfg);

void write_csv(const GridMap& map, const std::string& path);
void write_svg(const GridMap& map, const std::string& path);

}  // namespace arithlab::interp
