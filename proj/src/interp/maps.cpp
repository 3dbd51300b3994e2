#include "arithlab/interp/maps.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace arithlab::interp {

namespace {

std::vector<std::string> row_names_for(const model::ModelConfig& cfg) {
  std::vector<std::string> rows;
  for (int l = 0; l < cfg.n_layers; ++l) {
    for (int h = 0; h < cfg.n_heads; ++h)
      rows.push_back("L" + std::to_string(l) + "H" + std::to_string(h));
    rows.push_back("L" + std::to_string(l) + "MLP");
  }
  return rows;
}

int row_index(const model::ModelConfig& cfg, const model::NodeId& node) {
  const int per_layer = cfg.n_heads + 1;
  return node.layer * per_layer + (node.is_mlp() ? cfg.n_heads : node.head);
}

GridMap grid_for_positions(const std::string& title, const std::set<int>& positions,
                           const arith::Layout& layout, const model::ModelConfig& cfg) {
  GridMap map;
  map.title = title;
  map.positions.assign(positions.begin(), positions.end());
  for (int p : map.positions) map.col_names.push_back(layout.role_name(p));
  map.row_names = row_names_for(cfg);
  map.cells.assign(map.row_names.size(),
                   std::vector<std::string>(map.positions.size(), ""));
  return map;
}

int col_index(const GridMap& map, int pos) {
  const auto it = std::find(map.positions.begin(), map.positions.end(), pos);
  return it == map.positions.end() ? -1 : static_cast<int>(it - map.positions.begin());
}

std::string impact_label(std::uint32_t mask, int n_digits) {
  // Bit 0 is the sign slot (the A_{n+1} token); bit k>0 is answer digit
  // place n+1-k.
  std::string out;
  for (int bit = 0; bit < n_digits + 2; ++bit) {
    if (!(mask & (1u << bit))) continue;
    if (!out.empty()) out += " ";
    out += "A" + std::to_string(n_digits + 1 - bit);
  }
  return out;
}

}  // namespace

GridMap build_fail_map(const NodeSweep& sweep, const arith::Layout& layout,
                       const model::ModelConfig& cfg, double threshold) {
  std::set<int> positions;
  for (std::size_t i = 0; i < sweep.nodes.size(); ++i)
    if (sweep.fail_fraction[i] >= threshold) positions.insert(sweep.nodes[i].pos);
  GridMap map = grid_for_positions("fail_fraction", positions, layout, cfg);
  for (std::size_t i = 0; i < sweep.nodes.size(); ++i) {
    if (sweep.fail_fraction[i] < threshold) continue;
    const int col = col_index(map, sweep.nodes[i].pos);
    std::ostringstream cell;
    cell.precision(3);
    cell << sweep.fail_fraction[i] * 100.0 << "%";
    map.cells[static_cast<std::size_t>(row_index(cfg, sweep.nodes[i]))]
             [static_cast<std::size_t>(col)] = cell.str();
  }
  return map;
}

GridMap build_complexity_map(const NodeSweep& sweep, const arith::Layout& layout,
                             const model::ModelConfig& cfg, double threshold,
                             char quantum_prefix) {
  std::set<int> positions;
  for (std::size_t i = 0; i < sweep.nodes.size(); ++i)
    if (sweep.fail_fraction[i] >= threshold && sweep.min_quantum[i] >= 0)
      positions.insert(sweep.nodes[i].pos);
  GridMap map = grid_for_positions("min_complexity", positions, layout, cfg);
  for (std::size_t i = 0; i < sweep.nodes.size(); ++i) {
    if (sweep.fail_fraction[i] < threshold || sweep.min_quantum[i] < 0) continue;
    const int col = col_index(map, sweep.nodes[i].pos);
    map.cells[static_cast<std::size_t>(row_index(cfg, sweep.nodes[i]))]
             [static_cast<std::size_t>(col)] =
        std::string(1, quantum_prefix) + std::to_string(sweep.min_quantum[i]);
  }
  return map;
}

GridMap build_impact_map(const NodeSweep& sweep, const arith::Layout& layout,
                         const model::ModelConfig& cfg, double threshold) {
  std::set<int> positions;
  for (std::size_t i = 0; i < sweep.nodes.size(); ++i)
    if (sweep.fail_fraction[i] >= threshold && sweep.impact_mask[i] != 0)
      positions.insert(sweep.nodes[i].pos);
  GridMap map = grid_for_positions("impacted_digits", positions, layout, cfg);
  for (std::size_t i = 0; i < sweep.nodes.size(); ++i) {
    if (sweep.fail_fraction[i] < threshold || sweep.impact_mask[i] == 0) continue;
    const int col = col_index(map, sweep.nodes[i].pos);
    map.cells[static_cast<std::size_t>(row_index(cfg, sweep.nodes[i]))]
             [static_cast<std::size_t>(col)] =
        impact_label(sweep.impact_mask[i], layout.n_digits());
  }
  return map;
}

GridMap build_subtask_map(const std::vector<SubtaskTag>& tags, const arith::Layout& layout,
                          const model::ModelConfig& cfg) {
  std::set<int> positions;
  for (const auto& t : tags) positions.insert(t.node.pos);
  GridMap map = grid_for_positions("subtasks", positions, layout, cfg);
  for (const auto& t : tags) {
    const int col = col_index(map, t.node.pos);
    auto& cell = map.cells[static_cast<std::size_t>(row_index(cfg, t.node))]
                          [static_cast<std::size_t>(col)];
    if (!cell.empty()) cell += " ";
    cell += t.label();
  }
  return map;
}

void write_csv(const GridMap& map, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << map.title;
  for (std::size_t c = 0; c < map.positions.size(); ++c)
    out << ",P" << map.positions[c] << " " << map.col_names[c];
  out << "\n";
  for (std::size_t r = 0; r < map.row_names.size(); ++r) {
    out << map.row_names[r];
    for (const auto& cell : map.cells[r]) out << "," << cell;
    out << "\n";
  }
}

void write_svg(const GridMap& map, const std::string& path) {
  const int cw = 86, ch = 28, x0 = 90, y0 = 50;
  const int width = x0 + cw * static_cast<int>(map.positions.size()) + 10;
  const int height = y0 + ch * static_cast<int>(map.row_names.size()) + 10;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" font-family=\"monospace\" font-size=\"11\">\n";
  out << "<text x=\"6\" y=\"16\" font-size=\"13\">" << map.title << "</text>\n";
  for (std::size_t c = 0; c < map.positions.size(); ++c) {
    out << "<text x=\"" << x0 + static_cast<int>(c) * cw + 4 << "\" y=\"" << y0 - 20
        << "\">P" << map.positions[c] << "</text>\n";
    out << "<text x=\"" << x0 + static_cast<int>(c) * cw + 4 << "\" y=\"" << y0 - 6 << "\">"
        << map.col_names[c] << "</text>\n";
  }
  for (std::size_t r = 0; r < map.row_names.size(); ++r) {
    out << "<text x=\"6\" y=\"" << y0 + static_cast<int>(r) * ch + 18 << "\">"
        << map.row_names[r] << "</text>\n";
    for (std::size_t c = 0; c < map.positions.size(); ++c) {
      const bool used = !map.cells[r][c].empty();
      out << "<rect x=\"" << x0 + static_cast<int>(c) * cw << "\" y=\""
          << y0 + static_cast<int>(r) * ch << "\" width=\"" << cw - 2 << "\" height=\""
          << ch - 2 << "\" fill=\"" << (used ? "#c8e6c9" : "#e0e0e0")
          << "\" stroke=\"#888\"/>\n";
      if (used)
        out << "<text x=\"" << x0 + static_cast<int>(c) * cw + 4 << "\" y=\""
            << y0 + static_cast<int>(r) * ch + 18 << "\">" << map.cells[r][c] << "</text>\n";
    }
  }
  out << "</svg>\n";
}

}  // namespace arithlab::interp
