#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gmegnn/balance.hpp"
#include "gmegnn/errors.hpp"
#include "gmegnn/netgraph.hpp"

namespace gmegnn::io {

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    std::string_view cell = line.substr(start, pos == std::string_view::npos ? pos : pos - start);
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r'))
      cell.remove_suffix(1);
    out.emplace_back(cell);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// %.17g, enough for exact double round trips.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s, const std::string& where) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError(where + ": '" + s + "' is not a number");
  }
  if (!std::isfinite(v)) throw DataError(where + ": '" + s + "' is not finite");
  return v;
}

inline long long parse_int(const std::string& s, const std::string& where) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError(where + ": '" + s + "' is not an integer");
  }
  return v;
}

// Writes next to the target and renames on success, so a failed command
// never leaves a partial file behind.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open '" + tmp.string() + "' for writing");
    os << content;
    if (!os) throw DataError("write to '" + tmp.string() + "' failed");
  }
  std::filesystem::rename(tmp, path);
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open '" + path.string() + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

/*
 * Node table `group_id,node_id,W,Y,X1,...,Xd` and edge table `group_id,i,j`.
 * Node ids must be dense 0..N_g-1 within each group. Every group must occur
 * in both tables. Groups keep their order of first appearance in the node
 * table.
 */
inline GroupedPopulation parse_population(const std::vector<std::string>& node_lines,
                                          const std::vector<std::string>& edge_lines,
                                          const std::string& node_name = "nodes",
                                          const std::string& edge_name = "edges") {
  if (node_lines.empty()) throw DataError(node_name + ": missing header row");
  const auto header = split_csv_line(node_lines[0]);
  if (header.size() < 5 || header[0] != "group_id" || header[1] != "node_id" ||
      header[2] != "W" || header[3] != "Y") {
    throw DataError(node_name +
                    ": header must be group_id,node_id,W,Y,X1,...,Xd with at least one covariate");
  }
  const std::size_t d = header.size() - 4;

  struct Row {
    long long node;
    int w;
    double y;
    std::vector<double> x;
  };
  std::vector<std::string> order;
  std::map<std::string, std::vector<Row>> rows;
  for (std::size_t ln = 1; ln < node_lines.size(); ++ln) {
    if (node_lines[ln].empty()) continue;
    const std::string where = node_name + " row " + std::to_string(ln + 1);
    const auto cells = split_csv_line(node_lines[ln]);
    if (cells.size() != header.size()) {
      throw DataError(where + ": expected " + std::to_string(header.size()) + " columns, got " +
                      std::to_string(cells.size()));
    }
    Row r;
    r.node = parse_int(cells[1], where + " node_id");
    const auto w = parse_int(cells[2], where + " W");
    if (w != 0 && w != 1) throw DataError(where + ": W must be 0 or 1, got " + cells[2]);
    r.w = static_cast<int>(w);
    r.y = parse_double(cells[3], where + " Y");
    for (std::size_t k = 0; k < d; ++k) r.x.push_back(parse_double(cells[4 + k], where + " " + header[4 + k]));
    auto [it, inserted] = rows.try_emplace(cells[0]);
    if (inserted) order.push_back(cells[0]);
    it->second.push_back(std::move(r));
  }
  if (order.empty()) throw DataError(node_name + ": no data rows");

  std::map<std::string, std::size_t> group_index;
  std::vector<std::vector<Row>> sorted(order.size());
  for (std::size_t g = 0; g < order.size(); ++g) {
    group_index[order[g]] = g;
    auto& rs = rows[order[g]];
    std::vector<int> seen(rs.size(), 0);
    sorted[g].resize(rs.size());
    for (auto& r : rs) {
      if (r.node < 0 || static_cast<std::size_t>(r.node) >= rs.size() || seen[static_cast<std::size_t>(r.node)]) {
        throw DataError(node_name + ": group '" + order[g] + "' node ids must be 0.." +
                        std::to_string(rs.size() - 1) + " without repeats (bad id " +
                        std::to_string(r.node) + ")");
      }
      seen[static_cast<std::size_t>(r.node)] = 1;
      sorted[g][static_cast<std::size_t>(r.node)] = std::move(r);
    }
  }

  if (edge_lines.empty()) throw DataError(edge_name + ": missing header row");
  const auto eh = split_csv_line(edge_lines[0]);
  if (eh.size() != 3 || eh[0] != "group_id" || eh[1] != "i" || eh[2] != "j") {
    throw DataError(edge_name + ": header must be group_id,i,j");
  }
  std::vector<std::vector<Edge>> edges(order.size());
  std::vector<std::set<Edge>> seen_edges(order.size());
  std::vector<int> has_rows(order.size(), 0);
  for (std::size_t ln = 1; ln < edge_lines.size(); ++ln) {
    if (edge_lines[ln].empty()) continue;
    const std::string where = edge_name + " row " + std::to_string(ln + 1);
    const auto cells = split_csv_line(edge_lines[ln]);
    if (cells.size() != 3) throw DataError(where + ": expected 3 columns");
    auto it = group_index.find(cells[0]);
    if (it == group_index.end()) throw DataError(where + ": unknown group '" + cells[0] + "'");
    const auto g = it->second;
    has_rows[g] = 1;
    const auto i = parse_int(cells[1], where + " i");
    const auto j = parse_int(cells[2], where + " j");
    const auto n = static_cast<long long>(sorted[g].size());
    if (i < 0 || j < 0 || i >= n || j >= n) throw DataError(where + ": node id out of range");
    if (i == j) throw DataError(where + ": self-loop");
    const Edge e{static_cast<NodeId>(std::min(i, j)), static_cast<NodeId>(std::max(i, j))};
    if (!seen_edges[g].insert(e).second) {
      throw DataError(where + ": duplicate or reversed edge (" + cells[1] + "," + cells[2] + ")");
    }
    edges[g].push_back(e);
  }
  for (std::size_t g = 0; g < order.size(); ++g) {
    if (!has_rows[g]) throw DataError(edge_name + ": group '" + order[g] + "' has no edge rows");
  }

  GroupedPopulation pop;
  pop.groups.resize(order.size());
  for (std::size_t g = 0; g < order.size(); ++g) {
    auto& grp = pop.groups[g];
    const auto n = sorted[g].size();
    grp.group_id = order[g];
    grp.graph = Graph::from_edges(n, edges[g]);
    grp.W.resize(n);
    grp.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    grp.Y.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const auto& r = sorted[g][i];
      grp.W[i] = r.w;
      grp.Y(static_cast<Eigen::Index>(i)) = r.y;
      for (std::size_t k = 0; k < d; ++k)
        grp.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = r.x[k];
    }
  }
  try {
    pop.validate();
  } catch (const DataError& e) {
    throw DataError(node_name + ": " + e.what());
  }
  return pop;
}

inline GroupedPopulation read_population(const std::filesystem::path& nodes,
                                         const std::filesystem::path& edges) {
  return parse_population(read_lines(nodes), read_lines(edges), nodes.string(), edges.string());
}

inline std::string nodes_csv(const GroupedPopulation& pop) {
  std::ostringstream os;
  const auto d = pop.groups.empty() ? 0 : pop.groups.front().n_covariates();
  os << "group_id,node_id,W,Y";
  for (std::size_t k = 0; k < d; ++k) os << ",X" << k + 1;
  os << '\n';
  for (const auto& g : pop.groups) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      os << g.group_id << ',' << i << ',' << g.W[i] << ',' << format_double(g.Y(r));
      for (std::size_t k = 0; k < d; ++k) os << ',' << format_double(g.X(r, static_cast<Eigen::Index>(k)));
      os << '\n';
    }
  }
  return os.str();
}

inline std::string edges_csv(const GroupedPopulation& pop) {
  std::ostringstream os;
  os << "group_id,i,j\n";
  for (const auto& g : pop.groups)
    for (const auto& [i, j] : g.graph.edges()) os << g.group_id << ',' << i << ',' << j << '\n';
  return os.str();
}

inline std::string edges_csv(const Graph& graph, const std::string& group_id) {
  std::ostringstream os;
  os << "group_id,i,j\n";
  for (const auto& [i, j] : graph.edges()) os << group_id << ',' << i << ',' << j << '\n';
  return os.str();
}

}  // namespace gmegnn::io
