#include "ncopt/graph.hpp"

#include <algorithm>
#include <cmath>

namespace ncopt {

std::string to_string(GraphMode m) {
  switch (m) {
    case GraphMode::Full: return "full";
    case GraphMode::FixedDegree: return "fixed-degree";
    case GraphMode::FixedFraction: return "fixed-fraction";
  }
  return "?";
}

GraphMode graph_mode_from_string(const std::string& s) {
  if (s == "full") return GraphMode::Full;
  if (s == "fixed-degree") return GraphMode::FixedDegree;
  if (s == "fixed-fraction") return GraphMode::FixedFraction;
  NC_REQUIRE(false, "unknown graph mode '" << s << "'");
  return GraphMode::Full;
}

int SparseGraph::edge_id(int i, int j) const {
  const auto& nb = neighbors[i];
  auto it = std::lower_bound(nb.begin(), nb.end(), j);
  if (it == nb.end() || *it != j) return -1;
  return row_offset[i] + static_cast<int>(it - nb.begin());
}

SparseGraph sparsify(const TspInstance& inst, const GraphSpec& spec) {
  inst.validate();
  const int n = inst.n();

  int degree = n - 1;
  switch (spec.mode) {
    case GraphMode::Full:
      break;
    case GraphMode::FixedDegree:
      NC_REQUIRE(spec.k >= 1, "fixed-degree needs k >= 1, got " << spec.k);
      degree = std::min(spec.k, n - 1);
      break;
    case GraphMode::FixedFraction:
      NC_REQUIRE(spec.f > 0.0 && spec.f <= 1.0, "fixed-fraction needs f in (0,1], got " << spec.f);
      degree = std::min(std::max(1, static_cast<int>(std::ceil(spec.f * n))), n - 1);
      break;
  }

  SparseGraph g;
  g.spec = spec;
  g.n = n;
  g.neighbors.resize(n);
  g.row_offset.assign(n + 1, 0);

  std::vector<std::pair<double, int>> cand;
  for (int i = 0; i < n; ++i) {
    cand.clear();
    for (int j = 0; j < n; ++j)
      if (j != i) cand.emplace_back(edge_dist(inst, i, j), j);
    // nearest first; index breaks distance ties
    std::partial_sort(cand.begin(), cand.begin() + degree, cand.end());
    auto& nb = g.neighbors[i];
    nb.resize(degree);
    for (int r = 0; r < degree; ++r) nb[r] = cand[r].second;
    std::sort(nb.begin(), nb.end());
  }

  for (int i = 0; i < n; ++i) {
    g.row_offset[i + 1] = g.row_offset[i] + static_cast<int>(g.neighbors[i].size());
    for (int j : g.neighbors[i]) {
      g.edge_src.push_back(i);
      g.edge_tgt.push_back(j);
    }
  }
  return g;
}

}  // namespace ncopt
