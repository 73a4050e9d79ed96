#pragma once

#include <string>
#include <vector>

#include "ncopt/instances.hpp"

namespace ncopt {

enum class GraphMode { Full, FixedDegree, FixedFraction };

// How to connect an instance into a graph before encoding.
struct GraphSpec {
  GraphMode mode = GraphMode::Full;
  int k = 10;      // fixed-degree neighbor count
  double f = 0.2;  // fixed-fraction of n

  static GraphSpec full() { return {}; }
  static GraphSpec fixed_degree(int k) { return {GraphMode::FixedDegree, k, 0.0}; }
  static GraphSpec fixed_fraction(double f) { return {GraphMode::FixedFraction, 0, f}; }
};

std::string to_string(GraphMode m);
GraphMode graph_mode_from_string(const std::string& s);

// Directed neighbor structure over an instance. Neighbor lists and the
// flattened edge arrays are sorted by (source, target) ascending, which fixes
// the row order of all edge tensors downstream.
struct SparseGraph {
  GraphSpec spec;
  int n = 0;
  std::vector<std::vector<int>> neighbors;  // per source node, ascending target index
  std::vector<int> edge_src, edge_tgt;      // flattened, grouped by source
  std::vector<int> row_offset;              // size n+1 into the edge arrays

  int num_edges() const { return static_cast<int>(edge_src.size()); }

  // Index into the edge arrays for (i -> j); -1 when the edge is absent.
  int edge_id(int i, int j) const;
};

// Neighbor selection is by ascending (distance, node index); no self-loops;
// no symmetrization.
SparseGraph sparsify(const TspInstance& inst, const GraphSpec& spec);

}  // namespace ncopt
