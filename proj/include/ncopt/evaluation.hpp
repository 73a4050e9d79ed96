#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ncopt/dataset.hpp"
#include "ncopt/model.hpp"
#include "ncopt/oracles.hpp"
#include "ncopt/search.hpp"

namespace ncopt {

// Default desk-scale size ladder: exact references up to kExactRefMaxN,
// heuristic-refined references above.
inline const std::vector<int> kSizeLadder = {5, 10, 15, 20, 30, 40, 50};
inline constexpr int kExactRefMaxN = 20;

inline RefQuality ref_quality_for(int n) {
  return n <= kExactRefMaxN ? RefQuality::Exact : RefQuality::HeuristicRefined;
}

// 100 * (pred / reference - 1). The reference must be positive.
double optimality_gap(double pred_length, double reference_length);

// Linear-interpolation percentiles of `values` at the given points in
// [0, 100]; `values` may arrive unsorted, `points` must be non-decreasing.
std::vector<double> percentiles(std::vector<double> values, const std::vector<double>& points);

struct SizeRecord {
  int n = 0;
  int count = 0;
  double mean_gap = 0.0;        // percent
  double ci99_half_width = 0.0; // normal-approximation 99% CI of the mean, percent
  double mean_tour_length = 0.0;
  double mean_ref_length = 0.0;
  RefQuality ref_quality = RefQuality::Exact;
  int fallback_count = 0;       // summed over instances
  bool negative_gap_seen = false;  // possible only against heuristic-refined references
  bool has_band = false;        // percentile band requested
  double band_lo = 0.0;         // 0.5th gap percentile, percent
  double band_hi = 0.0;         // 99.5th gap percentile, percent
};

struct EvalReport {
  std::vector<SizeRecord> sizes;
  std::string checkpoint;  // short checkpoint id, or a label for oracle baselines
  std::string search;      // SearchConfig::describe()
  uint64_t seed = 0;
  std::string timestamp;   // ISO 8601 UTC, excluded from determinism guarantees

  std::string to_json() const;
  std::string to_csv() const;  // one row per size, no run metadata
};

EvalReport eval_report_from_json(const std::string& text);

struct EvalOptions {
  SearchConfig search{};
  uint64_t seed = 0;
  int threads = 1;
  bool percentile_band = false;  // adds the [0.5, 99.5] gap percentile band
};

// Aggregates one size's predicted lengths against references. All references
// must share a quality tag; a gap below -1e-9 against an exact reference is
// rejected as a protocol violation.
SizeRecord summarize_size(int n, const std::vector<double>& pred_lengths,
                          const std::vector<ReferenceSolution>& refs, int fallback_count,
                          bool percentile_band);

// Runs the configured search on every instance (parallel, deterministic per
// instance index) and aggregates against the references.
SizeRecord evaluate_size(const Model& model, const std::vector<TspInstance>& instances,
                         const std::vector<ReferenceSolution>& refs, const EvalOptions& opts);

// Aggregates fixed predicted tours (a solver's output) against references.
SizeRecord evaluate_tours(const std::vector<TspInstance>& instances,
                          const std::vector<Tour>& pred_tours,
                          const std::vector<ReferenceSolution>& refs,
                          bool percentile_band = false);

// Evaluates on labeled test sets keyed by size; the stored tours are the
// references (exact at sizes <= kExactRefMaxN, heuristic-refined above).
EvalReport evaluate_on(const Model& model, const std::string& checkpoint,
                       const std::map<int, Dataset>& test_sets, const EvalOptions& opts);

// Self-contained protocol run: samples `per_size` fresh instances per size
// from opts.seed, computes reference tours, and evaluates the checkpoint.
EvalReport evaluate(const std::string& checkpoint_path, const std::vector<int>& sizes,
                    int per_size, const EvalOptions& opts);

// Appendix-style embedding diagnostics. Each distribution is summarized by
// its {0, 5, 50, 95, 100} percentiles; an empty distribution (inter-graph
// distances of a single graph) reports count 0 and no percentiles.
inline const std::vector<double> kStatPercentiles = {0, 5, 50, 95, 100};

struct DistSummary {
  int count = 0;
  std::vector<double> pct;  // values at kStatPercentiles; empty when count == 0
};

struct SizeEmbeddingStats {
  int n = 0;
  int graphs = 0;
  DistSummary node_norms;        // l2 norms of node embeddings, pooled over graphs
  DistSummary intra_graph_dists; // pairwise node-embedding distances within a graph
  DistSummary graph_norms;       // l2 norms of graph embeddings
  DistSummary inter_graph_dists; // pairwise graph-embedding distances within a size
};

std::vector<SizeEmbeddingStats> embedding_stats(const Model& model, const std::vector<int>& sizes,
                                                int graphs_per_size, uint64_t seed, int threads);
std::string embedding_stats_to_json(const std::vector<SizeEmbeddingStats>& stats);

// Graph embeddings of freshly sampled instances, one row per instance,
// grouped by size. Feeds pca2d and the scatter plots.
struct GraphEmbeddings {
  std::vector<int> size_of_row;
  std::vector<std::vector<double>> rows;
};

GraphEmbeddings collect_graph_embeddings(const Model& model, const std::vector<int>& sizes,
                                         int per_size, uint64_t seed, int threads);

// Eigen-decomposition of a symmetric matrix by cyclic Jacobi sweeps.
// Eigenvalues are returned descending with unit eigenvectors to match.
struct SymEigen {
  std::vector<double> values;
  std::vector<std::vector<double>> vectors;
};

SymEigen eigen_sym(std::vector<std::vector<double>> a);

// Mean-centered projection onto the top two principal directions. Requires
// at least 3 rows; a covariance of rank < 2 degrades to a 1D projection
// (second coordinate 0) with a warning instead of failing.
struct Pca2d {
  std::vector<std::array<double, 2>> proj;
  std::array<double, 2> explained_variance_ratio{0.0, 0.0};
  int rank = 2;
  std::string warning;  // nonempty when rank < 2
};

Pca2d pca2d(const std::vector<std::vector<double>>& embeddings);

// ISO 8601 UTC wall-clock timestamp for run metadata.
std::string utc_timestamp();

}  // namespace ncopt
