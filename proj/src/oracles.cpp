#include "ncopt/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ncopt {

ReferenceSolution brute_force(const TspInstance& inst) {
  inst.validate();
  const int n = inst.n();
  NC_REQUIRE(n <= 10, "brute_force limited to n <= 10, got " << n);

  std::vector<int> rest(n - 1);
  std::iota(rest.begin(), rest.end(), 1);

  Tour best;
  double best_len = std::numeric_limits<double>::infinity();
  do {
    // With node 0 fixed first, each undirected tour appears twice (once per
    // orientation); keep the orientation with the smaller second node.
    if (rest.front() > rest.back()) continue;
    double len = edge_dist(inst, 0, rest.front());
    for (size_t i = 0; i + 1 < rest.size(); ++i) len += edge_dist(inst, rest[i], rest[i + 1]);
    len += edge_dist(inst, rest.back(), 0);
    if (len < best_len) {
      best_len = len;
      best.assign(1, 0);
      best.insert(best.end(), rest.begin(), rest.end());
    }
  } while (std::next_permutation(rest.begin(), rest.end()));

  return {std::move(best), best_len, RefQuality::Exact};
}

ReferenceSolution held_karp(const TspInstance& inst) {
  inst.validate();
  const int n = inst.n();
  NC_REQUIRE(n <= 20, "held_karp limited to n <= 20 (2^n states), got " << n);

  // States are paths that start at node 0, visit exactly the subset `mask` of
  // nodes {1..n-1}, and end at node `j` (encoded as j-1).
  const int m = n - 1;
  const size_t nmask = size_t(1) << m;
  std::vector<double> dist0(m);
  std::vector<double> d(static_cast<size_t>(m) * m);
  for (int a = 0; a < m; ++a) {
    dist0[a] = edge_dist(inst, 0, a + 1);
    for (int b = 0; b < m; ++b) d[static_cast<size_t>(a) * m + b] = edge_dist(inst, a + 1, b + 1);
  }

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> dp(nmask * m, kInf);
  std::vector<int8_t> parent(nmask * m, -1);
  for (int j = 0; j < m; ++j) dp[(size_t(1) << j) * m + j] = dist0[j];

  for (size_t mask = 1; mask < nmask; ++mask) {
    for (int j = 0; j < m; ++j) {
      const double cur = dp[mask * m + j];
      if (cur == kInf || !(mask & (size_t(1) << j))) continue;
      for (int k = 0; k < m; ++k) {
        if (mask & (size_t(1) << k)) continue;
        const size_t nmask2 = mask | (size_t(1) << k);
        const double cand = cur + d[static_cast<size_t>(j) * m + k];
        double& slot = dp[nmask2 * m + k];
        if (cand < slot) {  // strict < keeps the lowest-index predecessor on ties
          slot = cand;
          parent[nmask2 * m + k] = static_cast<int8_t>(j);
        }
      }
    }
  }

  const size_t full = nmask - 1;
  double best_len = kInf;
  int best_j = -1;
  for (int j = 0; j < m; ++j) {
    const double cand = dp[full * m + j] + dist0[j];
    if (cand < best_len) {
      best_len = cand;
      best_j = j;
    }
  }
  NC_CHECK(best_j >= 0, "held_karp: no complete path found");

  Tour tour;
  size_t mask = full;
  int j = best_j;
  while (j >= 0) {
    tour.push_back(j + 1);
    const int pj = parent[mask * m + j];
    mask &= ~(size_t(1) << j);
    j = pj;
  }
  tour.push_back(0);
  std::reverse(tour.begin(), tour.end());
  require_valid_tour(tour, n);
  return {std::move(tour), best_len, RefQuality::Exact};
}

InsertionRule insertion_rule_from_string(const std::string& s) {
  if (s == "nearest") return InsertionRule::Nearest;
  if (s == "random") return InsertionRule::Random;
  if (s == "furthest") return InsertionRule::Furthest;
  NC_REQUIRE(false, "unknown insertion rule '" << s << "'");
  return InsertionRule::Furthest;
}

Tour insertion(const TspInstance& inst, InsertionRule rule, Rng& rng) {
  inst.validate();
  const int n = inst.n();

  std::vector<char> in_tour(n, 0);
  Tour tour;
  tour.reserve(n);

  // Seed pair.
  if (rule == InsertionRule::Random) {
    const int a = rng.uniform_int(n);
    int b = rng.uniform_int(n - 1);
    if (b >= a) ++b;
    tour = {a, b};
  } else {
    const bool want_far = rule == InsertionRule::Furthest;
    int bi = 0, bj = 1;
    double best = edge_dist(inst, 0, 1);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        const double dd = edge_dist(inst, i, j);
        if (want_far ? dd > best : dd < best) {
          best = dd;
          bi = i;
          bj = j;
        }
      }
    tour = {bi, bj};
  }
  in_tour[tour[0]] = in_tour[tour[1]] = 1;

  // Distance from each outside node to its nearest tour node, kept current.
  std::vector<double> near(n, std::numeric_limits<double>::infinity());
  for (int v = 0; v < n; ++v) {
    if (in_tour[v]) continue;
    near[v] = std::min(edge_dist(inst, v, tour[0]), edge_dist(inst, v, tour[1]));
  }

  while (static_cast<int>(tour.size()) < n) {
    int pick = -1;
    if (rule == InsertionRule::Random) {
      int remaining = n - static_cast<int>(tour.size());
      int skip = rng.uniform_int(remaining);
      for (int v = 0; v < n; ++v) {
        if (in_tour[v]) continue;
        if (skip-- == 0) {
          pick = v;
          break;
        }
      }
    } else {
      const bool want_far = rule == InsertionRule::Furthest;
      double best = want_far ? -1.0 : std::numeric_limits<double>::infinity();
      for (int v = 0; v < n; ++v) {
        if (in_tour[v]) continue;
        if (want_far ? near[v] > best : near[v] < best) {  // strict keeps the lowest index on ties
          best = near[v];
          pick = v;
        }
      }
    }

    // Cheapest position: minimize d(a,v) + d(v,b) - d(a,b) over tour edges.
    const int sz = static_cast<int>(tour.size());
    int best_pos = 0;
    double best_cost = std::numeric_limits<double>::infinity();
    for (int p = 0; p < sz; ++p) {
      const int a = tour[p], b = tour[(p + 1) % sz];
      const double cost = edge_dist(inst, a, pick) + edge_dist(inst, pick, b) - edge_dist(inst, a, b);
      if (cost < best_cost) {
        best_cost = cost;
        best_pos = p;
      }
    }
    tour.insert(tour.begin() + best_pos + 1, pick);
    in_tour[pick] = 1;
    for (int v = 0; v < n; ++v)
      if (!in_tour[v]) near[v] = std::min(near[v], edge_dist(inst, v, pick));
  }

  require_valid_tour(tour, n);
  return tour;
}

Tour two_opt(const TspInstance& inst, const Tour& start, int max_passes,
             std::vector<double>* pass_lengths) {
  const int n = inst.n();
  require_valid_tour(start, n);
  NC_REQUIRE(max_passes >= 0, "two_opt: negative max_passes");

  Tour tour = start;
  if (pass_lengths) pass_lengths->clear();
  constexpr double kEps = 1e-12;

  for (int pass = 0; pass < max_passes; ++pass) {
    bool improved = false;
    for (int i = 0; i < n - 1; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if (i == 0 && j == n - 1) continue;  // same pair of edges as (i, j) closing
        const int a = tour[i == 0 ? n - 1 : i - 1], b = tour[i];
        const int c = tour[j], e = tour[(j + 1) % n];
        const double delta = edge_dist(inst, a, c) + edge_dist(inst, b, e) -
                             edge_dist(inst, a, b) - edge_dist(inst, c, e);
        if (delta < -kEps) {
          std::reverse(tour.begin() + i, tour.begin() + j + 1);
          improved = true;
        }
      }
    }
    if (pass_lengths) pass_lengths->push_back(tour_length(inst, tour));
    if (!improved) break;
  }
  return tour;
}

ReferenceSolution reference_tour(const TspInstance& inst) {
  inst.validate();
  if (inst.n() <= 20) return held_karp(inst);
  Rng rng(0);  // furthest insertion ignores the stream
  Tour tour = insertion(inst, InsertionRule::Furthest, rng);
  tour = two_opt(inst, tour, std::numeric_limits<int>::max());
  return {tour, tour_length(inst, tour), RefQuality::HeuristicRefined};
}

}  // namespace ncopt
