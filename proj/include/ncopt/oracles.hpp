#pragma once

#include <string>
#include <vector>

#include "ncopt/instances.hpp"
#include "ncopt/rng.hpp"

namespace ncopt {

enum class RefQuality { Exact, HeuristicRefined };

inline const char* to_string(RefQuality q) {
  return q == RefQuality::Exact ? "exact" : "heuristic-refined";
}

struct ReferenceSolution {
  Tour tour;
  double length = 0.0;
  RefQuality quality = RefQuality::Exact;
};

// Exhaustive search over all (n-1)!/2 distinct tours. n <= 10.
ReferenceSolution brute_force(const TspInstance& inst);

// Bitmask DP over subsets, O(2^n n^2) time and O(2^n n) memory. n <= 20.
ReferenceSolution held_karp(const TspInstance& inst);

enum class InsertionRule { Nearest, Random, Furthest };

InsertionRule insertion_rule_from_string(const std::string& s);

// Constructive insertion heuristic. The furthest rule repeatedly inserts the
// remaining node whose distance to its nearest tour node is largest, at the
// cheapest position; nearest is the mirror image; random draws the node from
// rng. Furthest/nearest seed the tour with the mutually furthest/nearest
// pair, random with two rng draws.
Tour insertion(const TspInstance& inst, InsertionRule rule, Rng& rng);

// First-improvement 2-opt: scan i ascending then j, apply each improving
// reversal immediately, repeat passes until no improvement or max_passes.
// pass_lengths, when given, records the tour length after each pass.
Tour two_opt(const TspInstance& inst, const Tour& start, int max_passes,
             std::vector<double>* pass_lengths = nullptr);

// Exact solution for n <= 20; furthest insertion refined by 2-opt to a local
// optimum beyond that.
ReferenceSolution reference_tour(const TspInstance& inst);

}  // namespace ncopt
