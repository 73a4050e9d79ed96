#pragma once

#include <string>
#include <vector>

#include "ncopt/instances.hpp"
#include "ncopt/rng.hpp"

namespace ncopt {

// Sequential view of a decoder over one instance. step_probs returns the
// model's probability for every node as the next tour position: visited
// entries are exactly 0, and entries need not sum to 1 (an edge-heatmap
// decoder reports raw edge probabilities, zero off the sparse graph).
// A policy that cannot score the first position (scores_start() == false)
// rejects an empty prefix; the search supplies the start node instead.
class StepPolicy {
 public:
  virtual ~StepPolicy() = default;
  virtual int n() const = 0;
  virtual bool scores_start() const = 0;
  virtual std::vector<double> step_probs(const std::vector<int>& prefix,
                                         const std::vector<uint8_t>& visited) = 0;
};

enum class SearchStrategy { Greedy, Beam, Sample };
enum class BeamSelection { HighestProbability, ShortestTour };

const char* to_string(SearchStrategy s);
const char* to_string(BeamSelection s);
SearchStrategy search_strategy_from_string(const std::string& s);
BeamSelection beam_selection_from_string(const std::string& s);

struct SearchConfig {
  SearchStrategy strategy = SearchStrategy::Greedy;
  int width = 1;
  BeamSelection selection = BeamSelection::HighestProbability;
  uint64_t seed = 0;

  void validate() const;
  std::string describe() const;  // e.g. "beam(width=128, shortest-tour)"
};

// step_probs holds the model probability recorded at every scored step, in
// tour order: a policy that scores the start records n-1 values, one that
// does not records n-2 (the start is unscored and the final node is forced
// by the permutation constraint in both cases). Fallback steps record 0.
struct SearchResult {
  Tour tour;
  double length = 0;
  double log_prob = 0;  // sum of log step_probs, -inf if any step recorded 0
  std::vector<double> step_probs;
  int fallback_count = 0;
};

SearchResult greedy_search(StepPolicy& policy, const TspInstance& inst);
SearchResult beam_search(StepPolicy& policy, const TspInstance& inst, int width,
                         BeamSelection selection);
SearchResult sample_search(StepPolicy& policy, const TspInstance& inst, int width, uint64_t seed);
SearchResult run_search(StepPolicy& policy, const TspInstance& inst, const SearchConfig& cfg);

// Teacher-forces a fixed tour through the policy and returns the sum of its
// scored step log-probabilities (-inf if any step has probability 0).
double score_tour(StepPolicy& policy, const TspInstance& inst, const Tour& tour);

}  // namespace ncopt
