#include "ncopt/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ncopt/common.hpp"

namespace ncopt {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void record_step(SearchResult& res, double p) {
  res.step_probs.push_back(p);
  if (p > 0) {
    res.log_prob += std::log(p);
  } else {
    res.log_prob = kNegInf;
    ++res.fallback_count;
  }
}

// Lowest-index nearest unvisited node; the escape hatch when a heatmap
// policy has no unvisited sparse neighbor left.
int nearest_unvisited(const TspInstance& inst, int from, const std::vector<uint8_t>& visited) {
  int best = -1;
  double best_d = 0;
  for (int j = 0; j < inst.n(); ++j) {
    if (visited[j]) continue;
    const double d = edge_dist(inst, from, j);
    if (best < 0 || d < best_d) {
      best = j;
      best_d = d;
    }
  }
  NC_CHECK(best >= 0, "no unvisited node left");
  return best;
}

int only_unvisited(const std::vector<uint8_t>& visited) {
  int last = -1;
  for (int j = 0; j < static_cast<int>(visited.size()); ++j) {
    if (visited[j]) continue;
    NC_CHECK(last < 0, "more than one unvisited node at tour completion");
    last = j;
  }
  NC_CHECK(last >= 0, "no unvisited node at tour completion");
  return last;
}

void check_policy(const StepPolicy& policy, const TspInstance& inst) {
  NC_REQUIRE(policy.n() == inst.n(),
             "policy over " << policy.n() << " nodes used on an instance of " << inst.n());
}

void finish(SearchResult& res, const TspInstance& inst) {
  res.length = tour_length(inst, res.tour);
}

}  // namespace

const char* to_string(SearchStrategy s) {
  switch (s) {
    case SearchStrategy::Greedy: return "greedy";
    case SearchStrategy::Beam: return "beam";
    case SearchStrategy::Sample: return "sample";
  }
  return "?";
}

const char* to_string(BeamSelection s) {
  switch (s) {
    case BeamSelection::HighestProbability: return "highest-probability";
    case BeamSelection::ShortestTour: return "shortest-tour";
  }
  return "?";
}

SearchStrategy search_strategy_from_string(const std::string& s) {
  if (s == "greedy") return SearchStrategy::Greedy;
  if (s == "beam") return SearchStrategy::Beam;
  if (s == "sample") return SearchStrategy::Sample;
  NC_REQUIRE(false, "unknown search strategy '" << s << "'");
  return SearchStrategy::Greedy;
}

BeamSelection beam_selection_from_string(const std::string& s) {
  if (s == "highest-probability") return BeamSelection::HighestProbability;
  if (s == "shortest-tour") return BeamSelection::ShortestTour;
  NC_REQUIRE(false, "unknown beam selection '" << s << "'");
  return BeamSelection::HighestProbability;
}

void SearchConfig::validate() const {
  NC_REQUIRE(width >= 1, "search width must be >= 1, got " << width);
  NC_REQUIRE(strategy != SearchStrategy::Greedy || width == 1,
             "greedy search implies width 1, got " << width);
}

std::string SearchConfig::describe() const {
  if (strategy == SearchStrategy::Greedy) return "greedy";
  std::string out = to_string(strategy);
  out += "(width=" + std::to_string(width);
  if (strategy == SearchStrategy::Beam) out += std::string(", ") + to_string(selection);
  out += ")";
  return out;
}

SearchResult greedy_search(StepPolicy& policy, const TspInstance& inst) {
  check_policy(policy, inst);
  const int n = policy.n();
  SearchResult res;
  std::vector<uint8_t> visited(n, 0);

  // Deterministic start at node 0; a start-scoring policy still records the
  // probability it assigned to that choice.
  if (policy.scores_start()) {
    std::vector<double> p = policy.step_probs({}, visited);
    record_step(res, p[0]);
  }
  res.tour.push_back(0);
  visited[0] = 1;

  while (static_cast<int>(res.tour.size()) < n - 1) {
    std::vector<double> p = policy.step_probs(res.tour, visited);
    int best = -1;
    double best_p = 0;
    for (int j = 0; j < n; ++j) {  // strict > breaks ties toward the lowest index
      if (!visited[j] && p[j] > best_p) {
        best = j;
        best_p = p[j];
      }
    }
    if (best < 0) {
      best = nearest_unvisited(inst, res.tour.back(), visited);
      record_step(res, 0.0);
    } else {
      record_step(res, best_p);
    }
    res.tour.push_back(best);
    visited[best] = 1;
  }
  res.tour.push_back(only_unvisited(visited));
  finish(res, inst);
  return res;
}

namespace {

struct Hyp {
  Tour prefix;
  std::vector<uint8_t> visited;
  double logp = 0;  // sum over positive scored steps; fallbacks tracked apart
  int fallbacks = 0;
  std::vector<double> steps;
};

struct Cand {
  Tour prefix;  // parent prefix plus the new node
  double logp;
  int fallbacks;
  double step_p;
  int parent;
};

// A zero-probability step multiplies the tour probability by zero, so any
// hypothesis with fewer fallbacks ranks strictly higher; among equals the
// positive-step product decides and exact ties go to the smaller prefix.
// Keeping the fallback count out of logp stops -inf from erasing the
// ordering of everything decided after a fallback.
bool hyp_prob_order(int fa, double la, const Tour& pa, int fb, double lb, const Tour& pb) {
  if (fa != fb) return fa < fb;
  if (la != lb) return la > lb;
  return pa < pb;
}

}  // namespace

SearchResult beam_search(StepPolicy& policy, const TspInstance& inst, int width,
                         BeamSelection selection) {
  check_policy(policy, inst);
  NC_REQUIRE(width >= 1, "beam width must be >= 1, got " << width);
  const int n = policy.n();

  Hyp root;
  root.visited.assign(n, 0);
  if (policy.scores_start()) {
    std::vector<double> p = policy.step_probs({}, root.visited);
    root.steps.push_back(p[0]);
    if (p[0] > 0) root.logp = std::log(p[0]);
    else ++root.fallbacks;
  }
  root.prefix.push_back(0);  // all hypotheses share the deterministic start
  root.visited[0] = 1;
  std::vector<Hyp> beam{std::move(root)};

  while (static_cast<int>(beam.front().prefix.size()) < n - 1) {
    std::vector<Cand> cands;
    for (int h = 0; h < static_cast<int>(beam.size()); ++h) {
      const Hyp& hyp = beam[h];
      std::vector<double> p = policy.step_probs(hyp.prefix, hyp.visited);
      bool any = false;
      for (int j = 0; j < n; ++j) {
        if (hyp.visited[j] || p[j] <= 0) continue;
        Cand c{hyp.prefix, hyp.logp + std::log(p[j]), hyp.fallbacks, p[j], h};
        c.prefix.push_back(j);
        cands.push_back(std::move(c));
        any = true;
      }
      if (!any) {  // stuck hypothesis survives through the fallback edge
        Cand c{hyp.prefix, hyp.logp, hyp.fallbacks + 1, 0.0, h};
        c.prefix.push_back(nearest_unvisited(inst, hyp.prefix.back(), hyp.visited));
        cands.push_back(std::move(c));
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      return hyp_prob_order(a.fallbacks, a.logp, a.prefix, b.fallbacks, b.logp, b.prefix);
    });
    if (static_cast<int>(cands.size()) > width) cands.resize(width);

    std::vector<Hyp> next;
    next.reserve(cands.size());
    for (Cand& c : cands) {
      const Hyp& parent = beam[c.parent];
      Hyp h;
      h.visited = parent.visited;
      h.visited[c.prefix.back()] = 1;
      h.logp = c.logp;
      h.fallbacks = c.fallbacks;
      h.steps = parent.steps;
      h.steps.push_back(c.step_p);
      h.prefix = std::move(c.prefix);
      next.push_back(std::move(h));
    }
    beam = std::move(next);
  }

  for (Hyp& h : beam) h.prefix.push_back(only_unvisited(h.visited));

  int best = 0;
  std::vector<double> lengths(beam.size());
  for (size_t i = 0; i < beam.size(); ++i) lengths[i] = tour_length(inst, beam[i].prefix);
  for (size_t i = 1; i < beam.size(); ++i) {
    const Hyp& a = beam[i];
    const Hyp& b = beam[best];
    bool better;
    if (selection == BeamSelection::HighestProbability) {
      better = hyp_prob_order(a.fallbacks, a.logp, a.prefix, b.fallbacks, b.logp, b.prefix);
    } else {
      better = lengths[i] != lengths[best]
                   ? lengths[i] < lengths[best]
                   : hyp_prob_order(a.fallbacks, a.logp, a.prefix, b.fallbacks, b.logp, b.prefix);
    }
    if (better) best = static_cast<int>(i);
  }

  SearchResult res;
  res.tour = std::move(beam[best].prefix);
  res.length = lengths[best];
  // Reported log_prob includes the scored start and is -inf when any step had
  // probability 0, matching record_step.
  res.log_prob = beam[best].fallbacks > 0 ? kNegInf : beam[best].logp;
  res.step_probs = std::move(beam[best].steps);
  res.fallback_count = beam[best].fallbacks;
  return res;
}

SearchResult sample_search(StepPolicy& policy, const TspInstance& inst, int width, uint64_t seed) {
  check_policy(policy, inst);
  NC_REQUIRE(width >= 1, "sample width must be >= 1, got " << width);
  const int n = policy.n();
  Rng base(seed);

  SearchResult best;
  for (int r = 0; r < width; ++r) {
    Rng rng = base.child(static_cast<uint64_t>(r));  // per-rollout stream: best-of-b is
    SearchResult res;                                // prefix-stable as width grows
    std::vector<uint8_t> visited(n, 0);
    int start;
    if (policy.scores_start()) {
      std::vector<double> p = policy.step_probs({}, visited);
      start = rng.sample_weighted(p);
      record_step(res, p[start]);
    } else {
      start = rng.uniform_int(n);
    }
    res.tour.push_back(start);
    visited[start] = 1;

    while (static_cast<int>(res.tour.size()) < n - 1) {
      std::vector<double> p = policy.step_probs(res.tour, visited);
      double total = 0;
      for (double v : p) total += v;
      int next;
      if (total <= 0) {
        next = nearest_unvisited(inst, res.tour.back(), visited);
        record_step(res, 0.0);
      } else {
        next = rng.sample_weighted(p);
        record_step(res, p[next]);
      }
      res.tour.push_back(next);
      visited[next] = 1;
    }
    res.tour.push_back(only_unvisited(visited));
    finish(res, inst);
    if (r == 0 || res.length < best.length) best = std::move(res);
  }
  return best;
}

SearchResult run_search(StepPolicy& policy, const TspInstance& inst, const SearchConfig& cfg) {
  cfg.validate();
  switch (cfg.strategy) {
    case SearchStrategy::Greedy: return greedy_search(policy, inst);
    case SearchStrategy::Beam: return beam_search(policy, inst, cfg.width, cfg.selection);
    case SearchStrategy::Sample: return sample_search(policy, inst, cfg.width, cfg.seed);
  }
  NC_REQUIRE(false, "unreachable search strategy");
  return {};
}

double score_tour(StepPolicy& policy, const TspInstance& inst, const Tour& tour) {
  check_policy(policy, inst);
  require_valid_tour(tour, inst.n());
  const int n = policy.n();
  std::vector<uint8_t> visited(n, 0);
  double logp = 0;
  Tour prefix;
  if (policy.scores_start()) {
    std::vector<double> p = policy.step_probs({}, visited);
    logp += p[tour[0]] > 0 ? std::log(p[tour[0]]) : kNegInf;
  }
  prefix.push_back(tour[0]);
  visited[tour[0]] = 1;
  for (int t = 1; t < n - 1; ++t) {
    std::vector<double> p = policy.step_probs(prefix, visited);
    logp += p[tour[t]] > 0 ? std::log(p[tour[t]]) : kNegInf;
    prefix.push_back(tour[t]);
    visited[tour[t]] = 1;
  }
  return logp;  // the final node is forced by the permutation constraint
}

}  // namespace ncopt
