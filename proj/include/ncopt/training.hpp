#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ncopt/dataset.hpp"
#include "ncopt/model.hpp"
#include "ncopt/net.hpp"

namespace ncopt {

// Unique teacher-forcing target for a tour: rotated to start at node 0 and
// oriented so the second node has the lower index of the two neighbors of 0.
// Tour length is invariant under both transforms.
Tour canonicalize_tour(const Tour& tour);

// Per-edge labels for the heatmap head: 1 when the directed sparse edge joins
// consecutive tour nodes (either orientation), else 0.
std::vector<int> tour_edge_labels(const SparseGraph& g, const Tour& tour);

// ---- differentiable tour likelihoods ----

// Sum of log p over teacher-forced next-node steps. score_start additionally
// scores the start node through the placeholder step (supervised targets do;
// rollouts draw the start from outside the policy). The final step is forced
// and contributes log 1.
template <typename T>
Var<T> ar_tour_logprob(Tape<T>& tape, const ParameterSet<T>& ps, const ModelConfig& cfg,
                       const TspInstance& inst, const SparseGraph& g, const Tour& tour,
                       bool score_start, const ForwardOpts<T>& opts = {}) {
  require_valid_tour(tour, inst.n());
  const int n = inst.n();
  EncodeResult<T> enc = encode(tape, ps, cfg, inst, g, opts);
  Var<T> h_g = graph_embedding(tape, enc.h, cfg.graph_emb);
  ArState<T> st = ar_prepare(tape, ps, enc.h, h_g);

  std::vector<uint8_t> visited(n, 0);
  Var<T> total = tape.constant(Tensor<T>(1, 1));
  if (score_start) {
    ArStepOut<T> out = ar_step(tape, st, -1, -1, visited);
    total = tape.add(total, tape.slice_cols(out.log_probs, tour[0], 1));
  }
  visited[tour[0]] = 1;
  for (int t = 1; t < n - 1; ++t) {
    ArStepOut<T> out = ar_step(tape, st, tour[0], tour[t - 1], visited);
    total = tape.add(total, tape.slice_cols(out.log_probs, tour[t], 1));
    visited[tour[t]] = 1;
  }
  return total;
}

namespace detail {

// Log-probability of picking `edge` among `candidates` under the heatmap
// sampling rule: raw edge probabilities renormalized over the candidate set.
template <typename T>
Var<T> heatmap_step_logprob(Tape<T>& tape, const NarOut<T>& out, Var<T> log_probs,
                            const std::vector<int>& candidates, int edge) {
  Var<T> cand = tape.slice_cols(tape.gather_rows(out.probs, candidates), 1, 1);
  Var<T> log_total = tape.log(tape.reduce_sum(cand));
  Var<T> chosen = tape.slice_cols(tape.gather_rows(log_probs, {edge}), 1, 1);
  return tape.sub(chosen, log_total);
}

}  // namespace detail

// Sum of log-probabilities of a tour under the heatmap sampling policy.
// Steps whose target is not a sparse out-neighbor of the previous node are
// off-policy (a rollout would have taken the distance fallback) and are
// skipped; the first and last steps are never scored.
template <typename T>
Var<T> nar_tour_logprob(Tape<T>& tape, const ParameterSet<T>& ps, const ModelConfig& cfg,
                        const TspInstance& inst, const SparseGraph& g, const Tour& tour,
                        const ForwardOpts<T>& opts = {}) {
  require_valid_tour(tour, inst.n());
  const int n = inst.n();
  EncodeResult<T> enc = encode(tape, ps, cfg, inst, g, opts);
  Var<T> h_g = graph_embedding(tape, enc.h, cfg.graph_emb);
  NarOut<T> out = nar_edge_logits(tape, ps, enc.h, h_g, g);
  Var<T> log_probs = tape.log_softmax_rows(out.logits);

  std::vector<uint8_t> visited(n, 0);
  visited[tour[0]] = 1;
  Var<T> total = tape.constant(Tensor<T>(1, 1));
  for (int t = 1; t < n - 1; ++t) {
    const int last = tour[t - 1];
    std::vector<int> candidates;
    int chosen = -1;
    for (int k = g.row_offset[last]; k < g.row_offset[last + 1]; ++k) {
      if (visited[g.edge_tgt[k]]) continue;
      if (g.edge_tgt[k] == tour[t]) chosen = k;
      candidates.push_back(k);
    }
    if (chosen >= 0)
      total = tape.add(total, detail::heatmap_step_logprob(tape, out, log_probs, candidates, chosen));
    visited[tour[t]] = 1;
  }
  return total;
}

// ---- supervised losses ----

// Teacher-forced cross-entropy over next-node steps, start included.
template <typename T>
Var<T> sl_loss_ar(Tape<T>& tape, const ParameterSet<T>& ps, const ModelConfig& cfg,
                  const TspInstance& inst, const SparseGraph& g, const Tour& tour,
                  const ForwardOpts<T>& opts = {}) {
  return tape.scale(ar_tour_logprob(tape, ps, cfg, inst, g, tour, /*score_start=*/true, opts),
                    T(-1));
}

// Mean per-edge binary cross-entropy against tour-membership labels. With
// class_weighted, each class is reweighted by m / (2 * class count) so the
// sparse in-tour class is not swamped.
template <typename T>
Var<T> sl_loss_nar(Tape<T>& tape, const ParameterSet<T>& ps, const ModelConfig& cfg,
                   const TspInstance& inst, const SparseGraph& g, const Tour& tour,
                   bool class_weighted, const ForwardOpts<T>& opts = {}) {
  require_valid_tour(tour, inst.n());
  EncodeResult<T> enc = encode(tape, ps, cfg, inst, g, opts);
  Var<T> h_g = graph_embedding(tape, enc.h, cfg.graph_emb);
  NarOut<T> out = nar_edge_logits(tape, ps, enc.h, h_g, g);
  Var<T> log_probs = tape.log_softmax_rows(out.logits);

  const std::vector<int> labels = tour_edge_labels(g, tour);
  const int m = g.num_edges();
  int positives = 0;
  for (int y : labels) positives += y;
  double w[2] = {1.0, 1.0};
  if (class_weighted) {
    w[0] = positives == m ? 0.0 : m / (2.0 * (m - positives));
    w[1] = positives == 0 ? 0.0 : m / (2.0 * positives);
  }
  Tensor<T> pick(m, 2);
  for (int e = 0; e < m; ++e) pick.at(e, labels[e]) = static_cast<T>(w[labels[e]] / m);
  return tape.scale(tape.reduce_sum(tape.mul(log_probs, tape.constant(std::move(pick)))), T(-1));
}

// ---- on-policy rollout with an attached log-probability ----

template <typename T>
struct RlRollout {
  Tour tour;
  double length = 0;
  Var<T> logprob;       // sum over policy-scored steps, on the caller's tape
  int scored_steps = 0;
  int fallbacks = 0;
};

// Samples one tour from the current policy on a gradient tape. The start node
// is drawn uniformly (not from the policy) and the forced final step is not
// scored, so logprob covers exactly the decisions the policy made. Heatmap
// decoding falls back to the nearest unvisited node when stuck; those steps
// are off-policy and unscored.
template <typename T>
RlRollout<T> rl_rollout(Tape<T>& tape, const ParameterSet<T>& ps, const ModelConfig& cfg,
                        const TspInstance& inst, const SparseGraph& g, Rng& rng,
                        const ForwardOpts<T>& opts = {}) {
  const int n = inst.n();
  EncodeResult<T> enc = encode(tape, ps, cfg, inst, g, opts);
  Var<T> h_g = graph_embedding(tape, enc.h, cfg.graph_emb);

  RlRollout<T> roll;
  roll.logprob = tape.constant(Tensor<T>(1, 1));
  std::vector<uint8_t> visited(n, 0);
  const int start = rng.uniform_int(n);
  roll.tour.push_back(start);
  visited[start] = 1;

  auto nearest_unvisited = [&](int from) {
    int best = -1;
    double best_d = 0;
    for (int j = 0; j < n; ++j) {
      if (visited[j]) continue;
      const double d = edge_dist(inst, from, j);
      if (best < 0 || d < best_d) {
        best = j;
        best_d = d;
      }
    }
    return best;
  };

  if (cfg.decoder == DecoderKind::Ar) {
    ArState<T> st = ar_prepare(tape, ps, enc.h, h_g);
    for (int t = 1; t < n - 1; ++t) {
      ArStepOut<T> out = ar_step(tape, st, start, roll.tour.back(), visited);
      const Tensor<T>& p = out.probs.value();
      std::vector<double> weights(p.data.begin(), p.data.end());
      const int j = rng.sample_weighted(weights);
      roll.logprob = tape.add(roll.logprob, tape.slice_cols(out.log_probs, j, 1));
      ++roll.scored_steps;
      roll.tour.push_back(j);
      visited[j] = 1;
    }
  } else {
    NarOut<T> out = nar_edge_logits(tape, ps, enc.h, h_g, g);
    Var<T> log_probs = tape.log_softmax_rows(out.logits);
    for (int t = 1; t < n - 1; ++t) {
      const int last = roll.tour.back();
      std::vector<int> candidates;
      std::vector<double> weights;
      for (int k = g.row_offset[last]; k < g.row_offset[last + 1]; ++k) {
        if (visited[g.edge_tgt[k]]) continue;
        candidates.push_back(k);
        weights.push_back(static_cast<double>(out.probs.value().at(k, 1)));
      }
      double total = 0;
      for (double wgt : weights) total += wgt;
      int j;
      if (candidates.empty() || total <= 0.0) {
        j = nearest_unvisited(last);
        ++roll.fallbacks;
      } else {
        const int pick = rng.sample_weighted(weights);
        j = g.edge_tgt[candidates[pick]];
        roll.logprob = tape.add(
            roll.logprob,
            detail::heatmap_step_logprob(tape, out, log_probs, candidates, candidates[pick]));
        ++roll.scored_steps;
      }
      roll.tour.push_back(j);
      visited[j] = 1;
    }
  }
  roll.tour.push_back(nearest_unvisited(roll.tour.back()));  // exactly one node left
  require_valid_tour(roll.tour, n);
  roll.length = tour_length(inst, roll.tour);
  return roll;
}

// Squared error of the critic's value prediction against an observed length.
template <typename T>
Var<T> critic_mse(Tape<T>& tape, const ParameterSet<T>& ps, const ModelConfig& cfg,
                  const TspInstance& inst, const SparseGraph& g, double target,
                  const ForwardOpts<T>& opts = {}) {
  Var<T> v = critic_value(tape, ps, cfg, inst, g, opts);
  Tensor<T> t(1, 1);
  t.at(0, 0) = static_cast<T>(target);
  Var<T> diff = tape.sub(v, tape.constant(std::move(t)));
  return tape.mul(diff, diff);
}

// ---- optimizer ----

template <typename T>
struct AdamState {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int64_t step = 0;
  std::map<std::string, Tensor<double>> m, v;
};

// One Adam update over the trainable entries present in grads. Moments are
// kept in double so float training stays stable.
template <typename T>
void adam_step(ParameterSet<T>& ps, const GradMap<T>& grads, AdamState<T>& state, double lr) {
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (const auto& [name, g] : grads) {
    if (!ps.trainable(name)) continue;
    Tensor<T>& p = ps.at(name);
    NC_REQUIRE(p.rows == g.rows && p.cols == g.cols,
               "gradient shape mismatch for " << name);
    auto [mit, fresh] = state.m.try_emplace(name, g.rows, g.cols);
    if (fresh) state.v.try_emplace(name, g.rows, g.cols);
    Tensor<double>& m = mit->second;
    Tensor<double>& v = state.v.at(name);
    for (size_t i = 0; i < p.data.size(); ++i) {
      const double gi = static_cast<double>(g.data[i]);
      m.data[i] = state.beta1 * m.data[i] + (1.0 - state.beta1) * gi;
      v.data[i] = state.beta2 * v.data[i] + (1.0 - state.beta2) * gi * gi;
      const double update = (m.data[i] / c1) / (std::sqrt(v.data[i] / c2) + state.eps);
      p.data[i] = static_cast<T>(static_cast<double>(p.data[i]) - lr * update);
    }
  }
}

template <typename T>
void accumulate_grads(GradMap<T>& into, const GradMap<T>& from) {
  for (const auto& [name, g] : from) {
    auto [it, fresh] = into.try_emplace(name, g.rows, g.cols);
    NC_REQUIRE(it->second.rows == g.rows && it->second.cols == g.cols,
               "accumulating mismatched gradient shapes for " << name);
    for (size_t i = 0; i < g.data.size(); ++i) it->second.data[i] += g.data[i];
  }
}

// ---- baselines ----

// b <- beta * b + (1 - beta) * mean; seeded with the first observed mean.
struct EmaBaseline {
  double beta = 0.99;
  bool initialized = false;
  double value = 0;

  void update(double batch_mean) {
    value = initialized ? beta * value + (1.0 - beta) * batch_mean : batch_mean;
    initialized = true;
  }
};

// One-sided paired p-value (normal approximation) for mean(cand) < mean(base).
// Identical samples give 0.5.
double paired_one_sided_p(const std::vector<double>& cand, const std::vector<double>& base);

// Frozen greedy-rollout baseline. The frozen parameters only change when the
// candidate beats them on the fixed held-out set at p < 0.05.
class RolloutBaseline {
 public:
  RolloutBaseline(const Model& model, std::vector<TspInstance> holdout);

  double value(const TspInstance& inst) const;  // greedy tour length
  // Replaces the frozen policy when the candidate wins the paired test.
  bool maybe_update(const Model& candidate, int threads);

  double holdout_mean() const;
  const Model& frozen() const { return frozen_; }

 private:
  std::vector<double> greedy_lengths(const Model& m, int threads) const;

  Model frozen_;
  std::vector<TspInstance> holdout_;
  std::vector<double> holdout_lengths_;
};

// ---- training driver ----

enum class TrainParadigm { Sl, Rl };
enum class BaselineKind { Critic, Rollout, Ema };

TrainParadigm train_paradigm_from_string(const std::string& s);
BaselineKind baseline_kind_from_string(const std::string& s);
std::string to_string(TrainParadigm p);
std::string to_string(BaselineKind b);

inline constexpr double kTrainLr = 1e-4;
inline constexpr double kFinetuneLr = 1e-5;

struct TrainConfig {
  TrainParadigm paradigm = TrainParadigm::Rl;
  int epochs = 10;
  int batch_size = 128;
  double lr = kTrainLr;
  int n_min = 20, n_max = 20;     // RL instance sizes; each batch uses one n
  int samples_per_epoch = 10000;  // RL; supervised runs take the dataset size
  BaselineKind baseline = BaselineKind::Rollout;
  double ema_beta = 0.99;
  int holdout_size = 1000;  // rollout-baseline held-out instances
  bool nar_class_weights = true;
  uint64_t seed = 0;
  int threads = 1;
  std::string out_dir;  // empty: no checkpoint or log files
  std::string run_label = "train";

  void validate() const;
};

// Fills a TrainConfig from a JSON object; absent keys keep their defaults.
TrainConfig train_config_from_json(const nlohmann::json& t);

struct EpochStats {
  int epoch = 0;
  int64_t samples_seen = 0;
  double wall_time_sec = 0;
  double train_loss = 0;  // supervised: mean loss; RL: mean sampled tour length
  std::map<int, double> eval_gap;
  bool baseline_updated = false;
  std::string checkpoint_path;
};

struct TrainResult {
  std::vector<EpochStats> epochs;
  std::string log_path;
};

// Supervised runs iterate `data` (labels required); RL runs ignore it and
// sample fresh instances each epoch. eval_sets are labeled reference sets
// scored by greedy decoding after every epoch.
TrainResult train(Model& model, const TrainConfig& cfg, const Dataset& data,
                  const std::map<int, Dataset>& eval_sets = {});

// RL with the EMA baseline on exactly the given instances, tracking the best
// tour seen per instance (sampled rollouts plus one greedy pass per epoch).
struct ActiveSearchResult {
  std::vector<Tour> best_tours;
  std::vector<double> best_lengths;
  std::vector<std::vector<double>> best_by_epoch;  // [epoch][instance]
};

ActiveSearchResult active_search(Model& model, const std::vector<TspInstance>& targets,
                                 const TrainConfig& cfg);

}  // namespace ncopt
