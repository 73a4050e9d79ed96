#include "ncopt/training.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>

#include <json.hpp>

#include "ncopt/search.hpp"
#include "ncopt/threading.hpp"

namespace ncopt {

using nlohmann::json;

Tour canonicalize_tour(const Tour& tour) {
  const int n = static_cast<int>(tour.size());
  require_valid_tour(tour, n);
  int zero = 0;
  while (tour[zero] != 0) ++zero;
  Tour out(n);
  for (int i = 0; i < n; ++i) out[i] = tour[(zero + i) % n];
  if (out[1] > out[n - 1]) {
    std::reverse(out.begin() + 1, out.end());
  }
  return out;
}

std::vector<int> tour_edge_labels(const SparseGraph& g, const Tour& tour) {
  const int n = g.n;
  require_valid_tour(tour, n);
  std::vector<int> next(n);
  for (int t = 0; t < n; ++t) next[tour[t]] = tour[(t + 1) % n];
  std::vector<int> labels(g.num_edges(), 0);
  for (int e = 0; e < g.num_edges(); ++e) {
    const int i = g.edge_src[e], j = g.edge_tgt[e];
    labels[e] = (next[i] == j || next[j] == i) ? 1 : 0;
  }
  return labels;
}

double paired_one_sided_p(const std::vector<double>& cand, const std::vector<double>& base) {
  NC_REQUIRE(cand.size() == base.size() && !cand.empty(), "paired test needs matched samples");
  const size_t n = cand.size();
  double mean = 0;
  for (size_t i = 0; i < n; ++i) mean += cand[i] - base[i];
  mean /= static_cast<double>(n);
  double var = 0;
  for (size_t i = 0; i < n; ++i) {
    const double d = cand[i] - base[i] - mean;
    var += d * d;
  }
  if (n < 2 || var == 0.0) return mean < 0 ? 0.0 : 0.5;  // degenerate: no spread
  var /= static_cast<double>(n - 1);
  const double t = mean / std::sqrt(var / static_cast<double>(n));
  return 0.5 * std::erfc(-t / std::sqrt(2.0));  // normal approximation of P(T <= t)
}

RolloutBaseline::RolloutBaseline(const Model& model, std::vector<TspInstance> holdout)
    : frozen_(model), holdout_(std::move(holdout)) {
  NC_REQUIRE(!holdout_.empty(), "rollout baseline needs a held-out set");
  holdout_lengths_ = greedy_lengths(frozen_, 1);
}

double RolloutBaseline::value(const TspInstance& inst) const {
  auto policy = frozen_.make_policy(inst);
  return greedy_search(*policy, inst).length;
}

std::vector<double> RolloutBaseline::greedy_lengths(const Model& m, int threads) const {
  std::vector<double> lengths(holdout_.size());
  parallel_for(0, static_cast<int64_t>(holdout_.size()), resolve_threads(threads),
               [&](int64_t i) {
                 auto policy = m.make_policy(holdout_[i]);
                 lengths[i] = greedy_search(*policy, holdout_[i]).length;
               });
  return lengths;
}

bool RolloutBaseline::maybe_update(const Model& candidate, int threads) {
  const std::vector<double> cand = greedy_lengths(candidate, threads);
  if (paired_one_sided_p(cand, holdout_lengths_) >= 0.05) return false;
  frozen_ = candidate;
  holdout_lengths_ = cand;
  return true;
}

double RolloutBaseline::holdout_mean() const {
  double s = 0;
  for (double v : holdout_lengths_) s += v;
  return s / static_cast<double>(holdout_lengths_.size());
}

TrainParadigm train_paradigm_from_string(const std::string& s) {
  if (s == "sl") return TrainParadigm::Sl;
  if (s == "rl") return TrainParadigm::Rl;
  NC_CHECK(false, "unknown training paradigm '" << s << "' (expected sl|rl)");
}

BaselineKind baseline_kind_from_string(const std::string& s) {
  if (s == "critic") return BaselineKind::Critic;
  if (s == "rollout") return BaselineKind::Rollout;
  if (s == "ema") return BaselineKind::Ema;
  NC_CHECK(false, "unknown baseline '" << s << "' (expected critic|rollout|ema)");
}

std::string to_string(TrainParadigm p) { return p == TrainParadigm::Sl ? "sl" : "rl"; }

std::string to_string(BaselineKind b) {
  switch (b) {
    case BaselineKind::Critic: return "critic";
    case BaselineKind::Rollout: return "rollout";
    case BaselineKind::Ema: return "ema";
  }
  return "?";
}

void TrainConfig::validate() const {
  NC_REQUIRE(epochs >= 1, "epochs must be >= 1");
  NC_REQUIRE(batch_size >= 1, "batch size must be >= 1");
  NC_REQUIRE(lr > 0, "learning rate must be positive");
  NC_REQUIRE(n_min >= 4 && n_max >= n_min, "instance size range invalid");
  NC_REQUIRE(samples_per_epoch >= 1, "samples_per_epoch must be >= 1");
  NC_REQUIRE(holdout_size >= 2, "rollout baseline holdout needs >= 2 instances");
  NC_REQUIRE(ema_beta >= 0 && ema_beta < 1, "ema decay must lie in [0, 1)");
}

TrainConfig train_config_from_json(const nlohmann::json& t) {
  TrainConfig tc;
  tc.paradigm = train_paradigm_from_string(t.value("paradigm", to_string(tc.paradigm)));
  tc.epochs = t.value("epochs", tc.epochs);
  tc.batch_size = t.value("batch_size", tc.batch_size);
  tc.lr = t.value("lr", tc.lr);
  tc.n_min = t.value("n_min", tc.n_min);
  tc.n_max = t.value("n_max", tc.n_max);
  tc.samples_per_epoch = t.value("samples_per_epoch", tc.samples_per_epoch);
  tc.baseline = baseline_kind_from_string(t.value("baseline", to_string(tc.baseline)));
  tc.ema_beta = t.value("ema_beta", tc.ema_beta);
  tc.holdout_size = t.value("holdout_size", tc.holdout_size);
  tc.nar_class_weights = t.value("nar_class_weights", tc.nar_class_weights);
  tc.seed = t.value("seed", tc.seed);
  tc.threads = t.value("threads", tc.threads);
  tc.run_label = t.value("run_label", tc.run_label);
  return tc;
}

namespace {

// Averages per-instance observed batch statistics and folds them into the
// running buffers: running <- (1 - momentum) * running + momentum * observed.
void fold_bn_stats(ParameterSet<float>& ps, const std::vector<BnBatchStats<float>>& obs) {
  if (obs.empty() || obs[0].stats.empty()) return;
  const double inv = 1.0 / static_cast<double>(obs.size());
  for (const auto& [prefix, first] : obs[0].stats) {
    Tensor<double> mean(first.first.rows, first.first.cols);
    Tensor<double> var(first.second.rows, first.second.cols);
    for (const BnBatchStats<float>& o : obs) {
      const auto& mv = o.stats.at(prefix);
      for (size_t i = 0; i < mean.data.size(); ++i) {
        mean.data[i] += mv.first.data[i] * inv;
        var.data[i] += mv.second.data[i] * inv;
      }
    }
    Tensor<float>& rm = ps.at(prefix + ".running_mean");
    Tensor<float>& rv = ps.at(prefix + ".running_var");
    for (size_t i = 0; i < rm.data.size(); ++i) {
      rm.data[i] = static_cast<float>((1.0 - kBnMomentum) * rm.data[i] + kBnMomentum * mean.data[i]);
      rv.data[i] = static_cast<float>((1.0 - kBnMomentum) * rv.data[i] + kBnMomentum * var.data[i]);
    }
  }
}

// Contiguous chunking so per-chunk partial sums reduce deterministically for
// a fixed thread count.
struct Chunks {
  int count;
  int total;
  int lo(int c) const { return static_cast<int>(int64_t{total} * c / count); }
  int hi(int c) const { return static_cast<int>(int64_t{total} * (c + 1) / count); }
};

Chunks make_chunks(int total, int threads) {
  return {std::max(1, std::min(resolve_threads(threads), total)), total};
}

struct SlBatchOut {
  double loss_sum = 0;
};

SlBatchOut sl_train_batch(Model& model, const TrainConfig& cfg,
                          const std::vector<const TspInstance*>& insts,
                          const std::vector<const Tour*>& tours, AdamState<float>& adam) {
  const int B = static_cast<int>(insts.size());
  const ModelConfig& mc = model.config();
  const Chunks ch = make_chunks(B, cfg.threads);
  std::vector<GradMap<float>> partial(ch.count);
  std::vector<double> losses(B);
  std::vector<BnBatchStats<float>> obs(B);

  parallel_for(0, ch.count, ch.count, [&](int64_t c) {
    for (int i = ch.lo(static_cast<int>(c)); i < ch.hi(static_cast<int>(c)); ++i) {
      Tape<float> tape;
      const SparseGraph g = model.build_graph(*insts[i]);
      ForwardOpts<float> opts;
      opts.training = true;
      opts.bn_obs = &obs[i];
      Var<float> loss =
          mc.decoder == DecoderKind::Ar
              ? sl_loss_ar(tape, model.params(), mc, *insts[i], g, *tours[i], opts)
              : sl_loss_nar(tape, model.params(), mc, *insts[i], g, *tours[i],
                            cfg.nar_class_weights, opts);
      losses[i] = static_cast<double>(loss.value().at(0, 0));
      accumulate_grads(partial[c], tape.backward(tape.scale(loss, 1.0f / B)));
    }
  });

  GradMap<float> grads;
  for (const GradMap<float>& p : partial) accumulate_grads(grads, p);
  fold_bn_stats(model.params(), obs);
  adam_step(model.params(), grads, adam, cfg.lr);

  SlBatchOut out;
  for (double l : losses) out.loss_sum += l;
  return out;
}

struct RlBaselines {
  EmaBaseline* ema = nullptr;
  RolloutBaseline* rollout = nullptr;
  ParameterSet<float>* critic = nullptr;
  AdamState<float>* critic_adam = nullptr;
};

struct RlBatchOut {
  std::vector<Tour> tours;
  std::vector<double> lengths;
  double mean_length = 0;
};

// One REINFORCE update: sample a rollout per instance, scale its
// log-probability by the advantage, and take an Adam step on the mean.
// Rollout rng streams are per-instance children so results do not depend on
// the worker layout.
RlBatchOut rl_train_batch(Model& model, const TrainConfig& cfg,
                          const std::vector<const TspInstance*>& insts,
                          const RlBaselines& bl, AdamState<float>& adam, const Rng& stream) {
  const int B = static_cast<int>(insts.size());
  const ModelConfig& mc = model.config();
  const Chunks ch = make_chunks(B, cfg.threads);

  // The EMA baseline value for the very first batch is that batch's own mean
  // length; a gradient-free pre-pass replays the identical rollouts to get it.
  if (bl.ema && !bl.ema->initialized) {
    double sum = 0;
    std::vector<double> lens(B);
    parallel_for(0, ch.count, ch.count, [&](int64_t c) {
      for (int i = ch.lo(static_cast<int>(c)); i < ch.hi(static_cast<int>(c)); ++i) {
        Tape<float> tape(/*grad_enabled=*/false);
        Rng r = stream.child(static_cast<uint64_t>(i));
        const SparseGraph g = model.build_graph(*insts[i]);
        ForwardOpts<float> opts;
        opts.training = true;
        lens[i] = rl_rollout(tape, model.params(), mc, *insts[i], g, r, opts).length;
      }
    });
    for (double l : lens) sum += l;
    bl.ema->update(sum / B);
  }

  std::vector<GradMap<float>> partial(ch.count), critic_partial(ch.count);
  std::vector<BnBatchStats<float>> obs(B), critic_obs(B);
  RlBatchOut out;
  out.tours.resize(B);
  out.lengths.resize(B);

  parallel_for(0, ch.count, ch.count, [&](int64_t c) {
    for (int i = ch.lo(static_cast<int>(c)); i < ch.hi(static_cast<int>(c)); ++i) {
      Rng r = stream.child(static_cast<uint64_t>(i));
      const SparseGraph g = model.build_graph(*insts[i]);
      Tape<float> tape;
      ForwardOpts<float> opts;
      opts.training = true;
      opts.bn_obs = &obs[i];
      RlRollout<float> roll = rl_rollout(tape, model.params(), mc, *insts[i], g, r, opts);
      out.tours[i] = roll.tour;
      out.lengths[i] = roll.length;

      double baseline = 0;
      if (bl.ema) {
        baseline = bl.ema->value;
      } else if (bl.rollout) {
        baseline = bl.rollout->value(*insts[i]);
      } else if (bl.critic) {
        Tape<float> ctape;
        ForwardOpts<float> copts;
        copts.training = true;
        copts.bn_obs = &critic_obs[i];
        Var<float> v = critic_value(ctape, *bl.critic, mc, *insts[i], g, copts);
        baseline = static_cast<double>(v.value().at(0, 0));
        Tensor<float> target(1, 1);
        target.at(0, 0) = static_cast<float>(roll.length);
        Var<float> diff = ctape.sub(v, ctape.constant(std::move(target)));
        Var<float> mse = ctape.mul(diff, diff);
        accumulate_grads(critic_partial[c], ctape.backward(ctape.scale(mse, 1.0f / B)));
      }
      const float adv = static_cast<float>((roll.length - baseline) / B);
      accumulate_grads(partial[c], tape.backward(tape.scale(roll.logprob, adv)));
    }
  });

  GradMap<float> grads;
  for (const GradMap<float>& p : partial) accumulate_grads(grads, p);
  fold_bn_stats(model.params(), obs);
  adam_step(model.params(), grads, adam, cfg.lr);

  if (bl.critic) {
    GradMap<float> cgrads;
    for (const GradMap<float>& p : critic_partial) accumulate_grads(cgrads, p);
    fold_bn_stats(*bl.critic, critic_obs);
    adam_step(*bl.critic, cgrads, *bl.critic_adam, cfg.lr);
  }

  for (double l : out.lengths) out.mean_length += l;
  out.mean_length /= B;
  if (bl.ema) bl.ema->update(out.mean_length);
  return out;
}

// Mean greedy optimality gap (%) against the reference tours of a labeled set.
double greedy_gap_percent(const Model& model, const Dataset& ds, int threads) {
  NC_REQUIRE(ds.labeled(), "evaluation set has no reference tours");
  std::vector<double> gaps(ds.size());
  parallel_for(0, static_cast<int64_t>(ds.size()), resolve_threads(threads), [&](int64_t i) {
    auto policy = model.make_policy(ds.instances[i]);
    const double pred = greedy_search(*policy, ds.instances[i]).length;
    const double ref = tour_length(ds.instances[i], ds.tours[i]);
    gaps[i] = 100.0 * (pred / ref - 1.0);
  });
  double s = 0;
  for (double gap : gaps) s += gap;
  return s / static_cast<double>(ds.size());
}

// Same-size batches: indices grouped by n, order shuffled per epoch.
std::vector<std::vector<int>> dataset_batches(const Dataset& ds, int batch_size, Rng& rng) {
  std::map<int, std::vector<int>> by_n;
  for (size_t i = 0; i < ds.size(); ++i) by_n[ds.instances[i].n()].push_back(static_cast<int>(i));
  std::vector<std::vector<int>> batches;
  for (auto& [n, idx] : by_n) {
    for (size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_int(static_cast<int>(i))]);
    for (size_t at = 0; at < idx.size(); at += batch_size) {
      const size_t end = std::min(idx.size(), at + batch_size);
      batches.emplace_back(idx.begin() + at, idx.begin() + end);
    }
  }
  for (size_t i = batches.size(); i > 1; --i)
    std::swap(batches[i - 1], batches[rng.uniform_int(static_cast<int>(i))]);
  return batches;
}

json stats_to_json(const EpochStats& s) {
  json gaps = json::object();
  for (const auto& [n, gap] : s.eval_gap) gaps[std::to_string(n)] = gap;
  return json{{"epoch", s.epoch},
              {"samples_seen", s.samples_seen},
              {"wall_time", s.wall_time_sec},
              {"train_loss", s.train_loss},
              {"eval_gap_per_size", gaps},
              {"baseline_updated", s.baseline_updated},
              {"checkpoint", s.checkpoint_path}};
}

}  // namespace

TrainResult train(Model& model, const TrainConfig& cfg, const Dataset& data,
                  const std::map<int, Dataset>& eval_sets) {
  cfg.validate();
  const bool supervised = cfg.paradigm == TrainParadigm::Sl;
  if (supervised) {
    NC_REQUIRE(data.size() > 0 && data.labeled(), "supervised training needs labeled data");
    data.validate();
  }

  TrainResult result;
  std::ofstream log;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    result.log_path = cfg.out_dir + "/" + cfg.run_label + "_log.jsonl";
    log.open(result.log_path, std::ios::app);
    NC_REQUIRE(log.good(), "cannot open training log " << result.log_path);
  }

  Dataset canon;  // supervised labels canonicalized once
  if (supervised) {
    canon.instances = data.instances;
    canon.tours.reserve(data.size());
    for (const Tour& t : data.tours) canon.tours.push_back(canonicalize_tour(t));
  }

  Rng root(cfg.seed);
  AdamState<float> adam;
  EmaBaseline ema{cfg.ema_beta};
  std::optional<RolloutBaseline> rollout;
  ParameterSet<float> critic;
  AdamState<float> critic_adam;
  if (!supervised) {
    if (cfg.baseline == BaselineKind::Rollout) {
      Rng hr = root.child(0xB5);
      std::vector<TspInstance> holdout;
      holdout.reserve(cfg.holdout_size);
      for (int i = 0; i < cfg.holdout_size; ++i)
        holdout.push_back(sample_instance(cfg.n_min + hr.uniform_int(cfg.n_max - cfg.n_min + 1), hr));
      rollout.emplace(model, std::move(holdout));
    } else if (cfg.baseline == BaselineKind::Critic) {
      critic = init_critic_params<float>(model.config(), root.child(0xC0).next());
    }
  }
  RlBaselines bl;
  if (!supervised) {
    if (cfg.baseline == BaselineKind::Ema) bl.ema = &ema;
    if (cfg.baseline == BaselineKind::Rollout) bl.rollout = &*rollout;
    if (cfg.baseline == BaselineKind::Critic) {
      bl.critic = &critic;
      bl.critic_adam = &critic_adam;
    }
  }

  const auto t0 = std::chrono::steady_clock::now();
  int64_t samples_seen = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng er = root.child(static_cast<uint64_t>(epoch));
    double loss_sum = 0;
    int64_t count = 0;

    if (supervised) {
      for (const std::vector<int>& batch : dataset_batches(canon, cfg.batch_size, er)) {
        std::vector<const TspInstance*> insts;
        std::vector<const Tour*> tours;
        for (int i : batch) {
          insts.push_back(&canon.instances[i]);
          tours.push_back(&canon.tours[i]);
        }
        loss_sum += sl_train_batch(model, cfg, insts, tours, adam).loss_sum;
        count += static_cast<int64_t>(batch.size());
      }
    } else {
      int remaining = cfg.samples_per_epoch;
      int batch_id = 0;
      while (remaining > 0) {
        const int B = std::min(cfg.batch_size, remaining);
        const int n = cfg.n_min + er.uniform_int(cfg.n_max - cfg.n_min + 1);
        const std::vector<TspInstance> insts = sample_instances(B, n, er);
        std::vector<const TspInstance*> ptrs;
        for (const TspInstance& inst : insts) ptrs.push_back(&inst);
        const RlBatchOut out =
            rl_train_batch(model, cfg, ptrs, bl, adam, er.child(0x520000 + batch_id));
        loss_sum += out.mean_length * B;
        count += B;
        remaining -= B;
        ++batch_id;
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    samples_seen += count;
    stats.samples_seen = samples_seen;
    stats.train_loss = loss_sum / static_cast<double>(count);
    for (const auto& [n, ds] : eval_sets) stats.eval_gap[n] = greedy_gap_percent(model, ds, cfg.threads);
    if (rollout) stats.baseline_updated = rollout->maybe_update(model, cfg.threads);
    stats.wall_time_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!cfg.out_dir.empty()) {
      stats.checkpoint_path =
          cfg.out_dir + "/" + cfg.run_label + "_epoch" + std::to_string(epoch) + ".bin";
      model.save(stats.checkpoint_path);
      log << stats_to_json(stats).dump() << "\n";
      log.flush();
    }
    result.epochs.push_back(std::move(stats));
  }
  return result;
}

ActiveSearchResult active_search(Model& model, const std::vector<TspInstance>& targets,
                                 const TrainConfig& cfg) {
  cfg.validate();
  NC_REQUIRE(!targets.empty(), "active search needs target instances");

  std::map<int, std::vector<int>> by_n;
  for (size_t i = 0; i < targets.size(); ++i)
    by_n[targets[i].n()].push_back(static_cast<int>(i));

  ActiveSearchResult res;
  res.best_tours.resize(targets.size());
  res.best_lengths.assign(targets.size(), std::numeric_limits<double>::infinity());
  auto consider = [&](int idx, const Tour& tour, double length) {
    if (length < res.best_lengths[idx]) {
      res.best_lengths[idx] = length;
      res.best_tours[idx] = tour;
    }
  };

  Rng root(cfg.seed);
  AdamState<float> adam;
  EmaBaseline ema{cfg.ema_beta};
  RlBaselines bl;
  bl.ema = &ema;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng er = root.child(static_cast<uint64_t>(epoch));
    int batch_id = 0;
    for (const auto& [n, idx] : by_n) {
      for (size_t at = 0; at < idx.size(); at += cfg.batch_size) {
        const size_t end = std::min(idx.size(), at + cfg.batch_size);
        std::vector<const TspInstance*> ptrs;
        for (size_t k = at; k < end; ++k) ptrs.push_back(&targets[idx[k]]);
        const RlBatchOut out =
            rl_train_batch(model, cfg, ptrs, bl, adam, er.child(0xA5000 + batch_id));
        for (size_t k = at; k < end; ++k)
          consider(idx[k], out.tours[k - at], out.lengths[k - at]);
        ++batch_id;
      }
    }
    for (size_t i = 0; i < targets.size(); ++i) {
      auto policy = model.make_policy(targets[i]);
      const SearchResult g = greedy_search(*policy, targets[i]);
      consider(static_cast<int>(i), g.tour, g.length);
    }
    res.best_by_epoch.push_back(res.best_lengths);
  }
  return res;
}

}  // namespace ncopt
