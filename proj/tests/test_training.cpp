#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ncopt/grad_check.hpp"
#include "ncopt/oracles.hpp"
#include "ncopt/search.hpp"
#include "ncopt/training.hpp"

using namespace ncopt;

namespace {

template <typename T>
Var<T> weighted(Tape<T>& t, Var<T> out, uint64_t salt) {
  Rng rng(salt);
  Tensor<T> w(out.rows(), out.cols());
  for (auto& v : w.data) v = static_cast<T>(rng.uniform(-1.0, 1.0));
  return t.reduce_sum(t.mul(out, t.constant(std::move(w))));
}

std::map<std::string, Tensor<double>> trainable_values(const ParameterSet<double>& ps) {
  std::map<std::string, Tensor<double>> values;
  for (const auto& name : ps.names())
    if (ps.trainable(name)) values[name] = ps.at(name);
  return values;
}

void check_fragment(const std::string& label, const ParameterSet<double>& base,
                    const std::function<Var<double>(Tape<double>&, const ParameterSet<double>&)>&
                        forward,
                    int seeds) {
  for (int s = 0; s < seeds; ++s) {
    ParameterSet<double> ps = base;
    Rng rng(9000 + static_cast<uint64_t>(s));
    for (const auto& name : ps.names()) {
      if (!ps.trainable(name)) continue;
      for (auto& v : ps.at(name).data) v += rng.uniform(-0.05, 0.05);
    }
    GradCheckFn build = [&](Tape<double>& t,
                            const std::map<std::string, Tensor<double>>& v) -> Var<double> {
      ParameterSet<double> local = ps;
      for (const auto& [k, val] : v) local.at(k) = val;
      return forward(t, local);
    };
    GradCheckReport rep = grad_check(build, trainable_values(ps), 1e-5);
    INFO(label << " seed " << s << " worst leaf " << rep.worst_leaf << "[" << rep.worst_index
               << "] analytic " << rep.analytic << " numeric " << rep.numeric);
    CHECK(rep.max_rel_err < 1e-4);
  }
}

ModelConfig small_cfg(DecoderKind dec, EncoderVariant variant = EncoderVariant::Gnn) {
  ModelConfig cfg = ModelConfig::defaults(dec);
  cfg.variant = variant;
  cfg.hidden_dim = 16;
  cfg.layers = 2;
  if (variant == EncoderVariant::Transformer) cfg.heads = 4;
  return cfg;
}

Tour shuffled_tour(int n, uint64_t seed) {
  Tour t(n);
  for (int i = 0; i < n; ++i) t[i] = i;
  Rng rng(seed);
  for (int i = n; i > 1; --i) std::swap(t[i - 1], t[rng.uniform_int(i)]);
  return t;
}

bool grads_all_zero(const GradMap<float>& grads) {
  for (const auto& [name, g] : grads)
    for (float v : g.data)
      if (v != 0.0f) return false;
  return true;
}

}  // namespace

TEST_CASE("tour canonicalization: start 0, fixed orientation, length preserved") {
  Rng rng(5);
  TspInstance inst = sample_instance(7, rng);
  const Tour base = shuffled_tour(7, 99);
  const Tour canon = canonicalize_tour(base);
  CHECK(canon[0] == 0);
  CHECK(canon[1] < canon[6]);
  CHECK(tour_length(inst, canon) == doctest::Approx(tour_length(inst, base)).epsilon(1e-12));
  CHECK(canonicalize_tour(canon) == canon);

  // every rotation and reflection of the same cycle maps to one target
  Tour rotated = base;
  for (int r = 0; r < 7; ++r) {
    std::rotate(rotated.begin(), rotated.begin() + 1, rotated.end());
    CHECK(canonicalize_tour(rotated) == canon);
    Tour reflected(rotated.rbegin(), rotated.rend());
    CHECK(canonicalize_tour(reflected) == canon);
  }

  CHECK(canonicalize_tour(Tour{2, 1, 0, 3, 4}) == Tour{0, 1, 2, 4, 3});
}

TEST_CASE("edge labels mark tour adjacency in both directions") {
  Rng rng(6);
  TspInstance inst = sample_instance(5, rng);
  SparseGraph g = sparsify(inst, GraphSpec::full());
  const Tour tour{0, 2, 4, 1, 3};
  const std::vector<int> labels = tour_edge_labels(g, tour);
  int positives = 0;
  for (int e = 0; e < g.num_edges(); ++e) {
    const int i = g.edge_src[e], j = g.edge_tgt[e];
    bool adjacent = false;
    for (int t = 0; t < 5; ++t) {
      const int a = tour[t], b = tour[(t + 1) % 5];
      adjacent = adjacent || (a == i && b == j) || (a == j && b == i);
    }
    CHECK(labels[e] == (adjacent ? 1 : 0));
    positives += labels[e];
  }
  CHECK(positives == 10);  // 5 undirected tour edges, both directions in a full graph
}

TEST_CASE("teacher-forced likelihood of a uniform policy is ln(n!)") {
  ModelConfig cfg = small_cfg(DecoderKind::Ar);
  ParameterSet<double> ps = init_model_params<float>(cfg, 3).cast<double>();
  ps.fill("dec.wq", 0.0);  // every step scores all nodes equally
  Rng rng(7);
  TspInstance inst = sample_instance(8, rng);
  SparseGraph g = sparsify(inst, cfg.graph);
  Tape<double> tape(false);
  Var<double> loss = sl_loss_ar(tape, ps, cfg, inst, g, canonicalize_tour(shuffled_tour(8, 1)));
  double expected = 0;
  for (int k = 2; k <= 8; ++k) expected += std::log(static_cast<double>(k));
  CHECK(loss.value().at(0, 0) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("edge cross-entropy of an uninformative heatmap is ln 2 in both weightings") {
  ModelConfig cfg = small_cfg(DecoderKind::Nar);
  ParameterSet<double> ps = init_model_params<float>(cfg, 4).cast<double>();
  ps.fill("dec.w2", 0.0);  // zero logits, probability 1/2 per class
  Rng rng(8);
  TspInstance inst = sample_instance(7, rng);
  SparseGraph g = sparsify(inst, cfg.graph);
  const Tour tour = canonicalize_tour(shuffled_tour(7, 2));
  for (bool weighted_mode : {false, true}) {
    Tape<double> tape(false);
    Var<double> loss = sl_loss_nar(tape, ps, cfg, inst, g, tour, weighted_mode);
    CHECK(loss.value().at(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
}

TEST_CASE("supervised loss decreases over 50 steps for every encoder variant") {
  Rng rng(9);
  std::vector<TspInstance> insts;
  std::vector<Tour> tours;
  for (int i = 0; i < 4; ++i) {
    insts.push_back(sample_instance(8, rng));
    tours.push_back(canonicalize_tour(held_karp(insts.back()).tour));
  }
  for (EncoderVariant variant : {EncoderVariant::Gnn, EncoderVariant::Mlp,
                                 EncoderVariant::Transformer, EncoderVariant::Rgnn}) {
    ModelConfig cfg = small_cfg(DecoderKind::Ar, variant);
    ParameterSet<float> ps = init_model_params<float>(cfg, 11);
    AdamState<float> adam;
    double first = 0, last = 0;
    for (int step = 0; step < 50; ++step) {
      GradMap<float> grads;
      double loss_sum = 0;
      for (size_t i = 0; i < insts.size(); ++i) {
        Tape<float> tape;
        SparseGraph g = sparsify(insts[i], cfg.graph);
        ForwardOpts<float> opts;
        opts.training = true;
        Var<float> loss = sl_loss_ar(tape, ps, cfg, insts[i], g, tours[i], opts);
        loss_sum += loss.value().at(0, 0);
        accumulate_grads(grads, tape.backward(tape.scale(loss, 0.25f)));
      }
      if (step == 0) first = loss_sum;
      if (step == 49) last = loss_sum;
      adam_step(ps, grads, adam, 1e-3);
    }
    INFO(to_string(variant) << ": " << first << " -> " << last);
    CHECK(last < first);
  }
}

TEST_CASE("edge cross-entropy decreases over 50 steps") {
  Rng rng(10);
  std::vector<TspInstance> insts;
  std::vector<Tour> tours;
  for (int i = 0; i < 4; ++i) {
    insts.push_back(sample_instance(8, rng));
    tours.push_back(canonicalize_tour(held_karp(insts.back()).tour));
  }
  ModelConfig cfg = small_cfg(DecoderKind::Nar);
  ParameterSet<float> ps = init_model_params<float>(cfg, 12);
  AdamState<float> adam;
  double first = 0, last = 0;
  for (int step = 0; step < 50; ++step) {
    GradMap<float> grads;
    double loss_sum = 0;
    for (size_t i = 0; i < insts.size(); ++i) {
      Tape<float> tape;
      SparseGraph g = sparsify(insts[i], cfg.graph);
      ForwardOpts<float> opts;
      opts.training = true;
      Var<float> loss = sl_loss_nar(tape, ps, cfg, insts[i], g, tours[i], true, opts);
      loss_sum += loss.value().at(0, 0);
      accumulate_grads(grads, tape.backward(tape.scale(loss, 0.25f)));
    }
    if (step == 0) first = loss_sum;
    if (step == 49) last = loss_sum;
    adam_step(ps, grads, adam, 1e-3);
  }
  CHECK(last < first);
}

TEST_CASE("sampled rollout and teacher-forced likelihood agree exactly") {
  Rng rng(13);
  TspInstance inst = sample_instance(9, rng);

  SUBCASE("next-node decoder") {
    ModelConfig cfg = small_cfg(DecoderKind::Ar);
    ParameterSet<float> ps = init_model_params<float>(cfg, 21);
    SparseGraph g = sparsify(inst, cfg.graph);
    ForwardOpts<float> opts;
    opts.training = true;
    Tape<float> t1;
    Rng roll_rng(77);
    RlRollout<float> roll = rl_rollout(t1, ps, cfg, inst, g, roll_rng, opts);
    CHECK(roll.scored_steps == 7);
    CHECK(roll.fallbacks == 0);

    Tape<float> t2;
    Var<float> tf = ar_tour_logprob(t2, ps, cfg, inst, g, roll.tour, false, opts);
    CHECK(tf.value().at(0, 0) == roll.logprob.value().at(0, 0));

    GradMap<float> g1 = t1.backward(t1.scale(roll.logprob, static_cast<float>(roll.length)));
    GradMap<float> g2 = t2.backward(t2.scale(tf, static_cast<float>(roll.length)));
    REQUIRE(g1.size() == g2.size());
    for (const auto& [name, grad] : g1) {
      const Tensor<float>& other = g2.at(name);
      for (size_t i = 0; i < grad.data.size(); ++i) CHECK(grad.data[i] == other.data[i]);
    }
  }

  SUBCASE("heatmap decoder with fallback steps skipped") {
    ModelConfig cfg = small_cfg(DecoderKind::Nar);
    cfg.graph = GraphSpec::fixed_degree(2);
    ParameterSet<float> ps = init_model_params<float>(cfg, 22);
    SparseGraph g = sparsify(inst, cfg.graph);
    ForwardOpts<float> opts;
    opts.training = true;
    int fallbacks_seen = 0;
    for (uint64_t seed = 0; seed < 10; ++seed) {
      Tape<float> t1;
      Rng roll_rng(seed);
      RlRollout<float> roll = rl_rollout(t1, ps, cfg, inst, g, roll_rng, opts);
      fallbacks_seen += roll.fallbacks;
      CHECK(roll.scored_steps + roll.fallbacks == 7);

      Tape<float> t2;
      Var<float> tf = nar_tour_logprob(t2, ps, cfg, inst, g, roll.tour, opts);
      CHECK(tf.value().at(0, 0) == roll.logprob.value().at(0, 0));

      GradMap<float> g1 = t1.backward(t1.scale(roll.logprob, 2.0f));
      GradMap<float> g2 = t2.backward(t2.scale(tf, 2.0f));
      for (const auto& [name, grad] : g1) {
        const Tensor<float>& other = g2.at(name);
        for (size_t i = 0; i < grad.data.size(); ++i) CHECK(grad.data[i] == other.data[i]);
      }
    }
    CHECK(fallbacks_seen > 0);  // degree-2 decoding does hit dead ends
  }
}

TEST_CASE("zero advantage produces zero gradient and no parameter movement") {
  Rng rng(14);
  TspInstance inst = sample_instance(7, rng);
  ModelConfig cfg = small_cfg(DecoderKind::Ar);
  ParameterSet<float> ps = init_model_params<float>(cfg, 31);
  SparseGraph g = sparsify(inst, cfg.graph);
  ForwardOpts<float> opts;
  opts.training = true;
  Tape<float> tape;
  Rng roll_rng(5);
  RlRollout<float> roll = rl_rollout(tape, ps, cfg, inst, g, roll_rng, opts);
  GradMap<float> grads = tape.backward(tape.scale(roll.logprob, 0.0f));
  CHECK(grads_all_zero(grads));

  ParameterSet<float> before = ps;
  AdamState<float> adam;
  adam_step(ps, grads, adam, 1e-3);
  adam_step(ps, grads, adam, 1e-3);
  for (const auto& name : ps.names())
    for (size_t i = 0; i < ps.at(name).data.size(); ++i)
      CHECK(ps.at(name).data[i] == before.at(name).data[i]);
}

TEST_CASE("first optimizer step moves against the gradient sign at rate lr") {
  ParameterSet<float> ps;
  ps.add("w", 2, 2);
  ps.at("w").data = {1.0f, -2.0f, 3.0f, -4.0f};
  GradMap<float> grads;
  grads["w"] = Tensor<float>(2, 2);
  grads["w"].data = {0.5f, -0.25f, 1.5f, 0.0f};
  AdamState<float> adam;
  ParameterSet<float> before = ps;
  const double lr = 1e-2;
  adam_step(ps, grads, adam, lr);
  for (int i = 0; i < 4; ++i) {
    const double delta = ps.at("w").data[i] - before.at("w").data[i];
    const double g = grads.at("w").data[i];
    if (g == 0.0)
      CHECK(delta == 0.0);
    else
      CHECK(delta == doctest::Approx(-lr * (g > 0 ? 1.0 : -1.0)).epsilon(1e-4));
  }

  // non-trainable entries are never touched
  ParameterSet<float> frozen;
  frozen.add("buf", 1, 2, /*trainable=*/false);
  GradMap<float> bogus;
  bogus["buf"] = Tensor<float>(1, 2);
  bogus["buf"].data = {1.0f, 1.0f};
  AdamState<float> st;
  adam_step(frozen, bogus, st, 1.0);
  CHECK(frozen.at("buf").data[0] == 0.0f);
  CHECK(frozen.at("buf").data[1] == 0.0f);
}

TEST_CASE("moving-average baseline: seeding, fixed point, zero decay") {
  EmaBaseline ema{0.99};
  ema.update(12.5);
  CHECK(ema.value == 12.5);  // first update adopts the batch mean exactly
  ema.update(12.5);
  CHECK(ema.value == doctest::Approx(12.5).epsilon(1e-12));

  EmaBaseline conv{0.9};
  conv.update(50.0);
  for (int i = 0; i < 200; ++i) conv.update(3.0);
  CHECK(conv.value == doctest::Approx(3.0).epsilon(1e-8));

  EmaBaseline zero{0.0};
  zero.update(1.0);
  zero.update(7.0);
  CHECK(zero.value == 7.0);
}

TEST_CASE("paired one-sided test: ties give 0.5, clear wins give small p") {
  std::vector<double> base(100), better(100), worse(100);
  Rng rng(15);
  for (int i = 0; i < 100; ++i) {
    base[i] = 10.0 + rng.uniform(-0.1, 0.1);
    better[i] = base[i] - 0.5 + rng.uniform(-0.01, 0.01);
    worse[i] = base[i] + 0.5 + rng.uniform(-0.01, 0.01);
  }
  CHECK(paired_one_sided_p(base, base) == 0.5);
  CHECK(paired_one_sided_p(better, base) < 1e-6);
  CHECK(paired_one_sided_p(worse, base) > 1.0 - 1e-6);
}

TEST_CASE("rollout baseline: frozen greedy values and guarded replacement") {
  Rng rng(16);
  ModelConfig cfg = small_cfg(DecoderKind::Ar);
  cfg.layers = 1;
  Model model(cfg, 41);
  std::vector<TspInstance> holdout = sample_instances(30, 8, rng);
  RolloutBaseline rb(model, holdout);

  TspInstance probe = sample_instance(8, rng);
  auto policy = model.make_policy(probe);
  CHECK(rb.value(probe) == doctest::Approx(greedy_search(*policy, probe).length).epsilon(1e-12));

  CHECK_FALSE(rb.maybe_update(model, 1));  // identical candidate: p = 0.5

  // acceptance implies a strictly lower held-out mean
  for (uint64_t seed : {7ULL, 8ULL, 9ULL}) {
    const double before = rb.holdout_mean();
    Model cand(cfg, seed);
    const bool accepted = rb.maybe_update(cand, 1);
    if (accepted) {
      CHECK(rb.holdout_mean() < before);
    } else {
      CHECK(rb.holdout_mean() == before);
    }
  }
}

TEST_CASE("critic value head: bias fallback, zero error, and fitting") {
  Rng rng(17);
  ModelConfig cfg = small_cfg(DecoderKind::Ar);
  ParameterSet<float> critic = init_critic_params<float>(cfg, 51);
  TspInstance inst = sample_instance(8, rng);
  SparseGraph g = sparsify(inst, cfg.graph);

  ParameterSet<float> biased = critic;
  biased.fill("critic.w1", 0.0f);
  biased.fill("critic.b1", 0.0f);
  biased.at("critic.b2").at(0, 0) = 3.25f;
  Tape<float> t0(false);
  CHECK(critic_value(t0, biased, cfg, inst, g).value().at(0, 0) == 3.25f);

  Tape<float> t1(false);
  const double v = critic_value(t1, critic, cfg, inst, g).value().at(0, 0);
  Tape<float> t2(false);
  CHECK(critic_mse(t2, critic, cfg, inst, g, v).value().at(0, 0) == 0.0f);

  std::vector<TspInstance> batch = sample_instances(4, 8, rng);
  std::vector<double> targets;
  for (const TspInstance& b : batch) targets.push_back(held_karp(b).length);
  AdamState<float> adam;
  double first = 0, last = 0;
  for (int step = 0; step < 100; ++step) {
    GradMap<float> grads;
    double loss_sum = 0;
    for (size_t i = 0; i < batch.size(); ++i) {
      Tape<float> tape;
      ForwardOpts<float> opts;
      opts.training = true;
      SparseGraph gi = sparsify(batch[i], cfg.graph);
      Var<float> mse = critic_mse(tape, critic, cfg, batch[i], gi, targets[i], opts);
      loss_sum += mse.value().at(0, 0);
      accumulate_grads(grads, tape.backward(tape.scale(mse, 0.25f)));
    }
    if (step == 0) first = loss_sum;
    if (step == 99) last = loss_sum;
    adam_step(critic, grads, adam, 1e-3);
  }
  CHECK(last < first);
  CHECK(last < 0.25 * first);  // 100 steps shrink the error substantially
}

TEST_CASE("supervised training: exact sample accounting, logs, checkpoints, running stats") {
  Rng rng(18);
  Dataset data;
  for (int i = 0; i < 10; ++i) {
    data.instances.push_back(sample_instance(7, rng));
    data.tours.push_back(held_karp(data.instances.back()).tour);
  }
  ModelConfig mc = small_cfg(DecoderKind::Ar);
  mc.layers = 1;
  mc.norm = NormKind::BatchNormLearned;
  Model model(mc, 61);
  const Tensor<float> rm_before = model.params().at("enc.l0.norm_h.running_mean");

  const std::string out = "/tmp/ncopt_test_train_sl";
  std::filesystem::remove_all(out);
  TrainConfig cfg;
  cfg.paradigm = TrainParadigm::Sl;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.lr = 1e-3;
  cfg.seed = 5;
  cfg.out_dir = out;
  cfg.run_label = "sl_smoke";
  std::map<int, Dataset> eval_sets;
  eval_sets[7] = data;

  TrainResult res = train(model, cfg, data, eval_sets);
  REQUIRE(res.epochs.size() == 2);
  CHECK(res.epochs[0].samples_seen == 10);
  CHECK(res.epochs[1].samples_seen == 20);
  CHECK(std::isfinite(res.epochs[0].train_loss));
  CHECK(res.epochs[1].eval_gap.count(7) == 1);
  CHECK(res.epochs[1].eval_gap.at(7) > -1e-9);
  CHECK(res.epochs[0].wall_time_sec <= res.epochs[1].wall_time_sec);

  // running statistics moved away from their init after training-mode batches
  const Tensor<float>& rm_after = model.params().at("enc.l0.norm_h.running_mean");
  bool moved = false;
  for (size_t i = 0; i < rm_after.data.size(); ++i)
    moved = moved || rm_after.data[i] != rm_before.data[i];
  CHECK(moved);

  // checkpoints reload into the same configuration
  Model re = Model::load(res.epochs[1].checkpoint_path);
  CHECK(re.config().norm == NormKind::BatchNormLearned);
  for (const auto& name : model.params().names())
    for (size_t i = 0; i < model.params().at(name).data.size(); ++i)
      CHECK(re.params().at(name).data[i] == model.params().at(name).data[i]);

  // one JSON record per epoch with the required fields
  std::ifstream log(res.log_path);
  REQUIRE(log.good());
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    const nlohmann::json j = nlohmann::json::parse(line);
    CHECK(j.contains("samples_seen"));
    CHECK(j.contains("wall_time"));
    CHECK(j.contains("train_loss"));
    CHECK(j.contains("eval_gap_per_size"));
    ++lines;
  }
  CHECK(lines == 2);
}

TEST_CASE("policy-gradient training runs under every baseline") {
  for (BaselineKind baseline : {BaselineKind::Ema, BaselineKind::Critic, BaselineKind::Rollout}) {
    ModelConfig mc = small_cfg(DecoderKind::Ar);
    mc.layers = 1;
    Model model(mc, 71);
    TrainConfig cfg;
    cfg.paradigm = TrainParadigm::Rl;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.samples_per_epoch = 8;
    cfg.n_min = cfg.n_max = 6;
    cfg.baseline = baseline;
    cfg.holdout_size = 8;
    cfg.seed = 9;
    TrainResult res = train(model, cfg, Dataset{});
    REQUIRE(res.epochs.size() == 2);
    CHECK(res.epochs[0].samples_seen == 8);
    CHECK(res.epochs[1].samples_seen == 16);
    CHECK(std::isfinite(res.epochs[0].train_loss));
    CHECK(res.epochs[0].train_loss > 0);  // mean sampled tour length
  }
}

TEST_CASE("training is reproducible for a fixed seed") {
  auto run = [] {
    ModelConfig mc = small_cfg(DecoderKind::Ar);
    mc.layers = 1;
    Model model(mc, 81);
    TrainConfig cfg;
    cfg.paradigm = TrainParadigm::Rl;
    cfg.epochs = 1;
    cfg.batch_size = 4;
    cfg.samples_per_epoch = 8;
    cfg.n_min = cfg.n_max = 6;
    cfg.baseline = BaselineKind::Ema;
    cfg.seed = 123;
    train(model, cfg, Dataset{});
    return model.params().at("dec.wq");
  };
  const Tensor<float> a = run();
  const Tensor<float> b = run();
  for (size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] == b.data[i]);
}

TEST_CASE("active search: per-instance best length never increases across epochs") {
  Rng rng(19);
  std::vector<TspInstance> targets = sample_instances(6, 7, rng);
  ModelConfig mc = small_cfg(DecoderKind::Ar);
  mc.layers = 1;
  Model model(mc, 91);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.lr = kFinetuneLr;
  cfg.seed = 2;
  ActiveSearchResult res = active_search(model, targets, cfg);
  REQUIRE(res.best_by_epoch.size() == 3);
  for (size_t i = 0; i < targets.size(); ++i) {
    require_valid_tour(res.best_tours[i], 7);
    CHECK(res.best_lengths[i] ==
          doctest::Approx(tour_length(targets[i], res.best_tours[i])).epsilon(1e-12));
    for (int e = 1; e < 3; ++e)
      CHECK(res.best_by_epoch[e][i] <= res.best_by_epoch[e - 1][i] + 1e-12);
    CHECK(res.best_lengths[i] == res.best_by_epoch[2][i]);
  }
}

TEST_CASE("training config validation") {
  TrainConfig cfg;
  cfg.validate();
  cfg.batch_size = 0;
  CHECK_THROWS(cfg.validate());
  cfg = TrainConfig{};
  cfg.n_min = 10;
  cfg.n_max = 5;
  CHECK_THROWS(cfg.validate());
  cfg = TrainConfig{};
  cfg.ema_beta = 1.0;
  CHECK_THROWS(cfg.validate());
  CHECK(train_paradigm_from_string("sl") == TrainParadigm::Sl);
  CHECK(baseline_kind_from_string("ema") == BaselineKind::Ema);
  CHECK_THROWS(baseline_kind_from_string("none"));
}

TEST_CASE("gradient check: supervised and policy-gradient losses") {
  Rng rng(20);
  TspInstance inst = sample_instance(6, rng);

  SUBCASE("teacher-forced next-node loss") {
    ModelConfig cfg = small_cfg(DecoderKind::Ar);
    cfg.hidden_dim = 8;
    ParameterSet<double> base = init_model_params<float>(cfg, 1).cast<double>();
    SparseGraph g = sparsify(inst, cfg.graph);
    const Tour tour = canonicalize_tour(held_karp(inst).tour);
    check_fragment("sl_ar", base,
                   [&](Tape<double>& t, const ParameterSet<double>& ps) {
                     ForwardOpts<double> opts;
                     opts.training = true;
                     return sl_loss_ar(t, ps, cfg, inst, g, tour, opts);
                   },
                   20);
  }

  SUBCASE("class-weighted edge cross-entropy") {
    ModelConfig cfg = small_cfg(DecoderKind::Nar);
    cfg.hidden_dim = 8;
    ParameterSet<double> base = init_model_params<float>(cfg, 2).cast<double>();
    SparseGraph g = sparsify(inst, cfg.graph);
    const Tour tour = canonicalize_tour(held_karp(inst).tour);
    check_fragment("sl_nar", base,
                   [&](Tape<double>& t, const ParameterSet<double>& ps) {
                     ForwardOpts<double> opts;
                     opts.training = true;
                     return sl_loss_nar(t, ps, cfg, inst, g, tour, true, opts);
                   },
                   20);
  }

  SUBCASE("advantage-scaled rollout likelihood, next-node policy") {
    ModelConfig cfg = small_cfg(DecoderKind::Ar);
    cfg.hidden_dim = 8;
    ParameterSet<double> base = init_model_params<float>(cfg, 3).cast<double>();
    SparseGraph g = sparsify(inst, cfg.graph);
    const Tour tour = shuffled_tour(6, 77);  // frozen sampled tour
    check_fragment("reinforce_ar", base,
                   [&](Tape<double>& t, const ParameterSet<double>& ps) {
                     ForwardOpts<double> opts;
                     opts.training = true;
                     return t.scale(ar_tour_logprob(t, ps, cfg, inst, g, tour, false, opts), 0.7);
                   },
                   20);
  }

  SUBCASE("advantage-scaled rollout likelihood, heatmap policy") {
    ModelConfig cfg = small_cfg(DecoderKind::Nar);
    cfg.hidden_dim = 8;
    cfg.graph = GraphSpec::fixed_degree(3);
    ParameterSet<double> base = init_model_params<float>(cfg, 4).cast<double>();
    SparseGraph g = sparsify(inst, cfg.graph);
    const Tour tour = shuffled_tour(6, 78);
    check_fragment("reinforce_nar", base,
                   [&](Tape<double>& t, const ParameterSet<double>& ps) {
                     ForwardOpts<double> opts;
                     opts.training = true;
                     return t.scale(nar_tour_logprob(t, ps, cfg, inst, g, tour, opts), 0.7);
                   },
                   20);
  }
}
