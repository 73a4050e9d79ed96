#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "ncopt/checkpoint.hpp"
#include "ncopt/grad_check.hpp"
#include "ncopt/model.hpp"
#include "ncopt/model_config.hpp"
#include "ncopt/net.hpp"

using namespace ncopt;

namespace {

SparseGraph edgeless_graph(int n) {
  SparseGraph g;
  g.n = n;
  g.neighbors.assign(n, {});
  g.row_offset.assign(n + 1, 0);
  return g;
}

std::string temp_path(const std::string& name) {
  return std::string("/tmp/ncopt_test_") + name;
}

template <typename T>
Tensor<T> encode_nodes(const ParameterSet<T>& ps, const ModelConfig& cfg, const TspInstance& inst,
                       const SparseGraph& g) {
  Tape<T> tape(false);
  return encode(tape, ps, cfg, inst, g).h.value();
}

// Scalarizes a fragment output with fixed pseudo-random weights so every
// output element feeds the loss.
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

// Runs grad_check over a fragment whose parameters come from a ParameterSet;
// the builder receives a copy with the perturbed values written back in.
void check_fragment(const std::string& label, const ModelConfig& cfg, const ParameterSet<double>& base,
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
  (void)cfg;
}

}  // namespace

TEST_CASE("model config: json round trip and defaults") {
  ModelConfig ar = ModelConfig::defaults(DecoderKind::Ar);
  CHECK(ar.layers == 3);
  CHECK(ar.hidden_dim == 128);
  CHECK(ar.aggregation == Aggregation::Max);
  CHECK(ar.norm == NormKind::BatchNormBatchStats);
  ModelConfig nar = ModelConfig::defaults(DecoderKind::Nar);
  CHECK(nar.layers == 4);

  ModelConfig c = ModelConfig::defaults(DecoderKind::Ar);
  c.variant = EncoderVariant::Rgnn;
  c.hidden_dim = 64;
  c.aggregation = Aggregation::Mean;
  c.norm = NormKind::LayerNorm;
  c.graph_emb = GraphEmbAgg::Sum;
  c.graph = GraphSpec::fixed_degree(5);
  ModelConfig back = ModelConfig::from_json(c.to_json());
  CHECK(back.variant == c.variant);
  CHECK(back.layers == c.layers);
  CHECK(back.hidden_dim == c.hidden_dim);
  CHECK(back.aggregation == c.aggregation);
  CHECK(back.norm == c.norm);
  CHECK(back.decoder == c.decoder);
  CHECK(back.graph_emb == c.graph_emb);
  CHECK(back.graph.mode == c.graph.mode);
  CHECK(back.graph.k == c.graph.k);

  ModelConfig frac = ModelConfig::defaults(DecoderKind::Nar);
  frac.graph = GraphSpec::fixed_fraction(0.25);
  ModelConfig fback = ModelConfig::from_json(frac.to_json());
  CHECK(fback.graph.mode == GraphMode::FixedFraction);
  CHECK(fback.graph.f == doctest::Approx(0.25));

  // missing optional fields fall back to defaults
  ModelConfig sparse = ModelConfig::from_json(nlohmann::json{{"decoder", "nar"}});
  CHECK(sparse.decoder == DecoderKind::Nar);
  CHECK(sparse.layers == 4);
  CHECK(sparse.variant == EncoderVariant::Gnn);

  CHECK_THROWS(ModelConfig::from_json(nlohmann::json{{"variant", "lstm"}}));
  ModelConfig bad = ModelConfig::defaults(DecoderKind::Ar);
  bad.variant = EncoderVariant::Transformer;
  bad.hidden_dim = 30;  // not divisible by 8 heads
  CHECK_THROWS(bad.validate());
  ModelConfig bad2 = ModelConfig::defaults(DecoderKind::Ar);
  bad2.layers = 0;
  CHECK_THROWS(bad2.validate());
  ModelConfig bad3 = ModelConfig::defaults(DecoderKind::Ar);
  bad3.hidden_dim = 12;  // AR context attention needs d % 8 == 0
  CHECK_THROWS(bad3.validate());
}

TEST_CASE("parameter budget: default AR and NAR models sit within 10% of 350k") {
  ModelConfig ar = ModelConfig::defaults(DecoderKind::Ar);
  ParameterSet<float> ps_ar = init_model_params<float>(ar, 7);
  // input 640, 3 layers of 5*128^2 + 512, head 8*128^2 + 2*128
  CHECK(ps_ar.num_trainable() == 379264);
  CHECK(ps_ar.num_trainable() >= 315000);
  CHECK(ps_ar.num_trainable() <= 385000);

  ModelConfig nar = ModelConfig::defaults(DecoderKind::Nar);
  ParameterSet<float> ps_nar = init_model_params<float>(nar, 7);
  CHECK(ps_nar.num_trainable() == 379776);
  CHECK(ps_nar.num_trainable() >= 315000);
  CHECK(ps_nar.num_trainable() <= 385000);
}

TEST_CASE("parameter registration: names, buffers, and seeding") {
  ModelConfig cfg = ModelConfig::defaults(DecoderKind::Ar);
  cfg.hidden_dim = 16;
  cfg.layers = 2;
  ParameterSet<float> ps = init_model_params<float>(cfg, 3);
  for (const char* name : {"input.node_w", "enc.l0.U", "enc.l0.V", "enc.l0.A", "enc.l0.B",
                           "enc.l0.C", "enc.l1.norm_h.gamma", "enc.l1.norm_e.beta", "dec.wc",
                           "dec.glimpse.wk", "dec.glimpse.wv", "dec.glimpse.wo", "dec.wq",
                           "dec.wk_logit", "dec.ph_first", "dec.ph_last"})
    CHECK(ps.has(name));
  CHECK_FALSE(ps.has("enc.l0.norm_h.running_mean"));  // batch-stats mode has no buffers

  cfg.norm = NormKind::BatchNormLearned;
  ParameterSet<float> psb = init_model_params<float>(cfg, 3);
  CHECK(psb.has("enc.l0.norm_h.running_mean"));
  CHECK_FALSE(psb.trainable("enc.l0.norm_h.running_var"));
  CHECK(psb.num_trainable() == ps.num_trainable());  // buffers do not count

  // same seed, same values; different seed differs
  ParameterSet<float> again = init_model_params<float>(cfg, 3);
  CHECK(again.at("enc.l1.U").data == psb.at("enc.l1.U").data);
  ParameterSet<float> other = init_model_params<float>(cfg, 4);
  CHECK(other.at("enc.l1.U").data != psb.at("enc.l1.U").data);

  cfg.variant = EncoderVariant::Transformer;
  cfg.norm = NormKind::LayerNorm;
  ParameterSet<float> pst = init_model_params<float>(cfg, 3);
  for (const char* name : {"enc.l0.attn.wq", "enc.l0.ff.w1", "enc.l1.norm2.gamma"})
    CHECK(pst.has(name));

  cfg.variant = EncoderVariant::Rgnn;
  ParameterSet<float> psr = init_model_params<float>(cfg, 3);
  for (const char* name : {"enc.shared.V", "enc.shared.B", "enc.shared.C", "enc.shared.gru_h.wxr",
                           "enc.shared.gru_e.whn", "enc.shared.gru_h.ln_n.gamma"})
    CHECK(psr.has(name));

  ParameterSet<float> psc = init_critic_params<float>(ModelConfig::defaults(DecoderKind::Ar), 3);
  for (const char* name : {"critic.w1", "critic.b1", "critic.w2", "critic.b2"})
    CHECK(psc.has(name));
  CHECK_FALSE(psc.has("dec.wc"));
}

TEST_CASE("checkpoint container: bit-exact round trip") {
  ModelConfig cfg = ModelConfig::defaults(DecoderKind::Ar);
  cfg.hidden_dim = 16;
  cfg.layers = 1;
  cfg.norm = NormKind::BatchNormLearned;  // include non-trainable buffers
  Model m(cfg, 99);
  const std::string path = temp_path("ckpt_roundtrip.bin");
  m.save(path);

  Model back = Model::load(path);
  CHECK(back.config().hidden_dim == 16);
  CHECK(back.params().names() == m.params().names());
  for (const auto& name : m.params().names()) {
    CHECK(back.params().at(name).data == m.params().at(name).data);
    CHECK(back.params().trainable(name) == m.params().trainable(name));
  }

  // a second save of the loaded model reproduces the file byte for byte
  const std::string path2 = temp_path("ckpt_roundtrip2.bin");
  back.save(path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
  CHECK(!b1.empty());

  CHECK(checkpoint_id(path) == checkpoint_id(path));
  CHECK(checkpoint_id(path).find("ncopt_test_ckpt_roundtrip.bin#") == 0);

  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("checkpoint container: malformed files are rejected") {
  const std::string path = temp_path("ckpt_bad.bin");

  {
    std::ofstream f(path, std::ios::binary);
    f << "not json at all\n";
  }
  CHECK_THROWS(load_checkpoint(path));

  {
    std::ofstream f(path, std::ios::binary);
    f << R"({"format":"ncopt-ckpt-99","dtype":"float32","config":{},"tensors":[]})" << "\n";
  }
  try {
    load_checkpoint(path);
    CHECK(false);
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("unknown checkpoint version") != std::string::npos);
  }

  {
    std::ofstream f(path, std::ios::binary);
    f << R"({"format":"ncopt-ckpt-1","dtype":"float64","config":{},"tensors":[]})" << "\n";
  }
  CHECK_THROWS(load_checkpoint(path));

  // truncated payload
  ModelConfig cfg = ModelConfig::defaults(DecoderKind::Nar);
  cfg.hidden_dim = 16;
  cfg.layers = 1;
  Model m(cfg, 1);
  m.save(path);
  {
    std::ifstream in(path, std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(path, std::ios::binary);
    out.write(all.data(), static_cast<long>(all.size() - 64));
  }
  CHECK_THROWS(load_checkpoint(path));
  std::remove(path.c_str());
}

TEST_CASE("encoder: message passing with no edges equals the mlp update") {
  Rng rng(11);
  TspInstance inst = sample_instance(6, rng);
  SparseGraph none = edgeless_graph(6);

  ModelConfig gnn = ModelConfig::defaults(DecoderKind::Nar);
  gnn.hidden_dim = 16;
  gnn.layers = 2;
  gnn.aggregation = Aggregation::Sum;  // empty neighborhoods aggregate to zero
  ParameterSet<float> ps_gnn = init_model_params<float>(gnn, 21);

  ModelConfig mlp = gnn;
  mlp.variant = EncoderVariant::Mlp;
  ParameterSet<float> ps_mlp = init_model_params<float>(mlp, 21);
  for (const auto& name : ps_mlp.names()) ps_mlp.at(name) = ps_gnn.at(name);

  Tensor<float> ha = encode_nodes(ps_gnn, gnn, inst, none);
  Tensor<float> hb = encode_nodes(ps_mlp, mlp, inst, none);
  CHECK(ha.data == hb.data);
}

TEST_CASE("encoder: edge gates forced shut reduce the gnn to the mlp update") {
  Rng rng(12);
  TspInstance inst = sample_instance(8, rng);
  SparseGraph full = sparsify(inst, GraphSpec::full());

  ModelConfig gnn = ModelConfig::defaults(DecoderKind::Nar);
  gnn.hidden_dim = 16;
  gnn.layers = 1;
  ParameterSet<float> ps = init_model_params<float>(gnn, 31);
  ps.fill("input.edge_w", 0.0f);
  ps.fill("input.edge_b", -60.0f);  // sigmoid(-60) underflows to 0

  ModelConfig mlp = gnn;
  mlp.variant = EncoderVariant::Mlp;
  ParameterSet<float> ps_mlp = init_model_params<float>(mlp, 31);
  for (const auto& name : ps_mlp.names()) ps_mlp.at(name) = ps.at(name);

  Tensor<float> ha = encode_nodes(ps, gnn, inst, full);
  Tensor<float> hb = encode_nodes(ps_mlp, mlp, inst, edgeless_graph(8));
  REQUIRE(ha.data.size() == hb.data.size());
  for (size_t i = 0; i < ha.data.size(); ++i)
    CHECK(ha.data[i] == doctest::Approx(hb.data[i]).epsilon(1e-6));
}

TEST_CASE("encoder: mean equals sum aggregation at degree one") {
  Rng rng(13);
  TspInstance inst = sample_instance(9, rng);
  SparseGraph g = sparsify(inst, GraphSpec::fixed_degree(1));

  ModelConfig a = ModelConfig::defaults(DecoderKind::Nar);
  a.hidden_dim = 16;
  a.layers = 2;
  a.aggregation = Aggregation::Sum;
  ModelConfig b = a;
  b.aggregation = Aggregation::Mean;
  ParameterSet<float> ps = init_model_params<float>(a, 41);

  CHECK(encode_nodes(ps, a, inst, g).data == encode_nodes(ps, b, inst, g).data);
}

TEST_CASE("encoder: duplicating a coincident neighbor changes sum but not max messages") {
  // node 0 sees either {1} or {1, 2} where node 2 sits exactly on node 1
  TspInstance inst;
  inst.xs = {0.1, 0.6, 0.6, 0.9, 0.2};
  inst.ys = {0.1, 0.5, 0.5, 0.9, 0.8};

  auto graph_with = [&](bool duplicated) {
    SparseGraph g = edgeless_graph(5);
    g.neighbors[0] = duplicated ? std::vector<int>{1, 2} : std::vector<int>{1};
    for (int i = 1; i < 5; ++i) g.neighbors[i] = {0};  // no empty lists under max
    g.row_offset.assign(1, 0);
    for (int i = 0; i < 5; ++i) {
      for (int j : g.neighbors[i]) {
        g.edge_src.push_back(i);
        g.edge_tgt.push_back(j);
      }
      g.row_offset.push_back(static_cast<int>(g.edge_src.size()));
    }
    return g;
  };

  ModelConfig cfg = ModelConfig::defaults(DecoderKind::Nar);
  cfg.hidden_dim = 16;
  cfg.layers = 1;
  cfg.norm = NormKind::None;  // keep the comparison local to node 0
  ParameterSet<float> ps;

  auto row0 = [&](Aggregation agg, bool dup) {
    ModelConfig c = cfg;
    c.aggregation = agg;
    Tensor<float> h = encode_nodes(ps, c, inst, graph_with(dup));
    return std::vector<float>(h.data.begin(), h.data.begin() + 16);
  };
  ps = init_model_params<float>(cfg, 51);

  CHECK(row0(Aggregation::Max, false) == row0(Aggregation::Max, true));
  CHECK(row0(Aggregation::Sum, false) != row0(Aggregation::Sum, true));
}

TEST_CASE("encoder: recurrent block is a prefix-stable recurrence") {
  Rng rng(14);
  TspInstance inst = sample_instance(7, rng);
  SparseGraph g = sparsify(inst, GraphSpec::full());

  ModelConfig cfg = ModelConfig::defaults(DecoderKind::Nar);
  cfg.variant = EncoderVariant::Rgnn;
  cfg.hidden_dim = 16;
  cfg.layers = 3;
  ParameterSet<float> ps = init_model_params<float>(cfg, 61);

  ForwardOpts<float> six;
  six.rgnn_steps = 6;
  Tape<float> t6(false);
  Tensor<float> h6 = encode(t6, ps, cfg, inst, g, six).h.value();

  // run 3 steps, then continue the same recurrence 3 more by hand
  Tape<float> t3(false);
  EncodeResult<float> s = encode(t3, ps, cfg, inst, g);
  for (int i = 0; i < 3; ++i) s = detail::rgnn_step(t3, ps, s, g, cfg);
  CHECK(s.h.value().data == h6.data);
}

TEST_CASE("encoder: recurrent cell keeps state when the update gate saturates") {
  Rng rng(15);
  TspInstance inst = sample_instance(6, rng);
  SparseGraph g = sparsify(inst, GraphSpec::full());

  ModelConfig cfg = ModelConfig::defaults(DecoderKind::Nar);
  cfg.variant = EncoderVariant::Rgnn;
  cfg.hidden_dim = 8;
  cfg.layers = 4;
  ParameterSet<double> ps = init_model_params<float>(cfg, 71).cast<double>();
  for (const char* cell : {"gru_h", "gru_e"}) {
    ps.fill(std::string("enc.shared.") + cell + ".ln_z.gamma", 0.0);
    ps.fill(std::string("enc.shared.") + cell + ".ln_z.beta", 60.0);  // z = sigmoid(60) = 1
  }

  Tape<double> tape(false);
  EncodeResult<double> s0 = init_embeddings(tape, ps, inst, g);
  EncodeResult<double> s = encode(tape, ps, cfg, inst, g);
  for (size_t i = 0; i < s0.h.value().data.size(); ++i)
    CHECK(s.h.value().data[i] == doctest::Approx(s0.h.value().data[i]).epsilon(1e-12));
}

TEST_CASE("encoder: permutation equivariance of node embeddings") {
  Rng rng(16);
  for (EncoderVariant variant : {EncoderVariant::Gnn, EncoderVariant::Transformer}) {
    TspInstance inst = sample_instance(12, rng);
    ModelConfig cfg = ModelConfig::defaults(DecoderKind::Nar);
    cfg.variant = variant;
    cfg.hidden_dim = 16;
    cfg.layers = 2;
    cfg.heads = 4;
    if (variant == EncoderVariant::Transformer) cfg.norm = NormKind::LayerNorm;
    ParameterSet<float> ps = init_model_params<float>(cfg, 81);

    // relabel node i as perm[i]
    std::vector<int> perm(12);
    for (int i = 0; i < 12; ++i) perm[i] = i;
    for (int i = 11; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
    TspInstance shuffled = inst;
    for (int i = 0; i < 12; ++i) {
      shuffled.xs[perm[i]] = inst.xs[i];
      shuffled.ys[perm[i]] = inst.ys[i];
    }

    Tensor<float> ha = encode_nodes(ps, cfg, inst, sparsify(inst, GraphSpec::full()));
    Tensor<float> hb = encode_nodes(ps, cfg, shuffled, sparsify(shuffled, GraphSpec::full()));
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 16; ++j)
        CHECK(ha.at(i, j) == doctest::Approx(hb.at(perm[i], j)).epsilon(1e-5).scale(1.0));
  }
}

TEST_CASE("graph embedding: aggregation basics") {
  Tape<float> t;
  Var<float> same = t.constant(Tensor<float>(3, 2, {0.5f, -1.0f, 0.5f, -1.0f, 0.5f, -1.0f}));
  Tensor<float> m = graph_embedding(t, same, GraphEmbAgg::Mean).value();
  CHECK(m.at(0, 0) == 0.5f);
  CHECK(m.at(0, 1) == -1.0f);

  Var<float> two = t.constant(Tensor<float>(2, 2, {1.0f, 0.0f, 0.0f, 1.0f}));
  Tensor<float> mean = graph_embedding(t, two, GraphEmbAgg::Mean).value();
  CHECK(mean.at(0, 0) == doctest::Approx(0.5));
  CHECK(mean.at(0, 1) == doctest::Approx(0.5));
  Tensor<float> sum = graph_embedding(t, two, GraphEmbAgg::Sum).value();
  CHECK(sum.at(0, 0) == doctest::Approx(1.0));
  Tensor<float> mx = graph_embedding(t, two, GraphEmbAgg::Max).value();
  CHECK(mx.at(0, 0) == doctest::Approx(1.0));
  CHECK(mx.at(0, 1) == doctest::Approx(1.0));

  Var<float> one = t.constant(Tensor<float>(1, 3, {0.25f, 0.5f, 0.75f}));
  for (GraphEmbAgg agg : {GraphEmbAgg::Mean, GraphEmbAgg::Sum, GraphEmbAgg::Max})
    CHECK(graph_embedding(t, one, agg).value().data == one.value().data);
}

TEST_CASE("edge head: two-class softmax behavior") {
  Rng rng(17);
  TspInstance inst = sample_instance(8, rng);
  SparseGraph g = sparsify(inst, GraphSpec::full());
  ModelConfig cfg = ModelConfig::defaults(DecoderKind::Nar);
  cfg.hidden_dim = 16;
  cfg.layers = 1;
  ParameterSet<float> ps = init_model_params<float>(cfg, 91);

  auto run = [&]() {
    Tape<float> t(false);
    EncodeResult<float> enc = encode(t, ps, cfg, inst, g);
    Var<float> hg = graph_embedding(t, enc.h, cfg.graph_emb);
    return nar_edge_logits(t, ps, enc.h, hg, g).probs.value();
  };

  Tensor<float> probs = run();
  for (int e = 0; e < g.num_edges(); ++e) {
    CHECK(probs.at(e, 0) >= 0.0f);
    CHECK(probs.at(e, 1) >= 0.0f);
    CHECK(probs.at(e, 0) + probs.at(e, 1) == doctest::Approx(1.0).epsilon(1e-6));
  }

  // direction matters: (i, j) and (j, i) are scored from different inputs
  bool asymmetric = false;
  for (int e = 0; e < g.num_edges() && !asymmetric; ++e) {
    const int rev = g.edge_id(g.edge_tgt[e], g.edge_src[e]);
    if (rev >= 0 && std::abs(probs.at(e, 1) - probs.at(rev, 1)) > 1e-6f) asymmetric = true;
  }
  CHECK(asymmetric);

  ps.fill("dec.w2", 0.0f);
  Tensor<float> uniform = run();
  for (int e = 0; e < g.num_edges(); ++e) {
    CHECK(uniform.at(e, 0) == doctest::Approx(0.5));
    CHECK(uniform.at(e, 1) == doctest::Approx(0.5));
  }
}

TEST_CASE("ar head: masking, clipping, and placeholder step") {
  Rng rng(18);
  TspInstance inst = sample_instance(10, rng);
  SparseGraph g = sparsify(inst, GraphSpec::full());
  ModelConfig cfg = ModelConfig::defaults(DecoderKind::Ar);
  cfg.hidden_dim = 16;
  cfg.layers = 1;
  ParameterSet<float> ps = init_model_params<float>(cfg, 101);

  Tape<float> t(false);
  EncodeResult<float> enc = encode(t, ps, cfg, inst, g);
  Var<float> hg = graph_embedding(t, enc.h, cfg.graph_emb);
  ArState<float> st = ar_prepare(t, ps, enc.h, hg);

  std::vector<uint8_t> visited(10, 0);
  // placeholder step with nothing chosen yet
  ArStepOut<float> step0 = ar_step(t, st, -1, -1, visited);
  double total = 0;
  for (int j = 0; j < 10; ++j) total += step0.probs.value().at(0, j);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-6));

  // every raw logit is tanh-clipped into [-10, 10]
  for (int first = -1; first < 4; ++first) {
    const int last = first < 0 ? -1 : (first + 3) % 10;
    Tensor<float> raw = ar_raw_logits(t, st, first, last).value();
    for (float v : raw.data) {
      CHECK(v <= 10.0f);
      CHECK(v >= -10.0f);
    }
  }

  visited[2] = visited[5] = visited[7] = 1;
  ArStepOut<float> step = ar_step(t, st, 2, 7, visited);
  CHECK(step.probs.value().at(0, 2) == 0.0f);  // exact zeros under the mask
  CHECK(step.probs.value().at(0, 5) == 0.0f);
  CHECK(step.probs.value().at(0, 7) == 0.0f);
  CHECK(std::isinf(step.log_probs.value().at(0, 5)));
  double rest = 0;
  for (int j = 0; j < 10; ++j) rest += step.probs.value().at(0, j);
  CHECK(rest == doctest::Approx(1.0).epsilon(1e-6));

  std::vector<uint8_t> all(10, 1);
  CHECK_THROWS(ar_step(t, st, 0, 1, all));
}

TEST_CASE("ar head: uniform distribution when the query head is silenced") {
  Rng rng(19);
  TspInstance inst = sample_instance(9, rng);
  SparseGraph g = sparsify(inst, GraphSpec::full());
  ModelConfig cfg = ModelConfig::defaults(DecoderKind::Ar);
  cfg.hidden_dim = 16;
  cfg.layers = 1;
  ParameterSet<float> ps = init_model_params<float>(cfg, 111);
  ps.fill("dec.wq", 0.0f);  // all logits become tanh(0) = 0

  Tape<float> t(false);
  EncodeResult<float> enc = encode(t, ps, cfg, inst, g);
  ArState<float> st = ar_prepare(t, ps, enc.h, graph_embedding(t, enc.h, cfg.graph_emb));
  std::vector<uint8_t> visited(9, 0);
  visited[0] = visited[4] = 1;
  ArStepOut<float> step = ar_step(t, st, 0, 4, visited);
  for (int j = 0; j < 9; ++j) {
    if (visited[j]) CHECK(step.probs.value().at(0, j) == 0.0f);
    else CHECK(step.probs.value().at(0, j) == doctest::Approx(1.0 / 7.0).epsilon(1e-6));
  }
}

TEST_CASE("model facade: checkpoint round trip preserves inference") {
  Rng rng(20);
  TspInstance inst = sample_instance(10, rng);
  ModelConfig cfg = ModelConfig::defaults(DecoderKind::Nar);
  cfg.hidden_dim = 16;
  cfg.layers = 2;
  cfg.graph = GraphSpec::fixed_degree(4);
  Model m(cfg, 121);

  const std::string path = temp_path("facade_ckpt.bin");
  m.save(path);
  Model back = Model::load(path);
  std::remove(path.c_str());

  CHECK(m.node_embeddings(inst).data == back.node_embeddings(inst).data);
  Heatmap a = m.heatmap(inst);
  Heatmap b = back.heatmap(inst);
  CHECK(a.prob == b.prob);
  CHECK(a.graph.edge_src == b.graph.edge_src);

  // the heatmap has no sequential state: recomputation is identical
  Heatmap again = m.heatmap(inst);
  CHECK(a.prob == again.prob);
  for (double p : a.prob) {
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }

  const std::string json = heatmap_to_json(a);
  CHECK(json.find("\"edges\"") != std::string::npos);

  Model ar(ModelConfig::defaults(DecoderKind::Ar), 1);
  CHECK_THROWS(ar.heatmap(inst));
}

TEST_CASE("gradients: message-passing layer") {
  Rng rng(200);
  TspInstance inst = sample_instance(6, rng);
  SparseGraph g = sparsify(inst, GraphSpec::fixed_degree(3));
  ModelConfig cfg = ModelConfig::defaults(DecoderKind::Nar);
  cfg.hidden_dim = 8;
  cfg.layers = 1;
  ParameterSet<double> base = init_model_params<float>(cfg, 131).cast<double>();

  check_fragment("gnn_layer", cfg, base,
                 [&](Tape<double>& t, const ParameterSet<double>& ps) {
                   EncodeResult<double> s = encode(t, ps, cfg, inst, g);
                   return t.add(weighted(t, s.h, 1), weighted(t, s.e, 2));
                 },
                 20);
}

TEST_CASE("gradients: mlp layer and norm variants") {
  Rng rng(201);
  TspInstance inst = sample_instance(6, rng);
  SparseGraph g = sparsify(inst, GraphSpec::full());
  ModelConfig cfg = ModelConfig::defaults(DecoderKind::Nar);
  cfg.variant = EncoderVariant::Mlp;
  cfg.hidden_dim = 8;
  cfg.layers = 2;
  cfg.norm = NormKind::LayerNorm;
  ParameterSet<double> base = init_model_params<float>(cfg, 141).cast<double>();
  check_fragment("mlp_layer", cfg, base,
                 [&](Tape<double>& t, const ParameterSet<double>& ps) {
                   return weighted(t, encode(t, ps, cfg, inst, g).h, 3);
                 },
                 20);

  for (NormKind norm : {NormKind::None, NormKind::BatchNormBatchStats}) {
    ModelConfig c2 = cfg;
    c2.norm = norm;
    ParameterSet<double> b2 = init_model_params<float>(c2, 142).cast<double>();
    check_fragment("mlp_layer_norm_variant", c2, b2,
                   [&](Tape<double>& t, const ParameterSet<double>& ps) {
                     return weighted(t, encode(t, ps, c2, inst, g).h, 4);
                   },
                   5);
  }
}

TEST_CASE("gradients: attention encoder layer") {
  Rng rng(202);
  TspInstance inst = sample_instance(6, rng);
  SparseGraph g = sparsify(inst, GraphSpec::full());
  ModelConfig cfg = ModelConfig::defaults(DecoderKind::Nar);
  cfg.variant = EncoderVariant::Transformer;
  cfg.hidden_dim = 8;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.norm = NormKind::LayerNorm;
  ParameterSet<double> base = init_model_params<float>(cfg, 151).cast<double>();
  check_fragment("transformer_layer", cfg, base,
                 [&](Tape<double>& t, const ParameterSet<double>& ps) {
                   return weighted(t, encode(t, ps, cfg, inst, g).h, 5);
                 },
                 20);
}

TEST_CASE("gradients: recurrent step with weight sharing") {
  Rng rng(203);
  TspInstance inst = sample_instance(6, rng);
  SparseGraph g = sparsify(inst, GraphSpec::fixed_degree(3));
  ModelConfig cfg = ModelConfig::defaults(DecoderKind::Nar);
  cfg.variant = EncoderVariant::Rgnn;
  cfg.hidden_dim = 8;
  cfg.layers = 3;  // repeated application exercises gradient accumulation
  ParameterSet<double> base = init_model_params<float>(cfg, 161).cast<double>();
  check_fragment("rgnn_step", cfg, base,
                 [&](Tape<double>& t, const ParameterSet<double>& ps) {
                   EncodeResult<double> s = encode(t, ps, cfg, inst, g);
                   return t.add(weighted(t, s.h, 6), weighted(t, s.e, 7));
                 },
                 20);
}

TEST_CASE("gradients: edge prediction head") {
  Rng rng(204);
  TspInstance inst = sample_instance(6, rng);
  SparseGraph g = sparsify(inst, GraphSpec::fixed_degree(3));
  ModelConfig cfg = ModelConfig::defaults(DecoderKind::Nar);
  cfg.hidden_dim = 8;
  cfg.layers = 1;
  ParameterSet<double> base = init_model_params<float>(cfg, 171).cast<double>();
  check_fragment("nar_edge_logits", cfg, base,
                 [&](Tape<double>& t, const ParameterSet<double>& ps) {
                   EncodeResult<double> s = encode(t, ps, cfg, inst, g);
                   Var<double> hg = graph_embedding(t, s.h, cfg.graph_emb);
                   return weighted(t, nar_edge_logits(t, ps, s.h, hg, g).probs, 8);
                 },
                 20);
}

TEST_CASE("gradients: autoregressive step chain") {
  Rng rng(205);
  TspInstance inst = sample_instance(6, rng);
  SparseGraph g = sparsify(inst, GraphSpec::full());
  ModelConfig cfg = ModelConfig::defaults(DecoderKind::Ar);
  cfg.hidden_dim = 8;
  cfg.layers = 1;
  ParameterSet<double> base = init_model_params<float>(cfg, 181).cast<double>();
  check_fragment("ar_step", cfg, base,
                 [&](Tape<double>& t, const ParameterSet<double>& ps) {
                   EncodeResult<double> s = encode(t, ps, cfg, inst, g);
                   Var<double> hg = graph_embedding(t, s.h, cfg.graph_emb);
                   ArState<double> st = ar_prepare(t, ps, s.h, hg);
                   // placeholder step, then two teacher-forced steps
                   std::vector<uint8_t> visited(6, 0);
                   Var<double> loss = weighted(t, ar_step(t, st, -1, -1, visited).probs, 9);
                   visited[2] = 1;
                   loss = t.add(loss, weighted(t, ar_step(t, st, 2, 2, visited).probs, 10));
                   visited[4] = 1;
                   loss = t.add(loss, weighted(t, ar_step(t, st, 2, 4, visited).probs, 11));
                   return loss;
                 },
                 20);
}

TEST_CASE("gradients: critic value head") {
  Rng rng(206);
  TspInstance inst = sample_instance(6, rng);
  SparseGraph g = sparsify(inst, GraphSpec::fixed_degree(3));
  ModelConfig cfg = ModelConfig::defaults(DecoderKind::Ar);
  cfg.hidden_dim = 8;
  cfg.layers = 1;
  ParameterSet<double> base = init_critic_params<float>(cfg, 191).cast<double>();
  check_fragment("critic_value", cfg, base,
                 [&](Tape<double>& t, const ParameterSet<double>& ps) {
                   return critic_value(t, ps, cfg, inst, g);
                 },
                 20);
}
