#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "ncopt/graph.hpp"
#include "ncopt/instances.hpp"
#include "ncopt/model_config.hpp"
#include "ncopt/params.hpp"

namespace ncopt {

inline constexpr double kNormEps = 1e-5;
inline constexpr double kBnMomentum = 0.1;
inline constexpr double kLogitClip = 10.0;  // tanh clipping scale on AR logits
inline constexpr int kArHeads = 8;          // context-refinement attention heads

// Per-normalization-site batch statistics observed during a training forward
// pass; folded into running buffers by the training coordinator.
template <typename T>
struct BnBatchStats {
  std::map<std::string, std::pair<Tensor<T>, Tensor<T>>> stats;  // site -> (mean, var)
};

template <typename T>
struct ForwardOpts {
  bool training = false;
  BnBatchStats<T>* bn_obs = nullptr;  // collected only for batchnorm-learned while training
  int rgnn_steps = 0;                 // 0 = config layer count
};

// ---------------- parameter registration ----------------

namespace detail {

template <typename T>
void register_norm(ParameterSet<T>& ps, const std::string& prefix, int d, NormKind kind) {
  if (kind == NormKind::None) return;
  ps.add(prefix + ".gamma", 1, d);
  ps.add(prefix + ".beta", 1, d);
  if (kind == NormKind::BatchNormLearned) {
    ps.add(prefix + ".running_mean", 1, d, /*trainable=*/false);
    ps.add(prefix + ".running_var", 1, d, /*trainable=*/false);
  }
}

template <typename T>
void register_gru(ParameterSet<T>& ps, const std::string& prefix, int d) {
  for (const char* gate : {"wxr", "whr", "wxz", "whz", "wxn", "whn"})
    ps.add(prefix + "." + gate, d, d);
  for (const char* ln : {"ln_r", "ln_z", "ln_n"}) {
    ps.add(prefix + "." + ln + ".gamma", 1, d);
    ps.add(prefix + "." + ln + ".beta", 1, d);
  }
}

template <typename T>
void register_encoder(ParameterSet<T>& ps, const ModelConfig& cfg) {
  const int d = cfg.hidden_dim;
  ps.add("input.node_w", 2, d);
  ps.add("input.node_b", 1, d);
  ps.add("input.edge_w", 1, d);
  ps.add("input.edge_b", 1, d);

  switch (cfg.variant) {
    case EncoderVariant::Gnn:
      for (int l = 0; l < cfg.layers; ++l) {
        const std::string p = "enc.l" + std::to_string(l) + ".";
        for (const char* w : {"U", "V", "A", "B", "C"}) ps.add(p + w, d, d);
        register_norm(ps, p + "norm_h", d, cfg.norm);
        register_norm(ps, p + "norm_e", d, cfg.norm);
      }
      break;
    case EncoderVariant::Mlp:
      for (int l = 0; l < cfg.layers; ++l) {
        const std::string p = "enc.l" + std::to_string(l) + ".";
        ps.add(p + "U", d, d);
        register_norm(ps, p + "norm_h", d, cfg.norm);
      }
      break;
    case EncoderVariant::Transformer:
      for (int l = 0; l < cfg.layers; ++l) {
        const std::string p = "enc.l" + std::to_string(l) + ".";
        for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) ps.add(p + w, d, d);
        ps.add(p + "ff.w1", d, 2 * d);  // expansion factor 2
        ps.add(p + "ff.w2", 2 * d, d);
        register_norm(ps, p + "norm1", d, cfg.norm);
        register_norm(ps, p + "norm2", d, cfg.norm);
      }
      break;
    case EncoderVariant::Rgnn:
      // One weight-shared block applied `layers` times; layer normalization
      // lives inside the GRU cells, so cfg.norm is not consulted here.
      for (const char* w : {"V", "B", "C"}) ps.add(std::string("enc.shared.") + w, d, d);
      register_gru(ps, "enc.shared.gru_h", d);
      register_gru(ps, "enc.shared.gru_e", d);
      break;
  }
}

template <typename T>
void init_encoder_values(ParameterSet<T>& ps, const ModelConfig& cfg, Rng& rng) {
  const int d = cfg.hidden_dim;
  for (const auto& name : ps.names()) {
    if (!ps.trainable(name)) continue;  // running stats set below
    if (name.find(".gamma") != std::string::npos) {
      ps.fill(name, T(1));
    } else if (name.find(".beta") != std::string::npos) {
      ps.fill(name, T(0));
    } else if (name == "input.node_w" || name == "input.node_b") {
      ps.init_uniform(name, 2, rng);
    } else if (name == "input.edge_w" || name == "input.edge_b") {
      ps.init_uniform(name, 1, rng);
    } else if (name.find("ff.w2") != std::string::npos) {
      ps.init_uniform(name, 2 * d, rng);
    } else {
      ps.init_uniform(name, d, rng);
    }
  }
  for (const auto& name : ps.names()) {
    if (ps.trainable(name)) continue;
    if (name.find("running_mean") != std::string::npos) ps.fill(name, T(0));
    if (name.find("running_var") != std::string::npos) ps.fill(name, T(1));
  }
}

}  // namespace detail

// Builds the full policy parameter set (encoder + decoding head) for a
// configuration. Registration order is fixed; values are drawn in that order
// from the seed, so a (config, seed) pair pins every initial weight.
template <typename T>
ParameterSet<T> init_model_params(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  const int d = cfg.hidden_dim;
  ParameterSet<T> ps;
  detail::register_encoder(ps, cfg);
  if (cfg.decoder == DecoderKind::Ar) {
    ps.add("dec.wc", 3 * d, d);
    for (const char* w : {"glimpse.wk", "glimpse.wv", "glimpse.wo"})
      ps.add(std::string("dec.") + w, d, d);
    ps.add("dec.wq", d, d);
    ps.add("dec.wk_logit", d, d);
    ps.add("dec.ph_first", 1, d);
    ps.add("dec.ph_last", 1, d);
  } else {
    ps.add("dec.w1", 3 * d, d);
    ps.add("dec.w2", d, 2);
  }

  Rng rng(seed);
  detail::init_encoder_values(ps, cfg, rng);
  for (const auto& name : ps.names()) {
    if (name.rfind("dec.", 0) != 0) continue;
    if (name == "dec.wc" || name == "dec.w1")
      ps.init_uniform(name, 3 * d, rng);
    else
      ps.init_uniform(name, d, rng);
  }
  return ps;
}

// Critic: encoder of the same architecture plus a 2-layer value head.
template <typename T>
ParameterSet<T> init_critic_params(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  const int d = cfg.hidden_dim;
  ParameterSet<T> ps;
  detail::register_encoder(ps, cfg);
  ps.add("critic.w1", d, d);
  ps.add("critic.b1", 1, d);
  ps.add("critic.w2", d, 1);
  ps.add("critic.b2", 1, 1);
  Rng rng(seed);
  detail::init_encoder_values(ps, cfg, rng);
  for (const char* name : {"critic.w1", "critic.b1", "critic.w2", "critic.b2"})
    ps.init_uniform(name, d, rng);
  return ps;
}

// ---------------- encoder forward ----------------

template <typename T>
struct EncodeResult {
  Var<T> h;  // n x d node embeddings
  Var<T> e;  // m x d edge embeddings, parallel to the graph's edge arrays
};

namespace detail {

template <typename T>
Var<T> apply_norm(Tape<T>& tape, const ParameterSet<T>& ps, const std::string& prefix, Var<T> x,
                  NormKind kind, const ForwardOpts<T>& opts) {
  if (kind == NormKind::None) return x;
  Var<T> gamma = param(tape, ps, prefix + ".gamma");
  Var<T> beta = param(tape, ps, prefix + ".beta");
  switch (kind) {
    case NormKind::LayerNorm:
      return tape.layernorm(x, gamma, beta, T(kNormEps));
    case NormKind::BatchNormBatchStats:
      return tape.batchnorm_train(x, gamma, beta, T(kNormEps));
    case NormKind::BatchNormLearned: {
      if (opts.training) {
        Tensor<T> mean, var;
        Var<T> out = tape.batchnorm_train(x, gamma, beta, T(kNormEps), &mean, &var);
        if (opts.bn_obs) opts.bn_obs->stats[prefix] = {std::move(mean), std::move(var)};
        return out;
      }
      return tape.batchnorm_eval(x, gamma, beta, ps.at(prefix + ".running_mean"),
                                 ps.at(prefix + ".running_var"), T(kNormEps));
    }
    default:
      return x;
  }
}

// Gated neighbor aggregation shared by the gnn layer and the rgnn step:
// Aggr_j over in-edges (i -> j) of sigma(e_ij) (*) (V h_j), per source i.
template <typename T>
Var<T> gated_messages(Tape<T>& tape, Var<T> h, Var<T> e, Var<T> V, const SparseGraph& g,
                      Aggregation agg) {
  if (g.num_edges() == 0)
    return tape.constant(Tensor<T>(g.n, h.cols()));  // no neighbors, zero messages
  Var<T> hv = tape.matmul(h, V);
  Var<T> gate = tape.sigmoid(e);
  Var<T> msg = tape.mul(gate, tape.gather_rows(hv, g.edge_tgt));
  return tape.segment_aggregate(msg, g.edge_src, g.n, agg);
}

template <typename T>
EncodeResult<T> gnn_layer(Tape<T>& tape, const ParameterSet<T>& ps, const std::string& p,
                          EncodeResult<T> s, const SparseGraph& g, const ModelConfig& cfg,
                          const ForwardOpts<T>& opts) {
  Var<T> agg = gated_messages(tape, s.h, s.e, param(tape, ps, p + "V"), g, cfg.aggregation);
  Var<T> node_pre = tape.add(tape.matmul(s.h, param(tape, ps, p + "U")), agg);
  Var<T> h_next =
      tape.add(s.h, tape.relu(apply_norm(tape, ps, p + "norm_h", node_pre, cfg.norm, opts)));

  Var<T> e_next = s.e;
  if (g.num_edges() > 0) {
    Var<T> hb = tape.matmul(s.h, param(tape, ps, p + "B"));
    Var<T> hc = tape.matmul(s.h, param(tape, ps, p + "C"));
    Var<T> edge_pre = tape.add(tape.matmul(s.e, param(tape, ps, p + "A")),
                               tape.add(tape.gather_rows(hb, g.edge_src),
                                        tape.gather_rows(hc, g.edge_tgt)));
    e_next = tape.add(s.e, tape.relu(apply_norm(tape, ps, p + "norm_e", edge_pre, cfg.norm, opts)));
  }
  return {h_next, e_next};
}

template <typename T>
EncodeResult<T> mlp_layer(Tape<T>& tape, const ParameterSet<T>& ps, const std::string& p,
                          EncodeResult<T> s, const ModelConfig& cfg, const ForwardOpts<T>& opts) {
  Var<T> pre = tape.matmul(s.h, param(tape, ps, p + "U"));
  Var<T> h_next = tape.add(s.h, tape.relu(apply_norm(tape, ps, p + "norm_h", pre, cfg.norm, opts)));
  return {h_next, s.e};
}

// Multi-head attention of q_rows against keys/values derived from kv_rows.
template <typename T>
Var<T> multi_head_attention(Tape<T>& tape, Var<T> q_rows, Var<T> kv_rows, Var<T> wq, Var<T> wk,
                            Var<T> wv, Var<T> wo, int heads) {
  const int d = kv_rows.cols();
  const int dk = d / heads;
  Var<T> q = tape.matmul(q_rows, wq);
  Var<T> k = tape.matmul(kv_rows, wk);
  Var<T> v = tape.matmul(kv_rows, wv);
  const T inv_sqrt_dk = T(1) / std::sqrt(static_cast<T>(dk));
  std::vector<Var<T>> head_out;
  head_out.reserve(heads);
  for (int m = 0; m < heads; ++m) {
    Var<T> qh = tape.slice_cols(q, m * dk, dk);
    Var<T> kh = tape.slice_cols(k, m * dk, dk);
    Var<T> vh = tape.slice_cols(v, m * dk, dk);
    Var<T> att = tape.softmax_rows(tape.scale(tape.matmul_nt(qh, kh), inv_sqrt_dk));
    head_out.push_back(tape.matmul(att, vh));
  }
  return tape.matmul(tape.concat_cols(head_out), wo);
}

template <typename T>
EncodeResult<T> transformer_layer(Tape<T>& tape, const ParameterSet<T>& ps, const std::string& p,
                                  EncodeResult<T> s, const ModelConfig& cfg,
                                  const ForwardOpts<T>& opts) {
  Var<T> attn = multi_head_attention(tape, s.h, s.h, param(tape, ps, p + "attn.wq"),
                                     param(tape, ps, p + "attn.wk"), param(tape, ps, p + "attn.wv"),
                                     param(tape, ps, p + "attn.wo"), cfg.heads);
  Var<T> x1 = apply_norm(tape, ps, p + "norm1", tape.add(s.h, attn), cfg.norm, opts);
  Var<T> ff = tape.matmul(tape.relu(tape.matmul(x1, param(tape, ps, p + "ff.w1"))),
                          param(tape, ps, p + "ff.w2"));
  Var<T> h_next = apply_norm(tape, ps, p + "norm2", tape.add(x1, ff), cfg.norm, opts);
  return {h_next, s.e};
}

// GRU cell with layer normalization on each gate pre-activation.
template <typename T>
Var<T> gru_cell(Tape<T>& tape, const ParameterSet<T>& ps, const std::string& p, Var<T> x,
                Var<T> state) {
  auto ln = [&](const char* site, Var<T> v) {
    return tape.layernorm(v, param(tape, ps, p + "." + site + ".gamma"),
                          param(tape, ps, p + "." + site + ".beta"), T(kNormEps));
  };
  Var<T> r = tape.sigmoid(ln("ln_r", tape.add(tape.matmul(x, param(tape, ps, p + ".wxr")),
                                              tape.matmul(state, param(tape, ps, p + ".whr")))));
  Var<T> z = tape.sigmoid(ln("ln_z", tape.add(tape.matmul(x, param(tape, ps, p + ".wxz")),
                                              tape.matmul(state, param(tape, ps, p + ".whz")))));
  Var<T> cand = tape.tanh(ln("ln_n", tape.add(tape.matmul(x, param(tape, ps, p + ".wxn")),
                                              tape.mul(r, tape.matmul(state, param(tape, ps,
                                                                                   p + ".whn"))))));
  // cand + z (*) (state - cand): z = 1 keeps the previous state exactly
  return tape.add(cand, tape.mul(z, tape.sub(state, cand)));
}

template <typename T>
EncodeResult<T> rgnn_step(Tape<T>& tape, const ParameterSet<T>& ps, EncodeResult<T> s,
                          const SparseGraph& g, const ModelConfig& cfg) {
  Var<T> msg = gated_messages(tape, s.h, s.e, param(tape, ps, "enc.shared.V"), g, cfg.aggregation);
  Var<T> h_next = gru_cell(tape, ps, "enc.shared.gru_h", msg, s.h);
  Var<T> e_next = s.e;
  if (g.num_edges() > 0) {
    Var<T> hb = tape.matmul(s.h, param(tape, ps, "enc.shared.B"));
    Var<T> hc = tape.matmul(s.h, param(tape, ps, "enc.shared.C"));
    Var<T> xe =
        tape.add(tape.gather_rows(hb, g.edge_src), tape.gather_rows(hc, g.edge_tgt));
    e_next = gru_cell(tape, ps, "enc.shared.gru_e", xe, s.e);
  }
  return {h_next, e_next};
}

}  // namespace detail

// Input projections: h0_i from coordinates, e0_ij from edge length.
template <typename T>
EncodeResult<T> init_embeddings(Tape<T>& tape, const ParameterSet<T>& ps,
                                const TspInstance& inst, const SparseGraph& g) {
  const int n = inst.n();
  Tensor<T> coords(n, 2);
  for (int i = 0; i < n; ++i) {
    coords.at(i, 0) = static_cast<T>(inst.xs[i]);
    coords.at(i, 1) = static_cast<T>(inst.ys[i]);
  }
  Tensor<T> dists(g.num_edges(), 1);
  for (int eidx = 0; eidx < g.num_edges(); ++eidx)
    dists.at(eidx, 0) = static_cast<T>(edge_dist(inst, g.edge_src[eidx], g.edge_tgt[eidx]));

  Var<T> h = tape.add_bias(tape.matmul(tape.constant(std::move(coords)),
                                       param(tape, ps, "input.node_w")),
                           param(tape, ps, "input.node_b"));
  Var<T> e = tape.add_bias(tape.matmul(tape.constant(std::move(dists)),
                                       param(tape, ps, "input.edge_w")),
                           param(tape, ps, "input.edge_b"));
  return {h, e};
}

template <typename T>
EncodeResult<T> encode(Tape<T>& tape, const ParameterSet<T>& ps, const ModelConfig& cfg,
                       const TspInstance& inst, const SparseGraph& g,
                       const ForwardOpts<T>& opts = {}) {
  cfg.validate();
  NC_REQUIRE(g.n == inst.n(), "graph built over a different instance");
  EncodeResult<T> s = init_embeddings(tape, ps, inst, g);
  const int steps =
      cfg.variant == EncoderVariant::Rgnn && opts.rgnn_steps > 0 ? opts.rgnn_steps : cfg.layers;
  for (int l = 0; l < steps; ++l) {
    const std::string p = "enc.l" + std::to_string(l) + ".";
    switch (cfg.variant) {
      case EncoderVariant::Gnn:
        s = detail::gnn_layer(tape, ps, p, s, g, cfg, opts);
        break;
      case EncoderVariant::Mlp:
        s = detail::mlp_layer(tape, ps, p, s, cfg, opts);
        break;
      case EncoderVariant::Transformer:
        s = detail::transformer_layer(tape, ps, p, s, cfg, opts);
        break;
      case EncoderVariant::Rgnn:
        s = detail::rgnn_step(tape, ps, s, g, cfg);
        break;
    }
  }
  return s;
}

// ---------------- decoding heads ----------------

template <typename T>
Var<T> graph_embedding(Tape<T>& tape, Var<T> h, GraphEmbAgg method) {
  NC_REQUIRE(h.rows() >= 1, "graph embedding of an empty node set");
  const std::vector<int> seg(h.rows(), 0);
  switch (method) {
    case GraphEmbAgg::Mean: return tape.segment_aggregate(h, seg, 1, Aggregation::Mean);
    case GraphEmbAgg::Sum: return tape.segment_aggregate(h, seg, 1, Aggregation::Sum);
    case GraphEmbAgg::Max: return tape.segment_aggregate(h, seg, 1, Aggregation::Max);
  }
  return h;
}

// Per-edge class logits [not-in-tour, in-tour] and their softmax.
template <typename T>
struct NarOut {
  Var<T> logits;  // m x 2
  Var<T> probs;   // m x 2
};

template <typename T>
NarOut<T> nar_edge_logits(Tape<T>& tape, const ParameterSet<T>& ps, Var<T> h, Var<T> h_g,
                          const SparseGraph& g) {
  NC_REQUIRE(g.num_edges() > 0, "edge logits need a graph with edges");
  Var<T> hi = tape.gather_rows(h, g.edge_src);
  Var<T> hj = tape.gather_rows(h, g.edge_tgt);
  Var<T> hg = tape.broadcast_rows(h_g, g.num_edges());
  Var<T> x = tape.concat_cols({hg, hi, hj});
  Var<T> hidden = tape.relu(tape.matmul(x, param(tape, ps, "dec.w1")));
  Var<T> logits = tape.matmul(hidden, param(tape, ps, "dec.w2"));
  return {logits, tape.softmax_rows(logits)};
}

// Pre-sliced state for autoregressive steps over one instance.
template <typename T>
struct ArState {
  int n = 0;
  int heads = kArHeads;
  Var<T> h, h_g;
  std::vector<Var<T>> kh, vh;  // glimpse key/value slices per head, n x d/heads
  Var<T> wo, wc, wq;
  Var<T> k_logit;  // n x d
  Var<T> ph_first, ph_last;
};

template <typename T>
ArState<T> ar_prepare(Tape<T>& tape, const ParameterSet<T>& ps, Var<T> h, Var<T> h_g) {
  ArState<T> st;
  st.n = h.rows();
  st.h = h;
  st.h_g = h_g;
  const int d = h.cols();
  NC_REQUIRE(d % st.heads == 0, "hidden_dim " << d << " not divisible by " << st.heads);
  const int dk = d / st.heads;
  Var<T> k = tape.matmul(h, param(tape, ps, "dec.glimpse.wk"));
  Var<T> v = tape.matmul(h, param(tape, ps, "dec.glimpse.wv"));
  for (int m = 0; m < st.heads; ++m) {
    st.kh.push_back(tape.slice_cols(k, m * dk, dk));
    st.vh.push_back(tape.slice_cols(v, m * dk, dk));
  }
  st.wo = param(tape, ps, "dec.glimpse.wo");
  st.wc = param(tape, ps, "dec.wc");
  st.wq = param(tape, ps, "dec.wq");
  st.k_logit = tape.matmul(h, param(tape, ps, "dec.wk_logit"));
  st.ph_first = param(tape, ps, "dec.ph_first");
  st.ph_last = param(tape, ps, "dec.ph_last");
  return st;
}

template <typename T>
struct ArStepOut {
  Var<T> probs;      // 1 x n, visited entries exactly 0
  Var<T> log_probs;  // 1 x n, -inf at visited entries
};

// Unmasked logits for one decoding step. first/last are node indices, or -1
// before any node is chosen (learned placeholder vectors stand in). The
// context vector is used directly as the glimpse attention query, one slice
// per head; the glimpse output is projected and scored against every node
// with tanh-clipped logits, so every entry lies in [-C, C].
template <typename T>
Var<T> ar_raw_logits(Tape<T>& tape, const ArState<T>& st, int first, int last) {
  NC_REQUIRE((first < 0) == (last < 0), "placeholders stand in for both ends or neither");
  Var<T> h_last = last < 0 ? st.ph_last : tape.gather_rows(st.h, {last});
  Var<T> h_first = first < 0 ? st.ph_first : tape.gather_rows(st.h, {first});
  Var<T> ctx = tape.matmul(tape.concat_cols({st.h_g, h_last, h_first}), st.wc);

  const int d = st.h.cols();
  const int dk = d / st.heads;
  const T inv_sqrt_dk = T(1) / std::sqrt(static_cast<T>(dk));
  std::vector<Var<T>> head_out;
  head_out.reserve(st.heads);
  for (int m = 0; m < st.heads; ++m) {
    Var<T> qh = tape.slice_cols(ctx, m * dk, dk);
    Var<T> att = tape.softmax_rows(tape.scale(tape.matmul_nt(qh, st.kh[m]), inv_sqrt_dk));
    head_out.push_back(tape.matmul(att, st.vh[m]));
  }
  Var<T> h_c = tape.matmul(tape.concat_cols(head_out), st.wo);

  Var<T> q = tape.matmul(h_c, st.wq);
  return tape.scale(tape.tanh(tape.scale(tape.matmul_nt(q, st.k_logit),
                                         T(1) / std::sqrt(static_cast<T>(d)))),
                    T(kLogitClip));
}

// One decoding step: raw logits, visited nodes masked to -inf, softmax over
// all nodes.
template <typename T>
ArStepOut<T> ar_step(Tape<T>& tape, const ArState<T>& st, int first, int last,
                     const std::vector<uint8_t>& visited) {
  NC_REQUIRE(static_cast<int>(visited.size()) == st.n, "visited mask size mismatch");
  bool any_unvisited = false;
  for (uint8_t v : visited) any_unvisited = any_unvisited || !v;
  NC_REQUIRE(any_unvisited, "ar_step with all nodes visited");

  Var<T> raw = ar_raw_logits(tape, st, first, last);
  Var<T> masked = tape.masked_fill(raw, visited, -std::numeric_limits<T>::infinity());
  return {tape.softmax_rows(masked), tape.log_softmax_rows(masked)};
}

// Critic value head: mean graph embedding through a 2-layer MLP to a scalar.
template <typename T>
Var<T> critic_value(Tape<T>& tape, const ParameterSet<T>& ps, const ModelConfig& cfg,
                    const TspInstance& inst, const SparseGraph& g,
                    const ForwardOpts<T>& opts = {}) {
  EncodeResult<T> enc = encode(tape, ps, cfg, inst, g, opts);
  Var<T> h_g = graph_embedding(tape, enc.h, GraphEmbAgg::Mean);
  Var<T> hidden = tape.relu(tape.add_bias(tape.matmul(h_g, param(tape, ps, "critic.w1")),
                                          param(tape, ps, "critic.b1")));
  return tape.add_bias(tape.matmul(hidden, param(tape, ps, "critic.w2")),
                       param(tape, ps, "critic.b2"));
}

}  // namespace ncopt
