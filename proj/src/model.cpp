#include "ncopt/model.hpp"

#include <cmath>
#include <map>
#include <utility>

#include <json.hpp>

#include "ncopt/checkpoint.hpp"

namespace ncopt {

namespace {

// Autoregressive policy over one instance: a single gradient-free tape holds
// the encoder output and glimpse key/value slices; each step appends scratch
// nodes and truncates them away again. Raw logits depend only on the
// (first, last) endpoint pair, so rows are cached across beam hypotheses.
class ArPolicy final : public StepPolicy {
 public:
  ArPolicy(const ParameterSet<float>& ps, const ModelConfig& cfg, const TspInstance& inst,
           const SparseGraph& graph)
      : inst_(inst), tape_(/*grad_enabled=*/false) {
    EncodeResult<float> enc = encode(tape_, ps, cfg, inst, graph);
    Var<float> hg = graph_embedding(tape_, enc.h, cfg.graph_emb);
    st_ = ar_prepare(tape_, ps, enc.h, hg);
    mark_ = tape_.mark();
  }

  int n() const override { return inst_.n(); }
  bool scores_start() const override { return true; }

  std::vector<double> step_probs(const std::vector<int>& prefix,
                                 const std::vector<uint8_t>& visited) override {
    const int nn = inst_.n();
    NC_REQUIRE(static_cast<int>(visited.size()) == nn, "visited mask size mismatch");
    const int first = prefix.empty() ? -1 : prefix.front();
    const int last = prefix.empty() ? -1 : prefix.back();
    const std::vector<double>& raw = raw_logits(first, last);

    // Masked softmax over unvisited nodes, in double for stable search math.
    double m = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < nn; ++j)
      if (!visited[j] && raw[j] > m) m = raw[j];
    NC_REQUIRE(std::isfinite(m), "step over an all-visited mask");
    double sum = 0;
    std::vector<double> p(nn, 0.0);
    for (int j = 0; j < nn; ++j) {
      if (visited[j]) continue;
      p[j] = std::exp(raw[j] - m);
      sum += p[j];
    }
    for (int j = 0; j < nn; ++j) p[j] /= sum;
    return p;
  }

 private:
  const std::vector<double>& raw_logits(int first, int last) {
    const auto key = std::make_pair(first, last);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    Var<float> raw = ar_raw_logits(tape_, st_, first, last);
    std::vector<double> row(raw.value().data.begin(), raw.value().data.end());
    tape_.truncate(mark_);
    return cache_.emplace(key, std::move(row)).first->second;
  }

  TspInstance inst_;
  Tape<float> tape_;
  ArState<float> st_;
  size_t mark_ = 0;
  std::map<std::pair<int, int>, std::vector<double>> cache_;
};

// Heatmap policy: raw edge probabilities of the current node's unvisited
// sparse out-neighbors, zero everywhere else. Cannot score the start node.
class NarPolicy final : public StepPolicy {
 public:
  NarPolicy(Heatmap hm, const TspInstance& inst) : inst_(inst), hm_(std::move(hm)) {}

  int n() const override { return inst_.n(); }
  bool scores_start() const override { return false; }

  std::vector<double> step_probs(const std::vector<int>& prefix,
                                 const std::vector<uint8_t>& visited) override {
    NC_REQUIRE(!prefix.empty(), "edge-heatmap policy cannot score the first tour position");
    NC_REQUIRE(static_cast<int>(visited.size()) == inst_.n(), "visited mask size mismatch");
    const int last = prefix.back();
    std::vector<double> p(inst_.n(), 0.0);
    const SparseGraph& g = hm_.graph;
    for (int e = g.row_offset[last]; e < g.row_offset[last + 1]; ++e) {
      const int j = g.edge_tgt[e];
      if (!visited[j]) p[j] = hm_.prob[e];
    }
    return p;
  }

 private:
  TspInstance inst_;
  Heatmap hm_;
};

}  // namespace

std::string heatmap_to_json(const Heatmap& hm) {
  nlohmann::json edges = nlohmann::json::array();
  for (int e = 0; e < hm.graph.num_edges(); ++e)
    edges.push_back({{"src", hm.graph.edge_src[e]},
                     {"tgt", hm.graph.edge_tgt[e]},
                     {"prob", hm.prob[e]}});
  nlohmann::json j{{"n", hm.graph.n}, {"graph", to_string(hm.graph.spec.mode)}, {"edges", edges}};
  return j.dump();
}

Model::Model(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  ps_ = init_model_params<float>(cfg_, seed);
}

Model Model::load(const std::string& path) {
  LoadedCheckpoint lc = load_checkpoint(path);
  Model m;
  m.cfg_ = ModelConfig::from_json(lc.config);

  // The stored directory must match the architecture exactly: same tensors,
  // same order, same shapes, same trainable flags.
  ParameterSet<float> expected = init_model_params<float>(m.cfg_, 0);
  NC_REQUIRE(lc.params.names() == expected.names(),
             "checkpoint tensor directory does not match the stored config");
  for (const auto& name : expected.names()) {
    const Tensor<float>& got = lc.params.at(name);
    const Tensor<float>& want = expected.at(name);
    NC_REQUIRE(got.rows == want.rows && got.cols == want.cols,
               "checkpoint tensor '" << name << "' has shape " << got.shape_str()
                                     << ", expected " << want.shape_str());
    NC_REQUIRE(lc.params.trainable(name) == expected.trainable(name),
               "checkpoint tensor '" << name << "' trainable flag mismatch");
  }
  m.ps_ = std::move(lc.params);
  return m;
}

void Model::save(const std::string& path) const { save_checkpoint(path, cfg_.to_json(), ps_); }

SparseGraph Model::build_graph(const TspInstance& inst) const {
  return sparsify(inst, cfg_.graph);
}

Tensor<float> Model::node_embeddings(const TspInstance& inst) const {
  SparseGraph g = build_graph(inst);
  Tape<float> tape(/*grad_enabled=*/false);
  return encode(tape, ps_, cfg_, inst, g).h.value();
}

Heatmap Model::heatmap(const TspInstance& inst) const {
  NC_REQUIRE(cfg_.decoder == DecoderKind::Nar,
             "heatmap requires an edge-predicting (nar) decoder");
  Heatmap hm;
  hm.graph = build_graph(inst);
  Tape<float> tape(/*grad_enabled=*/false);
  EncodeResult<float> enc = encode(tape, ps_, cfg_, inst, hm.graph);
  Var<float> hg = graph_embedding(tape, enc.h, cfg_.graph_emb);
  NarOut<float> out = nar_edge_logits(tape, ps_, enc.h, hg, hm.graph);
  hm.prob.resize(hm.graph.num_edges());
  for (int e = 0; e < hm.graph.num_edges(); ++e)
    hm.prob[e] = static_cast<double>(out.probs.value().at(e, 1));  // column 1 = in-tour class
  return hm;
}

std::unique_ptr<StepPolicy> Model::make_policy(const TspInstance& inst) const {
  if (cfg_.decoder == DecoderKind::Ar)
    return std::make_unique<ArPolicy>(ps_, cfg_, inst, build_graph(inst));
  return std::make_unique<NarPolicy>(heatmap(inst), inst);
}

}  // namespace ncopt
