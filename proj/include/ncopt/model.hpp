#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ncopt/graph.hpp"
#include "ncopt/model_config.hpp"
#include "ncopt/net.hpp"
#include "ncopt/search.hpp"

namespace ncopt {

// Edge-in-tour probabilities over the directed sparse edges of one instance.
// Non-edges carry probability 0 implicitly.
struct Heatmap {
  SparseGraph graph;
  std::vector<double> prob;
};

std::string heatmap_to_json(const Heatmap& hm);

// Float32 policy model: configuration plus parameter store, with checkpoint
// IO and inference entry points. Training code mutates params() in place.
class Model {
 public:
  Model(const ModelConfig& cfg, uint64_t seed);
  static Model load(const std::string& path);
  void save(const std::string& path) const;

  const ModelConfig& config() const { return cfg_; }
  ParameterSet<float>& params() { return ps_; }
  const ParameterSet<float>& params() const { return ps_; }
  int64_t num_trainable() const { return ps_.num_trainable(); }

  SparseGraph build_graph(const TspInstance& inst) const;

  // Inference-mode (running-statistics) encoder output, one row per node.
  Tensor<float> node_embeddings(const TspInstance& inst) const;

  // Edge heatmap; rejects autoregressive configurations.
  Heatmap heatmap(const TspInstance& inst) const;

  // Sequential decoding view over one instance for the search strategies.
  std::unique_ptr<StepPolicy> make_policy(const TspInstance& inst) const;

 private:
  Model() = default;
  ModelConfig cfg_;
  ParameterSet<float> ps_;
};

}  // namespace ncopt
