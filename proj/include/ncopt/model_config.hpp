#pragma once

#include <string>

#include <json.hpp>

#include "ncopt/graph.hpp"
#include "ncopt/tape.hpp"

namespace ncopt {

enum class EncoderVariant { Gnn, Mlp, Transformer, Rgnn };
enum class NormKind { None, BatchNormLearned, BatchNormBatchStats, LayerNorm };
enum class DecoderKind { Ar, Nar };
enum class GraphEmbAgg { Mean, Sum, Max };

std::string to_string(EncoderVariant v);
std::string to_string(NormKind n);
std::string to_string(DecoderKind d);
std::string to_string(GraphEmbAgg a);
EncoderVariant encoder_variant_from_string(const std::string& s);
NormKind norm_kind_from_string(const std::string& s);
DecoderKind decoder_kind_from_string(const std::string& s);
GraphEmbAgg graph_emb_agg_from_string(const std::string& s);
Aggregation aggregation_from_string(const std::string& s);

// Full architecture + input-graph description; stored inside checkpoints so
// a saved model carries everything needed to run it.
struct ModelConfig {
  EncoderVariant variant = EncoderVariant::Gnn;
  int layers = 3;  // 3 for AR, 4 for NAR when left unset in config files
  int hidden_dim = 128;
  Aggregation aggregation = Aggregation::Max;
  NormKind norm = NormKind::BatchNormBatchStats;
  int heads = 8;  // transformer encoder attention
  DecoderKind decoder = DecoderKind::Ar;
  GraphEmbAgg graph_emb = GraphEmbAgg::Mean;
  GraphSpec graph;

  static ModelConfig defaults(DecoderKind decoder);

  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

}  // namespace ncopt
