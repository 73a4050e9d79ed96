#include "ncopt/model_config.hpp"

namespace ncopt {

using nlohmann::json;

std::string to_string(EncoderVariant v) {
  switch (v) {
    case EncoderVariant::Gnn: return "gnn";
    case EncoderVariant::Mlp: return "mlp";
    case EncoderVariant::Transformer: return "transformer";
    case EncoderVariant::Rgnn: return "rgnn";
  }
  return "?";
}

std::string to_string(NormKind n) {
  switch (n) {
    case NormKind::None: return "none";
    case NormKind::BatchNormLearned: return "batchnorm-learned";
    case NormKind::BatchNormBatchStats: return "batchnorm-batch-stats";
    case NormKind::LayerNorm: return "layernorm";
  }
  return "?";
}

std::string to_string(DecoderKind d) { return d == DecoderKind::Ar ? "ar" : "nar"; }

std::string to_string(GraphEmbAgg a) {
  switch (a) {
    case GraphEmbAgg::Mean: return "mean";
    case GraphEmbAgg::Sum: return "sum";
    case GraphEmbAgg::Max: return "max";
  }
  return "?";
}

EncoderVariant encoder_variant_from_string(const std::string& s) {
  if (s == "gnn") return EncoderVariant::Gnn;
  if (s == "mlp") return EncoderVariant::Mlp;
  if (s == "transformer") return EncoderVariant::Transformer;
  if (s == "rgnn") return EncoderVariant::Rgnn;
  NC_REQUIRE(false, "unknown encoder variant '" << s << "'");
  return EncoderVariant::Gnn;
}

NormKind norm_kind_from_string(const std::string& s) {
  if (s == "none") return NormKind::None;
  if (s == "batchnorm-learned") return NormKind::BatchNormLearned;
  if (s == "batchnorm-batch-stats") return NormKind::BatchNormBatchStats;
  if (s == "layernorm") return NormKind::LayerNorm;
  NC_REQUIRE(false, "unknown normalization '" << s << "'");
  return NormKind::None;
}

DecoderKind decoder_kind_from_string(const std::string& s) {
  if (s == "ar") return DecoderKind::Ar;
  if (s == "nar") return DecoderKind::Nar;
  NC_REQUIRE(false, "unknown decoder '" << s << "'");
  return DecoderKind::Ar;
}

GraphEmbAgg graph_emb_agg_from_string(const std::string& s) {
  if (s == "mean") return GraphEmbAgg::Mean;
  if (s == "sum") return GraphEmbAgg::Sum;
  if (s == "max") return GraphEmbAgg::Max;
  NC_REQUIRE(false, "unknown graph embedding aggregation '" << s << "'");
  return GraphEmbAgg::Mean;
}

Aggregation aggregation_from_string(const std::string& s) {
  if (s == "sum") return Aggregation::Sum;
  if (s == "mean") return Aggregation::Mean;
  if (s == "max") return Aggregation::Max;
  NC_REQUIRE(false, "unknown aggregation '" << s << "'");
  return Aggregation::Sum;
}

ModelConfig ModelConfig::defaults(DecoderKind decoder) {
  ModelConfig cfg;
  cfg.decoder = decoder;
  cfg.layers = decoder == DecoderKind::Ar ? 3 : 4;
  return cfg;
}

void ModelConfig::validate() const {
  NC_REQUIRE(hidden_dim >= 1, "hidden_dim must be >= 1, got " << hidden_dim);
  NC_REQUIRE(layers >= 1, "layers must be >= 1, got " << layers);
  if (variant == EncoderVariant::Transformer) {
    NC_REQUIRE(heads >= 1, "transformer heads must be >= 1");
    NC_REQUIRE(hidden_dim % heads == 0,
               "hidden_dim " << hidden_dim << " not divisible by " << heads << " heads");
  }
  if (decoder == DecoderKind::Ar) {
    NC_REQUIRE(hidden_dim % 8 == 0,
               "AR decoding uses 8 attention heads; hidden_dim " << hidden_dim
                                                                 << " is not divisible by 8");
  }
  if (graph.mode == GraphMode::FixedDegree)
    NC_REQUIRE(graph.k >= 1, "fixed-degree graph needs k >= 1");
  if (graph.mode == GraphMode::FixedFraction)
    NC_REQUIRE(graph.f > 0.0 && graph.f <= 1.0, "fixed-fraction graph needs f in (0,1]");
}

json ModelConfig::to_json() const {
  json g{{"mode", to_string(graph.mode)}};
  if (graph.mode == GraphMode::FixedDegree) g["k"] = graph.k;
  if (graph.mode == GraphMode::FixedFraction) g["f"] = graph.f;
  return json{{"variant", to_string(variant)},
              {"layers", layers},
              {"hidden_dim", hidden_dim},
              {"aggregation", std::string(to_string(aggregation))},
              {"normalization", to_string(norm)},
              {"heads", heads},
              {"decoder", to_string(decoder)},
              {"graph_embedding", to_string(graph_emb)},
              {"graph", g}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  NC_REQUIRE(j.is_object(), "model config must be a JSON object");
  DecoderKind dec = DecoderKind::Ar;
  if (j.count("decoder")) dec = decoder_kind_from_string(j.at("decoder").get<std::string>());
  ModelConfig cfg = defaults(dec);
  if (j.count("variant")) cfg.variant = encoder_variant_from_string(j.at("variant").get<std::string>());
  if (j.count("layers")) cfg.layers = j.at("layers").get<int>();
  if (j.count("hidden_dim")) cfg.hidden_dim = j.at("hidden_dim").get<int>();
  if (j.count("aggregation"))
    cfg.aggregation = aggregation_from_string(j.at("aggregation").get<std::string>());
  if (j.count("normalization"))
    cfg.norm = norm_kind_from_string(j.at("normalization").get<std::string>());
  if (j.count("heads")) cfg.heads = j.at("heads").get<int>();
  if (j.count("graph_embedding"))
    cfg.graph_emb = graph_emb_agg_from_string(j.at("graph_embedding").get<std::string>());
  if (j.count("graph")) {
    const json& g = j.at("graph");
    cfg.graph.mode = graph_mode_from_string(g.at("mode").get<std::string>());
    if (cfg.graph.mode == GraphMode::FixedDegree) cfg.graph.k = g.at("k").get<int>();
    if (cfg.graph.mode == GraphMode::FixedFraction) cfg.graph.f = g.at("f").get<double>();
  }
  cfg.validate();
  return cfg;
}

}  // namespace ncopt
