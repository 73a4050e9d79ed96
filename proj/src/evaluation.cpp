#include "ncopt/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>

#include <json.hpp>

#include "ncopt/checkpoint.hpp"
#include "ncopt/threading.hpp"

namespace ncopt {

using nlohmann::json;

namespace {

// Two-sided 99% normal quantile.
constexpr double kZ99 = 2.5758293035489004;

std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

RefQuality ref_quality_from_string(const std::string& s) {
  if (s == "exact") return RefQuality::Exact;
  NC_REQUIRE(s == "heuristic-refined", "unknown reference quality '" << s << "'");
  return RefQuality::HeuristicRefined;
}

double l2_dist(const double* a, const double* b, int d) {
  double acc = 0.0;
  for (int k = 0; k < d; ++k) {
    const double diff = a[k] - b[k];
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

std::vector<double> graph_embedding_of(const Tensor<float>& h, GraphEmbAgg agg) {
  const int n = h.rows, d = h.cols;
  std::vector<double> g(d, 0.0);
  for (int k = 0; k < d; ++k) {
    double acc = agg == GraphEmbAgg::Max ? static_cast<double>(h.at(0, k)) : 0.0;
    for (int i = 0; i < n; ++i) {
      const double v = h.at(i, k);
      if (agg == GraphEmbAgg::Max)
        acc = std::max(acc, v);
      else
        acc += v;
    }
    g[k] = agg == GraphEmbAgg::Mean ? acc / n : acc;
  }
  return g;
}

DistSummary summarize_dist(std::vector<double> values) {
  DistSummary s;
  s.count = static_cast<int>(values.size());
  if (s.count > 0) s.pct = percentiles(std::move(values), kStatPercentiles);
  return s;
}

json dist_to_json(const DistSummary& s) {
  return json{{"count", s.count}, {"percentiles", s.pct}};
}

json record_to_json(const SizeRecord& r, const std::string& search) {
  json j{{"n", r.n},
         {"count", r.count},
         {"mean_gap_pct", r.mean_gap},
         {"ci99_half_width_pct", r.ci99_half_width},
         {"mean_tour_length", r.mean_tour_length},
         {"mean_ref_length", r.mean_ref_length},
         {"ref_quality", to_string(r.ref_quality)},
         {"search", search},
         {"fallbacks", r.fallback_count},
         {"negative_gap_seen", r.negative_gap_seen}};
  if (r.has_band) {
    j["band_lo_pct"] = r.band_lo;
    j["band_hi_pct"] = r.band_hi;
  }
  return j;
}

}  // namespace

double optimality_gap(double pred_length, double reference_length) {
  NC_REQUIRE(reference_length > 0.0,
             "optimality gap needs a positive reference, got " << reference_length);
  return 100.0 * (pred_length / reference_length - 1.0);
}

std::vector<double> percentiles(std::vector<double> values, const std::vector<double>& points) {
  NC_REQUIRE(!values.empty(), "percentiles of an empty sample");
  std::sort(values.begin(), values.end());
  std::vector<double> out;
  out.reserve(points.size());
  double prev = 0.0;
  for (size_t k = 0; k < points.size(); ++k) {
    const double p = points[k];
    NC_REQUIRE(p >= 0.0 && p <= 100.0, "percentile point " << p << " outside [0, 100]");
    NC_REQUIRE(k == 0 || p >= prev, "percentile points must be non-decreasing");
    prev = p;
    const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    out.push_back(values[lo] + frac * (values[hi] - values[lo]));
  }
  return out;
}

SizeRecord summarize_size(int n, const std::vector<double>& pred_lengths,
                          const std::vector<ReferenceSolution>& refs, int fallback_count,
                          bool percentile_band) {
  NC_REQUIRE(!pred_lengths.empty(), "summarize_size needs at least one instance");
  NC_REQUIRE(pred_lengths.size() == refs.size(), "predictions/references size mismatch");
  const size_t count = pred_lengths.size();
  for (const auto& r : refs)
    NC_REQUIRE(r.quality == refs[0].quality, "mixed reference qualities within one size");

  SizeRecord rec;
  rec.n = n;
  rec.count = static_cast<int>(count);
  rec.ref_quality = refs[0].quality;
  rec.fallback_count = fallback_count;

  std::vector<double> gaps(count);
  double gap_sum = 0.0, pred_sum = 0.0, ref_sum = 0.0;
  for (size_t i = 0; i < count; ++i) {
    gaps[i] = optimality_gap(pred_lengths[i], refs[i].length);
    if (rec.ref_quality == RefQuality::Exact)
      NC_CHECK(gaps[i] >= -1e-9, "tour beats an exact reference by " << -gaps[i] << "% at n=" << n);
    rec.negative_gap_seen = rec.negative_gap_seen || gaps[i] < 0.0;
    gap_sum += gaps[i];
    pred_sum += pred_lengths[i];
    ref_sum += refs[i].length;
  }
  rec.mean_gap = gap_sum / static_cast<double>(count);
  rec.mean_tour_length = pred_sum / static_cast<double>(count);
  rec.mean_ref_length = ref_sum / static_cast<double>(count);

  if (count > 1) {
    double ss = 0.0;
    for (double g : gaps) ss += (g - rec.mean_gap) * (g - rec.mean_gap);
    const double sd = std::sqrt(ss / static_cast<double>(count - 1));
    rec.ci99_half_width = kZ99 * sd / std::sqrt(static_cast<double>(count));
  }
  if (percentile_band) {
    rec.has_band = true;
    const auto band = percentiles(gaps, {0.5, 99.5});
    rec.band_lo = band[0];
    rec.band_hi = band[1];
  }
  return rec;
}

SizeRecord evaluate_size(const Model& model, const std::vector<TspInstance>& instances,
                         const std::vector<ReferenceSolution>& refs, const EvalOptions& opts) {
  NC_REQUIRE(!instances.empty(), "evaluate_size needs at least one instance");
  NC_REQUIRE(instances.size() == refs.size(), "instances/references size mismatch");
  const int n = instances[0].n();
  std::vector<double> lengths(instances.size());
  std::vector<int> fallbacks(instances.size());
  const Rng seed_root(opts.search.seed);
  parallel_for(0, static_cast<int64_t>(instances.size()), opts.threads, [&](int64_t i) {
    NC_REQUIRE(instances[i].n() == n, "mixed instance sizes within one evaluation batch");
    auto policy = model.make_policy(instances[i]);
    SearchConfig cfg = opts.search;
    cfg.seed = seed_root.child(static_cast<uint64_t>(i)).next();
    const SearchResult res = run_search(*policy, instances[i], cfg);
    lengths[i] = res.length;
    fallbacks[i] = res.fallback_count;
  });
  int fallback_total = 0;
  for (int f : fallbacks) fallback_total += f;
  return summarize_size(n, lengths, refs, fallback_total, opts.percentile_band);
}

SizeRecord evaluate_tours(const std::vector<TspInstance>& instances,
                          const std::vector<Tour>& pred_tours,
                          const std::vector<ReferenceSolution>& refs, bool percentile_band) {
  NC_REQUIRE(!instances.empty(), "evaluate_tours needs at least one instance");
  NC_REQUIRE(instances.size() == pred_tours.size() && instances.size() == refs.size(),
             "instances/tours/references size mismatch");
  const int n = instances[0].n();
  std::vector<double> lengths(instances.size());
  for (size_t i = 0; i < instances.size(); ++i) {
    NC_REQUIRE(instances[i].n() == n, "mixed instance sizes within one evaluation batch");
    require_valid_tour(pred_tours[i], n);
    lengths[i] = tour_length(instances[i], pred_tours[i]);
  }
  return summarize_size(n, lengths, refs, 0, percentile_band);
}

EvalReport evaluate_on(const Model& model, const std::string& checkpoint,
                       const std::map<int, Dataset>& test_sets, const EvalOptions& opts) {
  NC_REQUIRE(!test_sets.empty(), "no test sets to evaluate");
  EvalReport rep;
  rep.checkpoint = checkpoint;
  rep.search = opts.search.describe();
  rep.seed = opts.seed;
  rep.timestamp = utc_timestamp();
  for (const auto& [n, ds] : test_sets) {
    NC_REQUIRE(ds.labeled(), "test set at n=" << n << " has no reference tours");
    ds.validate();
    std::vector<ReferenceSolution> refs(ds.size());
    for (size_t i = 0; i < ds.size(); ++i) {
      NC_REQUIRE(ds.instances[i].n() == n, "test set keyed n=" << n << " holds an instance of size "
                                                               << ds.instances[i].n());
      refs[i] = {ds.tours[i], tour_length(ds.instances[i], ds.tours[i]), ref_quality_for(n)};
    }
    rep.sizes.push_back(evaluate_size(model, ds.instances, refs, opts));
  }
  return rep;
}

EvalReport evaluate(const std::string& checkpoint_path, const std::vector<int>& sizes,
                    int per_size, const EvalOptions& opts) {
  NC_REQUIRE(per_size >= 1, "per-size instance count must be >= 1");
  NC_REQUIRE(!sizes.empty(), "no sizes to evaluate");
  const Model model = Model::load(checkpoint_path);
  EvalReport rep;
  rep.checkpoint = checkpoint_id(checkpoint_path);
  rep.search = opts.search.describe();
  rep.seed = opts.seed;
  rep.timestamp = utc_timestamp();
  const Rng root(opts.seed);
  for (int n : sizes) {
    Rng stream = root.child(static_cast<uint64_t>(n));
    const std::vector<TspInstance> insts = sample_instances(per_size, n, stream);
    std::vector<ReferenceSolution> refs(insts.size());
    parallel_for(0, static_cast<int64_t>(insts.size()), opts.threads,
                 [&](int64_t i) { refs[i] = reference_tour(insts[i]); });
    rep.sizes.push_back(evaluate_size(model, insts, refs, opts));
  }
  return rep;
}

std::string EvalReport::to_json() const {
  json j{{"format", "ncopt-eval-1"},
         {"checkpoint", checkpoint},
         {"search", search},
         {"seed", seed},
         {"timestamp", timestamp},
         {"sizes", json::array()}};
  for (const auto& r : sizes) j["sizes"].push_back(record_to_json(r, search));
  return j.dump(2);
}

std::string EvalReport::to_csv() const {
  std::string out =
      "n,count,mean_gap_pct,ci99_half_width_pct,mean_tour_length,mean_ref_length,"
      "ref_quality,search,fallbacks\n";
  for (const auto& r : sizes) {
    out += std::to_string(r.n) + ',' + std::to_string(r.count) + ',' + fmt_g(r.mean_gap) + ',' +
           fmt_g(r.ci99_half_width) + ',' + fmt_g(r.mean_tour_length) + ',' +
           fmt_g(r.mean_ref_length) + ',' + to_string(r.ref_quality) + ',' + csv_quote(search) +
           ',' + std::to_string(r.fallback_count) + '\n';
  }
  return out;
}

EvalReport eval_report_from_json(const std::string& text) {
  const json j = json::parse(text);
  NC_REQUIRE(j.value("format", "") == "ncopt-eval-1",
             "not an evaluation report: format '" << j.value("format", "") << "'");
  EvalReport rep;
  rep.checkpoint = j.at("checkpoint").get<std::string>();
  rep.search = j.at("search").get<std::string>();
  rep.seed = j.at("seed").get<uint64_t>();
  rep.timestamp = j.at("timestamp").get<std::string>();
  for (const auto& e : j.at("sizes")) {
    SizeRecord r;
    r.n = e.at("n").get<int>();
    r.count = e.at("count").get<int>();
    r.mean_gap = e.at("mean_gap_pct").get<double>();
    r.ci99_half_width = e.at("ci99_half_width_pct").get<double>();
    r.mean_tour_length = e.at("mean_tour_length").get<double>();
    r.mean_ref_length = e.at("mean_ref_length").get<double>();
    r.ref_quality = ref_quality_from_string(e.at("ref_quality").get<std::string>());
    r.fallback_count = e.at("fallbacks").get<int>();
    r.negative_gap_seen = e.at("negative_gap_seen").get<bool>();
    if (e.contains("band_lo_pct")) {
      r.has_band = true;
      r.band_lo = e.at("band_lo_pct").get<double>();
      r.band_hi = e.at("band_hi_pct").get<double>();
    }
    rep.sizes.push_back(r);
  }
  return rep;
}

std::vector<SizeEmbeddingStats> embedding_stats(const Model& model, const std::vector<int>& sizes,
                                                int graphs_per_size, uint64_t seed, int threads) {
  NC_REQUIRE(graphs_per_size >= 1, "need at least one graph per size");
  std::vector<SizeEmbeddingStats> out;
  const Rng root(seed);
  for (int n : sizes) {
    Rng stream = root.child(static_cast<uint64_t>(n));
    const std::vector<TspInstance> insts = sample_instances(graphs_per_size, n, stream);
    std::vector<Tensor<float>> embs(insts.size());
    parallel_for(0, static_cast<int64_t>(insts.size()), threads,
                 [&](int64_t i) { embs[i] = model.node_embeddings(insts[i]); });

    SizeEmbeddingStats s;
    s.n = n;
    s.graphs = graphs_per_size;
    std::vector<double> node_norms, intra, graph_norms, inter;
    std::vector<std::vector<double>> gembs;
    for (const auto& h : embs) {
      const int d = h.cols;
      std::vector<std::vector<double>> rows(h.rows, std::vector<double>(d));
      for (int i = 0; i < h.rows; ++i) {
        double sq = 0.0;
        for (int k = 0; k < d; ++k) {
          rows[i][k] = h.at(i, k);
          sq += rows[i][k] * rows[i][k];
        }
        node_norms.push_back(std::sqrt(sq));
      }
      for (int i = 0; i < h.rows; ++i)
        for (int jn = i + 1; jn < h.rows; ++jn)
          intra.push_back(l2_dist(rows[i].data(), rows[jn].data(), d));
      std::vector<double> g = graph_embedding_of(h, model.config().graph_emb);
      double sq = 0.0;
      for (double v : g) sq += v * v;
      graph_norms.push_back(std::sqrt(sq));
      gembs.push_back(std::move(g));
    }
    for (size_t a = 0; a < gembs.size(); ++a)
      for (size_t b = a + 1; b < gembs.size(); ++b)
        inter.push_back(l2_dist(gembs[a].data(), gembs[b].data(), static_cast<int>(gembs[a].size())));

    s.node_norms = summarize_dist(std::move(node_norms));
    s.intra_graph_dists = summarize_dist(std::move(intra));
    s.graph_norms = summarize_dist(std::move(graph_norms));
    s.inter_graph_dists = summarize_dist(std::move(inter));
    out.push_back(std::move(s));
  }
  return out;
}

std::string embedding_stats_to_json(const std::vector<SizeEmbeddingStats>& stats) {
  json j{{"format", "ncopt-embstats-1"},
         {"percentile_points", kStatPercentiles},
         {"sizes", json::array()}};
  for (const auto& s : stats)
    j["sizes"].push_back(json{{"n", s.n},
                              {"graphs", s.graphs},
                              {"node_norms", dist_to_json(s.node_norms)},
                              {"intra_graph_dists", dist_to_json(s.intra_graph_dists)},
                              {"graph_norms", dist_to_json(s.graph_norms)},
                              {"inter_graph_dists", dist_to_json(s.inter_graph_dists)}});
  return j.dump(2);
}

GraphEmbeddings collect_graph_embeddings(const Model& model, const std::vector<int>& sizes,
                                         int per_size, uint64_t seed, int threads) {
  NC_REQUIRE(per_size >= 1, "need at least one instance per size");
  GraphEmbeddings out;
  const Rng root(seed);
  for (int n : sizes) {
    Rng stream = root.child(static_cast<uint64_t>(n));
    const std::vector<TspInstance> insts = sample_instances(per_size, n, stream);
    std::vector<std::vector<double>> gembs(insts.size());
    parallel_for(0, static_cast<int64_t>(insts.size()), threads, [&](int64_t i) {
      gembs[i] = graph_embedding_of(model.node_embeddings(insts[i]), model.config().graph_emb);
    });
    for (auto& g : gembs) {
      out.size_of_row.push_back(n);
      out.rows.push_back(std::move(g));
    }
  }
  return out;
}

SymEigen eigen_sym(std::vector<std::vector<double>> a) {
  const int d = static_cast<int>(a.size());
  NC_REQUIRE(d >= 1, "eigen_sym of an empty matrix");
  double frob_sq = 0.0;
  for (int i = 0; i < d; ++i) {
    NC_REQUIRE(static_cast<int>(a[i].size()) == d, "eigen_sym needs a square matrix");
    for (int jc = 0; jc < d; ++jc) frob_sq += a[i][jc] * a[i][jc];
  }
  const double scale = std::sqrt(frob_sq);
  for (int i = 0; i < d; ++i)
    for (int jc = i + 1; jc < d; ++jc) {
      NC_REQUIRE(std::abs(a[i][jc] - a[jc][i]) <= 1e-9 * std::max(1.0, scale),
                 "eigen_sym needs a symmetric matrix");
      a[i][jc] = a[jc][i] = 0.5 * (a[i][jc] + a[jc][i]);
    }

  std::vector<std::vector<double>> v(d, std::vector<double>(d, 0.0));
  for (int i = 0; i < d; ++i) v[i][i] = 1.0;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off_sq = 0.0;
    for (int p = 0; p < d; ++p)
      for (int q = p + 1; q < d; ++q) off_sq += a[p][q] * a[p][q];
    if (off_sq <= 1e-28 * std::max(1e-300, frob_sq)) break;

    for (int p = 0; p < d - 1; ++p) {
      for (int q = p + 1; q < d; ++q) {
        const double apq = a[p][q];
        if (std::abs(apq) <= 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * apq);
        const double t =
            (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        a[p][p] -= t * apq;
        a[q][q] += t * apq;
        a[p][q] = a[q][p] = 0.0;
        for (int k = 0; k < d; ++k) {
          if (k != p && k != q) {
            const double akp = a[k][p], akq = a[k][q];
            a[k][p] = a[p][k] = c * akp - s * akq;
            a[k][q] = a[q][k] = s * akp + c * akq;
          }
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<int> order(d);
  for (int i = 0; i < d; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return a[x][x] > a[y][y]; });

  SymEigen out;
  out.values.reserve(d);
  out.vectors.reserve(d);
  for (int idx : order) {
    out.values.push_back(a[idx][idx]);
    std::vector<double> col(d);
    for (int k = 0; k < d; ++k) col[k] = v[k][idx];
    out.vectors.push_back(std::move(col));
  }
  return out;
}

Pca2d pca2d(const std::vector<std::vector<double>>& embeddings) {
  const int m = static_cast<int>(embeddings.size());
  NC_REQUIRE(m >= 3, "pca2d needs at least 3 embeddings, got " << m);
  const int d = static_cast<int>(embeddings[0].size());
  NC_REQUIRE(d >= 1, "pca2d needs non-empty embeddings");
  for (const auto& e : embeddings)
    NC_REQUIRE(static_cast<int>(e.size()) == d, "pca2d embeddings disagree on dimension");

  std::vector<double> mean(d, 0.0);
  for (const auto& e : embeddings)
    for (int k = 0; k < d; ++k) mean[k] += e[k];
  for (double& v : mean) v /= m;

  std::vector<std::vector<double>> centered(m, std::vector<double>(d));
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < d; ++k) centered[i][k] = embeddings[i][k] - mean[k];

  std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
  for (int i = 0; i < m; ++i)
    for (int r = 0; r < d; ++r)
      for (int c = r; c < d; ++c) cov[r][c] += centered[i][r] * centered[i][c];
  for (int r = 0; r < d; ++r)
    for (int c = r; c < d; ++c) cov[r][c] = cov[c][r] = cov[r][c] / (m - 1);

  const SymEigen eig = eigen_sym(cov);
  double total = 0.0;
  for (double lam : eig.values) total += std::max(lam, 0.0);
  const double lam1 = std::max(eig.values[0], 0.0);
  const double lam2 = d >= 2 ? std::max(eig.values[1], 0.0) : 0.0;

  Pca2d out;
  const double tiny = 1e-12;
  const int rank = (lam1 > tiny ? 1 : 0) + (lam2 > std::max(tiny, 1e-9 * lam1) ? 1 : 0);
  out.rank = rank;
  if (rank < 2)
    out.warning = "covariance rank " + std::to_string(rank) + " < 2; projection degenerates";
  if (total > 0.0) {
    out.explained_variance_ratio[0] = lam1 / total;
    out.explained_variance_ratio[1] = lam2 / total;
  }
  out.proj.resize(m, {0.0, 0.0});
  for (int i = 0; i < m; ++i) {
    if (rank >= 1)
      for (int k = 0; k < d; ++k) out.proj[i][0] += centered[i][k] * eig.vectors[0][k];
    if (rank >= 2)
      for (int k = 0; k < d; ++k) out.proj[i][1] += centered[i][k] * eig.vectors[1][k];
  }
  return out;
}

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace ncopt
