#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ncopt/checkpoint.hpp"
#include "ncopt/dataset.hpp"
#include "ncopt/evaluation.hpp"
#include "ncopt/model.hpp"
#include "ncopt/oracles.hpp"
#include "ncopt/svg.hpp"
#include "ncopt/threading.hpp"
#include "ncopt/training.hpp"

namespace ncopt {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Collects everything a run produces so the manifest can list it and a
// failed run can delete it. The manifest is written last: its presence
// marks a completed run.
struct RunContext {
  fs::path out_dir;
  json flags = json::object();
  json extra = json::object();
  std::vector<std::string> artifacts;

  explicit RunContext(const std::string& out) : out_dir(out) {
    NC_REQUIRE(!out.empty(), "--out directory is required");
    fs::create_directories(out_dir);
  }

  std::string path(const std::string& rel) {
    artifacts.push_back(rel);
    return (out_dir / rel).string();
  }

  void note(const std::string& rel) { artifacts.push_back(rel); }

  void write_manifest(const std::string& subcommand, uint64_t seed, int threads) {
    json m{{"format", "ncopt-run-1"}, {"subcommand", subcommand}, {"version", kVersion},
           {"seed", seed},            {"threads", threads},       {"flags", flags},
           {"timestamp", utc_timestamp()},                        {"artifacts", artifacts}};
    for (auto& [k, v] : extra.items()) m[k] = v;
    std::ofstream f(out_dir / "manifest.json");
    f << m.dump(2) << "\n";
    NC_CHECK(f.good(), "failed to write manifest under " << out_dir.string());
  }

  void remove_artifacts() {
    for (const auto& rel : artifacts) {
      std::error_code ec;
      fs::remove(out_dir / rel, ec);
    }
  }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  NC_CHECK(f.good(), "failed to write " << path);
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  NC_REQUIRE(f.good(), "cannot open " << path);
  std::stringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

uint64_t env_seed_fallback() {
  const char* env = std::getenv("NCOPT_SEED");
  if (env == nullptr || *env == '\0') return 0;
  try {
    size_t used = 0;
    const uint64_t v = std::stoull(env, &used);
    NC_REQUIRE(used == std::string(env).size(), "trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(std::string("NCOPT_SEED is not an unsigned integer: ") + env);
  }
}

// The manifest reference rides in a trailing comment so the file stays a
// standalone well-formed SVG.
std::string with_manifest_comment(std::string svg) {
  svg += "<!-- manifest: manifest.json -->\n";
  return svg;
}

// ---- generate ----

struct GenerateArgs {
  std::vector<int> sizes;
  int count = 100;
  bool labeled = false;
  bool heuristic_labels = false;
  uint64_t seed = 0;
  int threads = 0;
  std::string out;
};

int cmd_generate(const GenerateArgs& a) {
  RunContext ctx(a.out);
  ctx.flags = json{{"sizes", a.sizes},     {"count", a.count},
                   {"labeled", a.labeled}, {"heuristic_labels", a.heuristic_labels},
                   {"seed", a.seed},       {"out", a.out}};
  NC_REQUIRE(!a.sizes.empty(), "--sizes is required");
  NC_REQUIRE(a.count >= 1, "--count must be >= 1");
  for (int n : a.sizes)
    NC_REQUIRE(!a.labeled || n <= kExactRefMaxN || a.heuristic_labels,
               "exact labels stop at n=" << kExactRefMaxN << "; pass --heuristic-labels for n="
                                         << n);
  try {
    const int threads = resolve_threads(a.threads);
    const Rng root(a.seed);
    json sets = json::array();
    for (int n : a.sizes) {
      Rng stream = root.child(static_cast<uint64_t>(n));
      Dataset ds;
      ds.instances = sample_instances(a.count, n, stream);
      if (a.labeled) {
        ds.tours.resize(a.count);
        parallel_for(0, a.count, threads,
                     [&](int64_t i) { ds.tours[i] = reference_tour(ds.instances[i]).tour; });
      }
      const std::string rel =
          "tsp" + std::to_string(n) + (a.labeled ? "_labeled" : "") + ".txt";
      write_dataset(ds, ctx.path(rel));
      sets.push_back(json{{"file", rel},
                          {"n", n},
                          {"count", a.count},
                          {"labeled", a.labeled},
                          {"ref_quality", a.labeled ? to_string(ref_quality_for(n)) : "none"}});
      std::cout << "wrote " << rel << " (" << a.count << " instances of n=" << n << ")\n";
    }
    ctx.extra["datasets"] = sets;
    ctx.write_manifest("generate", a.seed, threads);
    return 0;
  } catch (...) {
    ctx.remove_artifacts();
    throw;
  }
}

// ---- solve ----

enum class SolverKind {
  BruteForce,
  HeldKarp,
  Reference,
  FurthestInsertion,
  NearestInsertion,
  RandomInsertion,
  TwoOpt
};

SolverKind solver_from_string(const std::string& s) {
  if (s == "brute-force") return SolverKind::BruteForce;
  if (s == "held-karp") return SolverKind::HeldKarp;
  if (s == "reference") return SolverKind::Reference;
  if (s == "furthest-insertion") return SolverKind::FurthestInsertion;
  if (s == "nearest-insertion") return SolverKind::NearestInsertion;
  if (s == "random-insertion") return SolverKind::RandomInsertion;
  if (s == "two-opt") return SolverKind::TwoOpt;
  throw std::invalid_argument("unknown solver '" + s + "'");
}

struct SolveArgs {
  std::string solver = "reference";
  std::string in;
  uint64_t seed = 0;
  int threads = 0;
  std::string out;
};

int cmd_solve(const SolveArgs& a) {
  RunContext ctx(a.out);
  ctx.flags =
      json{{"solver", a.solver}, {"in", a.in}, {"seed", a.seed}, {"out", a.out}};
  const SolverKind kind = solver_from_string(a.solver);
  try {
    const int threads = resolve_threads(a.threads);
    const Dataset in = read_dataset(a.in);
    NC_REQUIRE(!in.instances.empty(), "input dataset " << a.in << " is empty");
    Dataset solved;
    solved.instances = in.instances;
    solved.tours.resize(in.size());
    const Rng root(a.seed);
    parallel_for(0, static_cast<int64_t>(in.size()), threads, [&](int64_t i) {
      const TspInstance& inst = in.instances[i];
      Rng rng = root.child(static_cast<uint64_t>(i));
      switch (kind) {
        case SolverKind::BruteForce: solved.tours[i] = brute_force(inst).tour; break;
        case SolverKind::HeldKarp: solved.tours[i] = held_karp(inst).tour; break;
        case SolverKind::Reference: solved.tours[i] = reference_tour(inst).tour; break;
        case SolverKind::FurthestInsertion:
          solved.tours[i] = insertion(inst, InsertionRule::Furthest, rng);
          break;
        case SolverKind::NearestInsertion:
          solved.tours[i] = insertion(inst, InsertionRule::Nearest, rng);
          break;
        case SolverKind::RandomInsertion:
          solved.tours[i] = insertion(inst, InsertionRule::Random, rng);
          break;
        case SolverKind::TwoOpt:
          solved.tours[i] = two_opt(inst, insertion(inst, InsertionRule::Furthest, rng), 50);
          break;
      }
    });
    double mean_len = 0.0;
    for (size_t i = 0; i < solved.size(); ++i)
      mean_len += tour_length(solved.instances[i], solved.tours[i]);
    mean_len /= static_cast<double>(solved.size());
    write_dataset(solved, ctx.path("solved.txt"));
    ctx.extra["mean_length"] = mean_len;
    ctx.write_manifest("solve", a.seed, threads);
    std::cout << "solved " << solved.size() << " instances with " << a.solver
              << ", mean length " << mean_len << "\n";
    return 0;
  } catch (...) {
    ctx.remove_artifacts();
    throw;
  }
}

// ---- train ----

struct TrainArgs {
  std::string config;
  uint64_t seed = 0;
  bool seed_given = false;
  int threads = 0;
  bool threads_given = false;
  std::string out;
};

int cmd_train(const TrainArgs& a) {
  RunContext ctx(a.out);
  const json cfg_json = json::parse(read_text(a.config));
  ctx.flags = json{{"config", a.config}, {"out", a.out}};
  try {
    NC_REQUIRE(cfg_json.contains("train"), "config lacks a 'train' section");
    TrainConfig tc = train_config_from_json(cfg_json.at("train"));
    if (a.seed_given) tc.seed = a.seed;
    if (a.threads_given) tc.threads = a.threads;
    tc.threads = resolve_threads(tc.threads);
    tc.out_dir = a.out;

    ModelConfig mc = cfg_json.contains("model") ? ModelConfig::from_json(cfg_json.at("model"))
                                                : ModelConfig::defaults(DecoderKind::Ar);

    Dataset data;
    if (cfg_json.contains("data")) {
      data = read_dataset(cfg_json.at("data").get<std::string>());
    } else {
      NC_REQUIRE(tc.paradigm == TrainParadigm::Rl,
                 "supervised training needs a 'data' entry in the config");
    }
    std::map<int, Dataset> eval_sets;
    if (cfg_json.contains("eval_sets"))
      for (const auto& [key, path] : cfg_json.at("eval_sets").items()) {
        const Dataset es = read_dataset(path.get<std::string>());
        NC_REQUIRE(es.labeled(), "eval set " << path << " has no reference tours");
        eval_sets[std::stoi(key)] = es;
      }

    Model model = cfg_json.contains("init_checkpoint")
                      ? Model::load(cfg_json.at("init_checkpoint").get<std::string>())
                      : Model(mc, Rng(tc.seed).child(0x30D31).next());
    ctx.extra["config"] = cfg_json;
    ctx.extra["trainable_parameters"] = model.num_trainable();

    const TrainResult result = train(model, tc, data, eval_sets);
    for (const auto& e : result.epochs) {
      std::cout << "epoch " << e.epoch << ": loss " << e.train_loss << ", samples "
                << e.samples_seen;
      for (const auto& [n, gap] : e.eval_gap) std::cout << ", gap@" << n << " " << gap << "%";
      std::cout << "\n";
      if (!e.checkpoint_path.empty())
        ctx.note(fs::relative(e.checkpoint_path, ctx.out_dir).string());
    }
    if (!result.log_path.empty())
      ctx.note(fs::relative(result.log_path, ctx.out_dir).string());
    ctx.write_manifest("train", tc.seed, tc.threads);
    return 0;
  } catch (...) {
    ctx.remove_artifacts();
    throw;
  }
}

// ---- eval ----

struct EvalArgs {
  std::string checkpoint;
  std::string testset;
  std::vector<int> sizes;
  int count = 100;
  std::string search = "greedy";
  int beam_width = 128;
  std::string selection = "highest-probability";
  bool band = false;
  uint64_t seed = 0;
  int threads = 0;
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  RunContext ctx(a.out);
  ctx.flags = json{{"checkpoint", a.checkpoint},
                   {"testset", a.testset},
                   {"sizes", a.sizes},
                   {"count", a.count},
                   {"search", a.search},
                   {"beam_width", a.beam_width},
                   {"selection", a.selection},
                   {"band", a.band},
                   {"seed", a.seed},
                   {"out", a.out}};
  NC_REQUIRE(a.testset.empty() != a.sizes.empty(),
             "pass exactly one of --testset or --sizes");
  EvalOptions opts;
  opts.search.strategy = search_strategy_from_string(a.search);
  opts.search.width = opts.search.strategy == SearchStrategy::Greedy ? 1 : a.beam_width;
  opts.search.selection = beam_selection_from_string(a.selection);
  opts.search.seed = a.seed;
  opts.search.validate();
  opts.seed = a.seed;
  opts.threads = resolve_threads(a.threads);
  opts.percentile_band = a.band;
  try {
    EvalReport rep;
    if (!a.testset.empty()) {
      const Model model = Model::load(a.checkpoint);
      const Dataset ds = read_dataset(a.testset);
      rep = evaluate_on(model, checkpoint_id(a.checkpoint), group_by_size(ds), opts);
    } else {
      rep = evaluate(a.checkpoint, a.sizes, a.count, opts);
    }
    json rj = json::parse(rep.to_json());
    rj["manifest"] = "manifest.json";
    write_text(ctx.path("report.json"), rj.dump(2) + "\n");
    write_text(ctx.path("report.csv"), rep.to_csv());
    ctx.write_manifest("eval", a.seed, opts.threads);
    for (const auto& r : rep.sizes)
      std::cout << "n=" << r.n << ": mean gap " << r.mean_gap << "% +- " << r.ci99_half_width
                << " (" << r.count << " instances, " << to_string(r.ref_quality)
                << " refs)\n";
    return 0;
  } catch (...) {
    ctx.remove_artifacts();
    throw;
  }
}

// ---- plot ----

struct PlotArgs {
  std::vector<std::string> reports;
  std::vector<std::string> labels;
  std::string title = "optimality gap vs instance size";
  std::string out;
};

int cmd_plot(const PlotArgs& a) {
  RunContext ctx(a.out);
  ctx.flags = json{{"reports", a.reports}, {"labels", a.labels}, {"title", a.title},
                   {"out", a.out}};
  NC_REQUIRE(!a.reports.empty(), "--report is required at least once");
  NC_REQUIRE(a.labels.empty() || a.labels.size() == a.reports.size(),
             "pass one --label per --report or none");
  try {
    std::vector<GapCurve> curves;
    for (size_t i = 0; i < a.reports.size(); ++i) {
      const EvalReport rep = eval_report_from_json(read_text(a.reports[i]));
      const std::string label =
          i < a.labels.size() ? a.labels[i] : rep.checkpoint + " " + rep.search;
      curves.push_back(curve_from_report(rep, label));
    }
    write_text(ctx.path("gaps.svg"), with_manifest_comment(gap_chart_svg(curves, a.title)));
    ctx.write_manifest("plot", 0, 1);
    std::cout << "wrote gaps.svg (" << curves.size() << " curves)\n";
    return 0;
  } catch (...) {
    ctx.remove_artifacts();
    throw;
  }
}

// ---- viz ----

struct VizArgs {
  std::string checkpoint;
  std::string instances;
  int index = 0;
  std::string search = "greedy";
  int beam_width = 128;
  uint64_t seed = 0;
  std::string out;
};

int cmd_viz(const VizArgs& a) {
  RunContext ctx(a.out);
  ctx.flags = json{{"checkpoint", a.checkpoint}, {"instances", a.instances},
                   {"index", a.index},           {"search", a.search},
                   {"beam_width", a.beam_width}, {"seed", a.seed},
                   {"out", a.out}};
  SearchConfig scfg;
  scfg.strategy = search_strategy_from_string(a.search);
  scfg.width = scfg.strategy == SearchStrategy::Greedy ? 1 : a.beam_width;
  scfg.seed = a.seed;
  scfg.validate();
  try {
    const Model model = Model::load(a.checkpoint);
    const Dataset ds = read_dataset(a.instances);
    NC_REQUIRE(a.index >= 0 && static_cast<size_t>(a.index) < ds.size(),
               "--index " << a.index << " outside the dataset (" << ds.size() << " instances)");
    const TspInstance& inst = ds.instances[a.index];

    auto policy = model.make_policy(inst);
    const SearchResult res = run_search(*policy, inst, scfg);

    VizOptions v;
    v.predicted = &res.tour;
    Heatmap hm;
    if (model.config().decoder == DecoderKind::Nar) {
      hm = model.heatmap(inst);
      v.heatmap = &hm;
    }
    Tour ref;
    std::ostringstream title;
    title << "n=" << inst.n() << ", " << scfg.describe() << ", length " << res.length;
    if (ds.labeled()) {
      ref = ds.tours[a.index];
      v.reference = &ref;
      title << " (ref " << tour_length(inst, ref) << ")";
    }
    const std::string t = title.str();
    v.title = t;
    write_text(ctx.path("viz.svg"), with_manifest_comment(instance_svg(inst, v)));
    ctx.write_manifest("viz", a.seed, 1);
    std::cout << "wrote viz.svg (" << t << ")\n";
    return 0;
  } catch (...) {
    ctx.remove_artifacts();
    throw;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"2D Euclidean TSP workbench: instance generation, oracle solvers, "
               "neural policy training, search, evaluation, and SVG reporting"};
  app.require_subcommand(1);

  uint64_t seed_fallback = 0;
  try {
    seed_fallback = env_seed_fallback();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  GenerateArgs gen;
  gen.seed = seed_fallback;
  auto* cg = app.add_subcommand("generate", "Sample instance datasets, optionally labeled");
  cg->add_option("--sizes", gen.sizes, "instance sizes to generate")->required();
  cg->add_option("--count", gen.count, "instances per size");
  cg->add_flag("--labeled", gen.labeled, "attach reference tours");
  cg->add_flag("--heuristic-labels", gen.heuristic_labels,
               "allow heuristic-refined labels beyond the exact-solver limit");
  cg->add_option("--seed", gen.seed, "rng seed (falls back to NCOPT_SEED)");
  cg->add_option("--threads", gen.threads, "worker cap, 0 = all cores");
  cg->add_option("--out", gen.out, "output directory")->required();

  SolveArgs sol;
  sol.seed = seed_fallback;
  auto* cs = app.add_subcommand("solve", "Run an oracle solver over a dataset");
  cs->add_option("--solver", sol.solver,
                 "brute-force | held-karp | reference | furthest-insertion | "
                 "nearest-insertion | random-insertion | two-opt");
  cs->add_option("--in", sol.in, "input dataset")->required();
  cs->add_option("--seed", sol.seed, "rng seed (falls back to NCOPT_SEED)");
  cs->add_option("--threads", sol.threads, "worker cap, 0 = all cores");
  cs->add_option("--out", sol.out, "output directory")->required();

  TrainArgs tr;
  tr.seed = seed_fallback;
  auto* ct = app.add_subcommand("train", "Train a policy from a JSON config");
  ct->add_option("--config", tr.config, "training config JSON")->required();
  auto* tr_seed = ct->add_option("--seed", tr.seed, "override the config seed");
  auto* tr_threads = ct->add_option("--threads", tr.threads, "override the config worker cap");
  ct->add_option("--out", tr.out, "output directory")->required();

  EvalArgs ev;
  ev.seed = seed_fallback;
  auto* ce = app.add_subcommand("eval", "Evaluate a checkpoint against reference tours");
  ce->add_option("--checkpoint", ev.checkpoint, "model checkpoint")->required();
  ce->add_option("--testset", ev.testset, "labeled dataset (mutually exclusive with --sizes)");
  ce->add_option("--sizes", ev.sizes, "sizes for a self-contained evaluation");
  ce->add_option("--count", ev.count, "instances per size with --sizes");
  ce->add_option("--search", ev.search, "greedy | beam | sample");
  ce->add_option("--beam-width", ev.beam_width, "beam or sample width");
  ce->add_option("--selection", ev.selection, "beam answer: highest-probability | shortest-tour");
  ce->add_flag("--band", ev.band, "add the [0.5, 99.5] gap percentile band");
  ce->add_option("--seed", ev.seed, "rng seed (falls back to NCOPT_SEED)");
  ce->add_option("--threads", ev.threads, "worker cap, 0 = all cores");
  ce->add_option("--out", ev.out, "output directory")->required();

  PlotArgs pl;
  auto* cp = app.add_subcommand("plot", "Render gap-vs-size curves from eval reports");
  cp->add_option("--report", pl.reports, "report.json (repeatable)")->required();
  cp->add_option("--label", pl.labels, "curve label (one per report)");
  cp->add_option("--title", pl.title, "chart title");
  cp->add_option("--out", pl.out, "output directory")->required();

  VizArgs vz;
  vz.seed = seed_fallback;
  auto* cv = app.add_subcommand("viz", "Draw one instance with predictions and heatmap");
  cv->add_option("--checkpoint", vz.checkpoint, "model checkpoint")->required();
  cv->add_option("--instances", vz.instances, "dataset holding the instance")->required();
  cv->add_option("--index", vz.index, "instance index within the dataset");
  cv->add_option("--search", vz.search, "greedy | beam | sample");
  cv->add_option("--beam-width", vz.beam_width, "beam or sample width");
  cv->add_option("--seed", vz.seed, "rng seed (falls back to NCOPT_SEED)");
  cv->add_option("--out", vz.out, "output directory")->required();

  std::vector<std::string> argv_storage;
  argv_storage.reserve(args.size() + 1);
  argv_storage.push_back("ncopt");
  for (const auto& s : args) argv_storage.push_back(s);
  std::vector<const char*> argv;
  for (const auto& s : argv_storage) argv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    tr.seed_given = tr_seed->count() > 0;
    tr.threads_given = tr_threads->count() > 0;
    if (cg->parsed()) return cmd_generate(gen);
    if (cs->parsed()) return cmd_solve(sol);
    if (ct->parsed()) return cmd_train(tr);
    if (ce->parsed()) return cmd_eval(ev);
    if (cp->parsed()) return cmd_plot(pl);
    if (cv->parsed()) return cmd_viz(vz);
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace ncopt
