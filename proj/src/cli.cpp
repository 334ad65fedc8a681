#include "lgwae/cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "lgwae/errors.hpp"
#include "lgwae/graph_io.hpp"
#include "lgwae/metrics.hpp"
#include "lgwae/refiner.hpp"
#include "lgwae/render.hpp"
#include "lgwae/scene_synth.hpp"
#include "lgwae/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace lgwae {

void apply_thread_limit() {
  const char* raw = std::getenv("LGWAE_THREADS");
  if (raw == nullptr || *raw == '\0') return;
  char* end = nullptr;
  const long n = std::strtol(raw, &end, 10);
  if (*end != '\0' || n <= 0) throw ConfigError(std::string("LGWAE_THREADS must be a positive integer, got '") + raw + "'");
  omp_set_num_threads(static_cast<int>(n));
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string strip_suffix(const std::string& s, const std::string& suffix) { return s.substr(0, s.size() - suffix.size()); }

// Sorted regular files of dir whose name ends with suffix.
std::vector<fs::path> files_with_suffix(const fs::path& dir, const std::string& suffix) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && ends_with(e.path().filename().string(), suffix)) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool is_artifact(const std::string& name) {
  return ends_with(name, ".report.json") || ends_with(name, ".manifest.json") || name == "manifest.json" ||
         name == "summary.json";
}

void require_dir(const fs::path& dir, const char* what) {
  if (!fs::is_directory(dir)) throw DataError(std::string(what) + " directory " + dir.string() + " does not exist");
}

std::string timestamp() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

/// Sections of a run config file; every section is optional.
struct FileConfig {
  json model = json::object();
  json train = json::object();
  json refine = json::object();
  json metrics = json::object();
};

FileConfig load_config(const std::string& path) {
  FileConfig c;
  if (path.empty()) return c;
  const json doc = read_json_file(path);
  if (!doc.is_object()) throw SchemaError("/", "config file must be an object");
  for (const auto& [key, v] : doc.items()) {
    if (key == "model") c.model = v;
    else if (key == "train") c.train = v;
    else if (key == "refine") c.refine = v;
    else if (key == "metrics") c.metrics = v;
    else throw SchemaError("/" + key, "unknown section");
  }
  return c;
}

// Re-raises a SchemaError from a nested section with the full pointer.
template <typename F>
auto in_section(const std::string& section, F&& parse) {
  try {
    return parse();
  } catch (const SchemaError& e) {
    throw SchemaError("/" + section + (e.pointer() == "/" ? "" : e.pointer()), e.what());
  }
}

struct Run {
  std::string subcommand;
  std::vector<std::string> argv;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();
  std::string started_at = timestamp();
};

void write_manifest(const Run& run, const fs::path& path, const json& config, const json& seeds, const json& inputs,
                    const json& outputs) {
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - run.started).count();
  json m{{"tool", "lgwae"},
         {"version", kVersion},
         {"subcommand", run.subcommand},
         {"argv", run.argv},
         {"config", config},
         {"seeds", seeds},
         {"inputs", inputs},
         {"outputs", outputs},
         {"wall_clock", {{"started_at", run.started_at}, {"seconds", seconds}}}};
  write_json_file(m, path);
}

fs::path manifest_for_file(const fs::path& out) { return fs::path(out.string() + ".manifest.json"); }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::size_t count = 0;
  std::uint64_t seed = 0;
  std::string profile;
  std::string out;
  std::size_t degree = 3;
};

int cmd_synth(const SynthArgs& a, const Run& run) {
  if (a.count == 0) throw ConfigError("synth: --count must be at least 1");
  SynthOptions o;
  o.count = a.count;
  o.seed = a.seed;
  o.degree = a.degree;
  if (!a.profile.empty()) o.profile = profile_from_json(read_json_file(a.profile));
  o.profile.check();
  const auto samples = synthesize(o);
  const DatasetWriteResult w = write_dataset(samples, a.out);
  write_manifest(run, fs::path(a.out) / "manifest.json",
                 {{"count", a.count}, {"degree", a.degree}, {"profile", profile_to_json(o.profile)}}, {{"seed", a.seed}},
                 {{"profile", a.profile}}, {{"dir", a.out}, {"written", w.written}, {"skipped", w.skipped}});
  std::cout << "wrote " << w.written << " scene pairs to " << a.out;
  if (!w.skipped.empty()) std::cout << " (" << w.skipped.size() << " skipped: every centerline dropped)";
  std::cout << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string data;
  std::string mode = "est";
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  std::size_t epochs = 0;
  std::size_t batch_size = 0;
  double lr = 0.0;
  CLI::App* app = nullptr;
};

int cmd_train(const TrainArgs& a, const Run& run) {
  const FileConfig fc = load_config(a.config);
  ModelConfig mc = in_section("model", [&] { return config_from_json(fc.model); });
  TrainConfig tc = in_section("train", [&] { return train_config_from_json(fc.train); });
  if (a.app->count("--mode") > 0 || !fc.train.contains("mode")) tc.mode = train_mode_from_string(a.mode);
  if (a.app->count("--seed") > 0) tc.seed = a.seed;
  if (a.app->count("--steps") > 0) tc.steps = a.steps;
  if (a.app->count("--epochs") > 0) tc.epochs = a.epochs;
  if (a.app->count("--batch-size") > 0) tc.batch_size = a.batch_size;
  if (a.app->count("--lr") > 0) tc.learning_rate = a.lr;
  mc.check();
  tc.check();
  require_dir(a.data, "data");

  const auto scenes = load_training_set(a.data, tc.mode, tc.existence_threshold, mc.control_points);
  std::cerr << "training on " << scenes.size() << " scenes (mode " << to_string(tc.mode) << ")\n";
  TrainResult result;
  try {
    result = train(scenes, tc, mc, [](const StepLog& s) {
      if ((s.step + 1) % 100 == 0) {
        std::cerr << "step " << s.step + 1 << " loss " << s.loss.total << " (ce " << s.loss.existence_ce << ", l1 "
                  << s.loss.l1 << ", conn " << s.loss.connect_ce << ", mmd " << s.loss.mmd << ")\n";
      }
    });
  } catch (const TrainingError& e) {
    const fs::path dump(a.out + ".nan_dump.json");
    write_json_file(e.diagnostic(), dump);
    std::cerr << "error: " << e.what() << "; diagnostic written to " << dump.string() << "\n";
    return kExitFailure;
  }
  save_checkpoint(result.checkpoint, a.out);

  auto components = [](const LossComponents& l) {
    return json{{"existence_ce", l.existence_ce}, {"l1", l.l1}, {"connect_ce", l.connect_ce}, {"mmd", l.mmd},
                {"total", l.total}};
  };
  json history{{"epochs", json::array()}, {"steps", json::array()}};
  for (const auto& e : result.epochs) history["epochs"].push_back(components(e));
  for (const auto& s : result.steps) {
    json row = components(s.loss);
    row["step"] = s.step;
    row["epoch"] = s.epoch;
    history["steps"].push_back(std::move(row));
  }
  const fs::path history_path(a.out + ".history.json");
  write_json_file(history, history_path);
  write_manifest(run, manifest_for_file(a.out), {{"model", config_to_json(mc)}, {"train", train_config_to_json(tc)}},
                 {{"seed", tc.seed}}, {{"data", a.data}, {"config", a.config}, {"scenes", scenes.size()}},
                 {{"checkpoint", a.out}, {"history", history_path.string()}});
  std::cout << "saved checkpoint " << a.out << " after " << result.checkpoint.step << " steps\n";
  return kExitOk;
}

struct RefineArgs {
  std::string ckpt;
  std::string input;
  std::string config;
  std::string out;
  double alpha = 0.0;
  std::size_t iters = 0;
  double lr = 0.0;
  double lambda = 0.0;
  CLI::App* app = nullptr;
};

std::vector<fs::path> refine_inputs(const fs::path& input) {
  if (fs::is_regular_file(input)) return {input};
  require_dir(input, "input");
  auto files = files_with_suffix(input, ".est.json");
  if (!files.empty()) return files;
  for (const auto& f : files_with_suffix(input, ".json")) {
    const std::string name = f.filename().string();
    if (!is_artifact(name) && !ends_with(name, ".gt.json") && !ends_with(name, ".refined.json")) files.push_back(f);
  }
  if (files.empty()) throw DataError("no lane-graph files in " + input.string());
  return files;
}

std::string scene_name(const fs::path& file) {
  const std::string name = file.filename().string();
  for (const char* suffix : {".est.json", ".gt.json", ".refined.json", ".json"}) {
    if (ends_with(name, suffix)) return strip_suffix(name, suffix);
  }
  return name;
}

int cmd_refine(const RefineArgs& a, const Run& run) {
  const FileConfig fc = load_config(a.config);
  RefineConfig rc = in_section("refine", [&] { return refine_config_from_json(fc.refine); });
  if (a.app->count("--alpha") > 0) rc.alpha = a.alpha;
  if (a.app->count("--iters") > 0) rc.iterations = a.iters;
  if (a.app->count("--lr") > 0) rc.step_size = a.lr;
  if (a.app->count("--lambda") > 0) rc.lambda = a.lambda;
  rc.check();
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  const std::size_t degree = ckpt.params.config().control_points;

  std::vector<RefineInput> inputs;
  json input_files = json::array();
  for (const auto& f : refine_inputs(a.input)) {
    inputs.push_back({scene_name(f), load_graph(f, degree)});
    input_files.push_back(f.string());
  }
  const auto reports = refine_batch(inputs, ckpt.params, rc);

  const fs::path out(a.out);
  fs::create_directories(out);
  json summary = json::array();
  std::size_t flagged = 0;
  for (const auto& r : reports) {
    save_graph(r.refined, out / (r.name + ".refined.json"));
    write_json_file(report_to_json(r), out / (r.name + ".report.json"));
    summary.push_back({{"name", r.name},
                       {"initial_objective", r.initial.value},
                       {"best_objective", r.best.value},
                       {"best_iteration", r.best_iteration},
                       {"uncertainty", r.uncertainty},
                       {"empty_target", r.empty_target},
                       {"diverged", r.diverged}});
    if (r.empty_target || r.diverged) ++flagged;
  }
  write_json_file(summary, out / "summary.json");
  write_manifest(run, out / "manifest.json", {{"refine", refine_config_to_json(rc)}, {"model", config_to_json(ckpt.params.config())}},
                 {{"training_seed", ckpt.seed}}, {{"checkpoint", a.ckpt}, {"files", input_files}},
                 {{"dir", a.out}, {"scenes", reports.size()}});
  std::cout << "refined " << reports.size() << " scenes into " << a.out;
  if (flagged > 0) std::cout << " (" << flagged << " flagged, see summary.json)";
  std::cout << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string pred;
  std::string gt;
  std::string out;
  std::string csv;
  std::string reports;
  std::string config;
  double existence_threshold = 0.5;
};

// Prediction file for a scene: refined output, then estimate, then plain files.
fs::path find_prediction(const fs::path& dir, const std::string& name) {
  for (const char* suffix : {".refined.json", ".est.json", ".gt.json", ".json"}) {
    const fs::path p = dir / (name + suffix);
    if (fs::is_regular_file(p)) return p;
  }
  throw DataError("no prediction for scene " + name + " in " + dir.string());
}

std::vector<fs::path> gt_files(const fs::path& dir) {
  require_dir(dir, "ground-truth");
  auto files = files_with_suffix(dir, ".gt.json");
  if (!files.empty()) return files;
  for (const auto& f : files_with_suffix(dir, ".json")) {
    if (!is_artifact(f.filename().string())) files.push_back(f);
  }
  if (files.empty()) throw DataError("no ground-truth files in " + dir.string());
  return files;
}

int cmd_eval(const EvalArgs& a, const Run& run) {
  const FileConfig fc = load_config(a.config);
  const MetricConfig mc = in_section("metrics", [&] { return metric_config_from_json(fc.metrics); });
  mc.check();
  if (!(a.existence_threshold >= 0.0 && a.existence_threshold < 1.0)) {
    throw ConfigError("eval: --existence-threshold must lie in [0,1)");
  }
  require_dir(a.pred, "prediction");
  std::vector<EvalPair> pairs;
  json files = json::array();
  for (const auto& g : gt_files(a.gt)) {
    const std::string name = scene_name(g);
    const fs::path p = find_prediction(a.pred, name);
    pairs.push_back({name, filter_existing(load_graph(p), a.existence_threshold), load_graph(g)});
    files.push_back({{"pred", p.string()}, {"gt", g.string()}});
  }
  const MetricReport report = evaluate(pairs, mc);
  json doc = metric_report_to_json(report);
  if (!a.reports.empty()) {
    require_dir(a.reports, "reports");
    std::vector<double> u;
    for (const auto& row : report.scenes) {
      const fs::path rp = fs::path(a.reports) / (row.name + ".report.json");
      if (!fs::is_regular_file(rp)) throw DataError("missing refinement report " + rp.string());
      u.push_back(read_json_file(rp).at("uncertainty").get<double>());
    }
    doc["uncertainty"] = uncertainty_analysis_to_json(uncertainty_analysis(u, report.scenes));
  }
  write_json_file(doc, a.out);
  json outputs{{"metrics", a.out}};
  if (!a.csv.empty()) {
    write_text(a.csv, metric_report_csv(report));
    outputs["csv"] = a.csv;
  }
  write_manifest(run, manifest_for_file(a.out),
                 {{"metrics", metric_config_to_json(mc)}, {"existence_threshold", a.existence_threshold}}, json::object(),
                 {{"pred", a.pred}, {"gt", a.gt}, {"reports", a.reports}, {"files", files}}, outputs);
  std::printf("M-F %.2f  Detect %.2f  C-F %.2f  (%zu scenes)\n", report.m_f, report.detect, report.c_f,
              report.scenes.size());
  return kExitOk;
}

struct RenderArgs {
  std::string graph;
  std::string overlay;
  std::string out;
};

int cmd_render(const RenderArgs& a, const Run& run) {
  const LaneGraph g = load_graph(a.graph);
  std::optional<LaneGraph> overlay;
  if (!a.overlay.empty()) overlay = load_graph(a.overlay);
  write_text(a.out, render_svg(g, overlay ? &*overlay : nullptr));
  write_manifest(run, manifest_for_file(a.out), json::object(), json::object(), {{"graph", a.graph}, {"overlay", a.overlay}},
                 {{"svg", a.out}});
  return kExitOk;
}

struct PlotArgs {
  std::string reports;
  std::string kind;
  std::string out;
  std::string gt;
};

int cmd_plot(const PlotArgs& a, const Run& run) {
  require_dir(a.reports, "reports");
  std::vector<RefinementReport> reports;
  for (const auto& f : files_with_suffix(a.reports, ".report.json")) reports.push_back(report_from_json(read_json_file(f)));
  if (reports.empty()) throw DataError("no refinement reports in " + a.reports);

  std::vector<LaneGraph> gts;
  if (!a.gt.empty()) {
    require_dir(a.gt, "ground-truth");
    for (const auto& r : reports) {
      fs::path p = fs::path(a.gt) / (r.name + ".gt.json");
      if (!fs::is_regular_file(p)) p = fs::path(a.gt) / (r.name + ".json");
      if (!fs::is_regular_file(p)) throw DataError("no ground truth for scene " + r.name + " in " + a.gt);
      gts.push_back(load_graph(p));
    }
  }
  std::string svg;
  if (a.kind == "convergence") {
    svg = plot_convergence(reports, gts.empty() ? std::vector<Curve>{} : metric_curves(reports, gts));
  } else {
    if (gts.empty()) throw ConfigError("plot --kind uncertainty needs --gt to score the refined graphs");
    std::vector<EvalPair> pairs;
    std::vector<double> u;
    for (std::size_t i = 0; i < reports.size(); ++i) {
      pairs.push_back({reports[i].name, reports[i].refined, gts[i]});
      u.push_back(reports[i].uncertainty);
    }
    svg = plot_uncertainty(uncertainty_analysis(u, evaluate(pairs).scenes));
  }
  write_text(a.out, svg);
  write_manifest(run, manifest_for_file(a.out), {{"kind", a.kind}}, json::object(),
                 {{"reports", a.reports}, {"gt", a.gt}, {"count", reports.size()}}, {{"svg", a.out}});
  return kExitOk;
}

struct RerunArgs {
  std::string manifest;
  std::string out;
};

int cmd_rerun(const RerunArgs& a) {
  const json m = read_json_file(a.manifest);
  if (!m.contains("argv") || !m["argv"].is_array()) throw SchemaError("/argv", "manifest lacks the recorded argv");
  std::vector<std::string> args{"lgwae"};
  for (const auto& v : m["argv"]) args.push_back(v.get<std::string>());
  if (!a.out.empty()) {
    auto it = std::find(args.begin(), args.end(), "--out");
    if (it == args.end() || it + 1 == args.end()) throw ConfigError("rerun: recorded command has no --out to replace");
    *(it + 1) = a.out;
  }
  return run_cli(args);
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Lane-graph Wasserstein autoencoder with test-time latent optimization", "lgwae"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate synthetic ground-truth / estimate scene pairs");
  s->add_option("--count", synth.count, "Number of scenes")->required();
  s->add_option("--seed", synth.seed, "Global seed");
  s->add_option("--profile", synth.profile, "Noise profile JSON");
  s->add_option("--degree", synth.degree, "Control points per centerline");
  s->add_option("--out", synth.out, "Output directory")->required();

  TrainArgs train_args;
  auto* t = app.add_subcommand("train", "Train the autoencoder");
  train_args.app = t;
  t->add_option("--data", train_args.data, "Dataset directory")->required();
  t->add_option("--mode", train_args.mode, "Reconstruct estimates (est) or ground truth (gt)")
      ->check(CLI::IsMember({"est", "gt"}));
  t->add_option("--config", train_args.config, "Config JSON with model/train sections");
  t->add_option("--out", train_args.out, "Checkpoint path")->required();
  t->add_option("--seed", train_args.seed, "Training seed");
  t->add_option("--steps", train_args.steps, "Optimizer steps (overrides epochs)");
  t->add_option("--epochs", train_args.epochs, "Epochs");
  t->add_option("--batch-size", train_args.batch_size, "Scenes per batch");
  t->add_option("--lr", train_args.lr, "Adam learning rate");

  RefineArgs refine_args;
  const RefineConfig rdef;
  refine_args.alpha = rdef.alpha;
  refine_args.iters = rdef.iterations;
  refine_args.lr = rdef.step_size;
  refine_args.lambda = rdef.lambda;
  auto* r = app.add_subcommand("refine", "Latent-space refinement of estimated lane graphs");
  refine_args.app = r;
  r->add_option("--ckpt", refine_args.ckpt, "Checkpoint")->required();
  r->add_option("--input", refine_args.input, "Lane-graph file or directory")->required();
  r->add_option("--alpha", refine_args.alpha, "Latent norm weight")->capture_default_str();
  r->add_option("--iters", refine_args.iters, "Gradient steps")->capture_default_str();
  r->add_option("--lr", refine_args.lr, "Step size")->capture_default_str();
  r->add_option("--lambda", refine_args.lambda, "L1 weight")->capture_default_str();
  r->add_option("--config", refine_args.config, "Config JSON with a refine section");
  r->add_option("--out", refine_args.out, "Output directory")->required();

  EvalArgs eval_args;
  auto* e = app.add_subcommand("eval", "Score predictions against ground truth");
  e->add_option("--pred", eval_args.pred, "Prediction directory")->required();
  e->add_option("--gt", eval_args.gt, "Ground-truth directory")->required();
  e->add_option("--out", eval_args.out, "Metrics JSON")->required();
  e->add_option("--csv", eval_args.csv, "Per-scene CSV");
  e->add_option("--reports", eval_args.reports, "Refinement reports for the uncertainty analysis");
  e->add_option("--existence-threshold", eval_args.existence_threshold, "Drop predictions below this score")
      ->capture_default_str();
  e->add_option("--config", eval_args.config, "Config JSON with a metrics section");

  RenderArgs render_args;
  auto* v = app.add_subcommand("render", "Draw a lane graph as SVG");
  v->add_option("--graph", render_args.graph, "Lane-graph JSON")->required();
  v->add_option("--overlay", render_args.overlay, "Second graph drawn dashed underneath");
  v->add_option("--out", render_args.out, "SVG path")->required();

  PlotArgs plot_args;
  auto* p = app.add_subcommand("plot", "Convergence or uncertainty plots from refinement reports");
  p->add_option("--reports", plot_args.reports, "Refinement output directory")->required();
  p->add_option("--kind", plot_args.kind, "convergence or uncertainty")
      ->required()
      ->check(CLI::IsMember({"convergence", "uncertainty"}));
  p->add_option("--gt", plot_args.gt, "Ground-truth directory for metric curves");
  p->add_option("--out", plot_args.out, "SVG path")->required();

  RerunArgs rerun_args;
  auto* rr = app.add_subcommand("rerun", "Repeat the command recorded in a manifest");
  rr->add_option("--manifest", rerun_args.manifest, "manifest JSON")->required();
  rr->add_option("--out", rerun_args.out, "Replace the recorded --out value");

  std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  Run run;
  run.argv.assign(args.begin() + 1, args.end());
  try {
    apply_thread_limit();
    run.subcommand = app.get_subcommands().front()->get_name();
    if (s->parsed()) return cmd_synth(synth, run);
    if (t->parsed()) return cmd_train(train_args, run);
    if (r->parsed()) return cmd_refine(refine_args, run);
    if (e->parsed()) return cmd_eval(eval_args, run);
    if (v->parsed()) return cmd_render(render_args, run);
    if (p->parsed()) return cmd_plot(plot_args, run);
    if (rr->parsed()) return cmd_rerun(rerun_args);
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kExitConfig;
  } catch (const DataError& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return kExitData;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace lgwae
