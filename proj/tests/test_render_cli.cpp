#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lgwae/cli.hpp"
#include "lgwae/errors.hpp"
#include "lgwae/graph_io.hpp"
#include "lgwae/render.hpp"
#include "lgwae/scene_synth.hpp"
#include "support.hpp"

using namespace lgwae;
namespace fs = std::filesystem;

namespace {

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "lgwae");
  return run_cli(args);
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// Every file in a except manifests has a byte-identical twin in b.
void expect_same_artifacts(const fs::path& a, const fs::path& b) {
  std::size_t compared = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    const std::string name = entry.path().filename().string();
    if (name.find("manifest") != std::string::npos) continue;
    ASSERT_TRUE(fs::exists(b / name)) << name;
    EXPECT_EQ(slurp(entry.path()), slurp(b / name)) << name;
    ++compared;
  }
  EXPECT_GT(compared, 0u);
}

const char* kTinyConfig = R"({
  "model": {"d_model": 16, "n_heads": 2, "enc_layers": 1, "dec_layers": 1, "n_queries": 8, "n_helpers": 2,
            "assoc_dim": 4, "ffn_dim": 24, "conn_hidden": 8},
  "train": {"batch_size": 4}
})";

}  // namespace

TEST(RenderSvg, OnePolylinePerCenterline) {
  std::mt19937_64 rng(1);
  for (std::size_t k : {1, 3, 7}) {
    const LaneGraph g = fixtures::random_graph(rng, k);
    const std::string svg = render_svg(g);
    EXPECT_EQ(count(svg, "<polyline"), k);
    EXPECT_EQ(count(svg, "<polygon"), k);
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_NE(svg.find("</svg>"), std::string::npos);
  }
}

TEST(RenderSvg, DeterministicWithOverlayAndEmpty) {
  std::mt19937_64 rng(2);
  const LaneGraph g = fixtures::random_graph(rng, 4);
  const LaneGraph gt = fixtures::random_graph(rng, 3);
  EXPECT_EQ(render_svg(g, &gt), render_svg(g, &gt));
  const std::string both = render_svg(g, &gt);
  EXPECT_EQ(count(both, "<polyline"), 7u);
  EXPECT_NE(both.find("class=\"overlay\""), std::string::npos);
  const std::string empty = render_svg(LaneGraph{});
  EXPECT_EQ(count(empty, "<polyline"), 0u);
  EXPECT_NE(empty.find("<rect"), std::string::npos);
}

TEST(Plots, ConvergenceCurveFollowsTraces) {
  RefinementReport a, b;
  a.trace = {3.0, 2.0, 1.0};
  b.trace = {5.0, 4.0};
  const Curve c = mean_objective_curve({a, b});
  EXPECT_EQ(c.y, (std::vector<double>{4.0, 3.0, 1.0}));
  RefinementReport flat;
  flat.trace = std::vector<double>(10, 2.5);
  const Curve f = mean_objective_curve({flat});
  EXPECT_EQ(f.x.size(), 10u);
  for (double y : f.y) EXPECT_EQ(y, 2.5);
  EXPECT_NE(plot_convergence({flat}).find("<polyline"), std::string::npos);
  EXPECT_THROW(plot_convergence({}), DataError);
}

TEST(Plots, UncertaintyPlot) {
  std::vector<double> u{0.01, 0.02, 0.03};
  std::vector<SceneMetrics> rows{{"a", 90, 100, 80}, {"b", 60, 70, 50}, {"c", 30, 40, 20}};
  const std::string svg = plot_uncertainty(uncertainty_analysis(u, rows, 3));
  EXPECT_EQ(count(svg, "<circle"), 3u);
}

TEST(Cli, ExitCodes) {
  const fs::path dir = fresh_dir("lgwae_cli_codes");
  EXPECT_EQ(cli({"synth", "--count", "0", "--out", (dir / "d").string()}), kExitConfig);
  EXPECT_EQ(cli({"frobnicate"}), kExitConfig);
  EXPECT_EQ(cli({"synth", "--count", "2", "--bogus", "--out", (dir / "d").string()}), kExitConfig);
  EXPECT_EQ(cli({"eval", "--pred", (dir / "nope").string(), "--gt", (dir / "nope").string(), "--out",
                 (dir / "m.json").string()}),
            kExitData);
  std::ofstream(dir / "bad.json") << R"({"version": 1, "extent": {}, "centerlines": [], "edges": []})";
  EXPECT_EQ(cli({"render", "--graph", (dir / "bad.json").string(), "--out", (dir / "x.svg").string()}), kExitData);
  EXPECT_EQ(cli({"--version"}), kExitOk);
}

TEST(Cli, EvalOnIdenticalDirectoriesScoresFullMarks) {
  const fs::path dir = fresh_dir("lgwae_cli_eval");
  ASSERT_EQ(cli({"synth", "--count", "6", "--seed", "4", "--out", (dir / "data").string()}), kExitOk);
  ASSERT_EQ(cli({"eval", "--pred", (dir / "data").string(), "--gt", (dir / "data").string(), "--out",
                 (dir / "m.json").string(), "--existence-threshold", "0"}),
            kExitOk);
  // Predictions resolve to the .est files; score the GT against itself via a copy.
  const fs::path copy = dir / "copy";
  fs::create_directories(copy);
  for (const auto& e : fs::directory_iterator(dir / "data")) {
    const std::string n = e.path().filename().string();
    if (n.size() > 8 && n.substr(n.size() - 8) == ".gt.json") fs::copy_file(e.path(), copy / n);
  }
  ASSERT_EQ(cli({"eval", "--pred", copy.string(), "--gt", copy.string(), "--out", (dir / "same.json").string()}), kExitOk);
  const auto doc = read_json_file(dir / "same.json");
  EXPECT_EQ(doc["m_f"].get<double>(), 100.0);
  EXPECT_EQ(doc["detect"].get<double>(), 100.0);
  EXPECT_EQ(doc["c_f"].get<double>(), 100.0);
  EXPECT_TRUE(fs::exists(dir / "same.json.manifest.json"));
}

TEST(Cli, EveryRunIsReproducibleFromItsManifest) {
  const fs::path dir = fresh_dir("lgwae_cli_rerun");
  std::ofstream(dir / "tiny.json") << kTinyConfig;
  const fs::path data = dir / "data";
  ASSERT_EQ(cli({"synth", "--count", "8", "--seed", "9", "--out", data.string()}), kExitOk);
  ASSERT_EQ(cli({"rerun", "--manifest", (data / "manifest.json").string(), "--out", (dir / "data2").string()}), kExitOk);
  expect_same_artifacts(data, dir / "data2");

  const fs::path a = dir / "a", b = dir / "b";
  fs::create_directories(a);
  fs::create_directories(b);
  ASSERT_EQ(cli({"train", "--data", data.string(), "--config", (dir / "tiny.json").string(), "--steps", "3", "--seed", "2",
                 "--out", (a / "m.ckpt").string()}),
            kExitOk);
  ASSERT_EQ(cli({"rerun", "--manifest", (a / "m.ckpt.manifest.json").string(), "--out", (b / "m.ckpt").string()}), kExitOk);
  expect_same_artifacts(a, b);

  ASSERT_EQ(cli({"refine", "--ckpt", (a / "m.ckpt").string(), "--input", data.string(), "--iters", "5", "--out",
                 (dir / "r1").string()}),
            kExitOk);
  ASSERT_EQ(cli({"rerun", "--manifest", (dir / "r1" / "manifest.json").string(), "--out", (dir / "r2").string()}), kExitOk);
  expect_same_artifacts(dir / "r1", dir / "r2");

  const fs::path e = dir / "e", f = dir / "f";
  fs::create_directories(e);
  fs::create_directories(f);
  ASSERT_EQ(cli({"eval", "--pred", (dir / "r1").string(), "--gt", data.string(), "--reports", (dir / "r1").string(),
                 "--out", (e / "metrics.json").string()}),
            kExitOk);
  EXPECT_TRUE(read_json_file(e / "metrics.json").contains("uncertainty"));
  ASSERT_EQ(cli({"rerun", "--manifest", (e / "metrics.json.manifest.json").string(), "--out", (f / "metrics.json").string()}),
            kExitOk);
  expect_same_artifacts(e, f);

  ASSERT_EQ(cli({"plot", "--reports", (dir / "r1").string(), "--kind", "convergence", "--gt", data.string(), "--out",
                 (e / "conv.svg").string()}),
            kExitOk);
  EXPECT_EQ(cli({"plot", "--reports", (dir / "r1").string(), "--kind", "uncertainty", "--out", (e / "u.svg").string()}),
            kExitConfig);
  ASSERT_EQ(cli({"plot", "--reports", (dir / "r1").string(), "--kind", "uncertainty", "--gt", data.string(), "--out",
                 (e / "u.svg").string()}),
            kExitOk);
  const std::string scene = (data / "scene_00000.gt.json").string();
  ASSERT_EQ(cli({"render", "--graph", (dir / "r1" / "scene_00000.refined.json").string(), "--overlay", scene, "--out",
                 (e / "s.svg").string()}),
            kExitOk);
  ASSERT_EQ(cli({"rerun", "--manifest", (e / "s.svg.manifest.json").string(), "--out", (f / "s.svg").string()}), kExitOk);
  EXPECT_EQ(slurp(e / "s.svg"), slurp(f / "s.svg"));
}
