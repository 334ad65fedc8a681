#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "lgwae/errors.hpp"
#include "lgwae/graph_io.hpp"
#include "lgwae/scene_synth.hpp"

using namespace lgwae;

TEST(GenerateScene, SingleStraightLane) {
  SceneTemplate t;
  const LaneGraph g = generate_scene(t, BevExtent{}, 1);
  ASSERT_EQ(g.size(), 1u);
  EXPECT_EQ(g.incidence.edge_count(), 0u);
  EXPECT_EQ(g.centerlines[0].existence, 1.0);
}

TEST(GenerateScene, SplitConnectsStemToBranches) {
  SceneTemplate t;
  t.kind = TemplateKind::split;
  const LaneGraph g = generate_scene(t, BevExtent{}, 2);
  ASSERT_GE(g.size(), 3u);
  // The stem is the only centerline with outgoing edges and no incoming ones.
  std::size_t stems = 0;
  for (std::size_t x = 0; x < g.size(); ++x) {
    std::size_t out = 0, in = 0;
    for (std::size_t y = 0; y < g.size(); ++y) {
      out += g.incidence(x, y);
      in += g.incidence(y, x);
    }
    if (out >= 2 && in == 0) ++stems;
  }
  EXPECT_GE(stems, 1u);
}

TEST(GenerateScene, ThousandScenesValidateAndMatchDerivedIncidence) {
  std::mt19937_64 rng(17);
  std::size_t per_kind[6] = {};
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const SceneTemplate t = sample_template(rng);
    ++per_kind[static_cast<int>(t.kind)];
    const LaneGraph g = generate_scene(t, BevExtent{}, s);
    ASSERT_FALSE(g.empty());
    const auto v = validate(g);
    ASSERT_TRUE(v.empty()) << to_string(t.kind) << ": " << v[0].message;
    EXPECT_EQ(g.incidence, derive_incidence(g)) << to_string(t.kind) << " seed " << s;
  }
  for (std::size_t k : per_kind) EXPECT_GT(k, 0u);
}

TEST(GenerateScene, DeterministicPerSeed) {
  SceneTemplate t;
  t.kind = TemplateKind::curve;
  t.curvature = 0.01;
  t.jitter = 0.3;
  const LaneGraph a = generate_scene(t, BevExtent{}, 9);
  const LaneGraph b = generate_scene(t, BevExtent{}, 9);
  EXPECT_EQ(graph_to_json(a), graph_to_json(b));
  EXPECT_NE(graph_to_json(a), graph_to_json(generate_scene(t, BevExtent{}, 10)));
}

TEST(GenerateScene, RejectsInvalidTemplate) {
  SceneTemplate t;
  t.lanes_per_direction = 0;
  EXPECT_THROW(generate_scene(t, BevExtent{}, 1), ConfigError);
  EXPECT_THROW(template_kind_from_string("roundabout"), ConfigError);
}

TEST(Perturb, IdentityProfileIsIdentity) {
  SceneTemplate t;
  t.kind = TemplateKind::x_intersection;
  const LaneGraph gt = generate_scene(t, BevExtent{}, 3);
  const PerturbedEstimate est = perturb_estimate(gt, NoiseProfile::identity(), 5);
  EXPECT_FALSE(est.skipped);
  ASSERT_EQ(est.graph.size(), gt.size());
  EXPECT_EQ(est.graph.incidence, gt.incidence);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    EXPECT_EQ(est.graph.centerlines[i].control_points, gt.centerlines[i].control_points);
    EXPECT_EQ(est.graph.centerlines[i].existence, 1.0);
    EXPECT_EQ(est.provenance[i], i);
  }
}

TEST(Perturb, DropEverythingSkips) {
  const LaneGraph gt = generate_scene(SceneTemplate{}, BevExtent{}, 1);
  NoiseProfile p = NoiseProfile::identity();
  p.p_drop = 1.0;
  const PerturbedEstimate est = perturb_estimate(gt, p, 1);
  EXPECT_TRUE(est.skipped);
  EXPECT_TRUE(est.graph.empty());
}

TEST(Perturb, ScoresInOpenUnitIntervalAndDeterministic) {
  SceneTemplate t;
  t.kind = TemplateKind::merge;
  const LaneGraph gt = generate_scene(t, BevExtent{}, 4);
  const NoiseProfile p;
  const PerturbedEstimate a = perturb_estimate(gt, p, 8);
  const PerturbedEstimate b = perturb_estimate(gt, p, 8);
  EXPECT_EQ(graph_to_json(a.graph), graph_to_json(b.graph));
  EXPECT_EQ(a.provenance, b.provenance);
  for (const auto& c : a.graph.centerlines) {
    EXPECT_GT(c.existence, 0.0);
    EXPECT_LT(c.existence, 1.0);
  }
  for (std::size_t id : a.provenance) EXPECT_LT(id, gt.size());
}

TEST(Perturb, ControlPointNoiseMatchesRayleighMean) {
  // Isotropic 2D Gaussian offsets have mean length sigma * sqrt(pi/2).
  NoiseProfile p = NoiseProfile::identity();
  p.cp_sigma = 0.01;
  std::mt19937_64 rng(21);
  double total = 0.0;
  std::size_t count = 0;
  for (std::uint64_t s = 0; s < 500; ++s) {
    const LaneGraph gt = generate_scene(sample_template(rng), BevExtent{}, s);
    const PerturbedEstimate est = perturb_estimate(gt, p, s);
    ASSERT_EQ(est.graph.size(), gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i) {
      for (std::size_t k = 0; k < gt.centerlines[i].control_points.size(); ++k) {
        total += distance(est.graph.centerlines[i].control_points[k], gt.centerlines[est.provenance[i]].control_points[k]);
        ++count;
      }
    }
  }
  const double expected = 0.01 * std::sqrt(std::numbers::pi / 2.0);
  EXPECT_NEAR(total / static_cast<double>(count), expected, 0.1 * expected);
}

TEST(Perturb, ProfileJsonRoundTripAndErrors) {
  NoiseProfile p;
  p.p_dup = 0.3;
  const NoiseProfile back = profile_from_json(profile_to_json(p));
  EXPECT_EQ(back.p_dup, 0.3);
  EXPECT_EQ(back.cp_sigma, p.cp_sigma);
  EXPECT_THROW(profile_from_json(nlohmann::json{{"p_dorp", 0.1}}), SchemaError);
  NoiseProfile bad;
  bad.p_drop = 1.5;
  EXPECT_THROW(bad.check(), ConfigError);
}

TEST(Synthesize, ParallelMatchesSerial) {
  SynthOptions o;
  o.count = 40;
  o.seed = 12;
  const auto par = synthesize(o);
  const auto ser = synthesize_serial(o);
  ASSERT_EQ(par.size(), ser.size());
  for (std::size_t i = 0; i < par.size(); ++i) {
    EXPECT_EQ(graph_to_json(par[i].gt), graph_to_json(ser[i].gt));
    EXPECT_EQ(graph_to_json(par[i].estimate.graph), graph_to_json(ser[i].estimate.graph));
  }
}

TEST(Synthesize, StreamSeedsAreDistinct) {
  EXPECT_NE(stream_seed(1, 0), stream_seed(1, 1));
  EXPECT_NE(stream_seed(1, 0), stream_seed(2, 0));
  EXPECT_NE(stream_seed(1, 0, 0), stream_seed(1, 0, 1));
  EXPECT_EQ(stream_seed(7, 3, 2), stream_seed(7, 3, 2));
}

TEST(Synthesize, WritesPairedFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "lgwae_synth_write";
  std::filesystem::remove_all(dir);
  SynthOptions o;
  o.count = 5;
  o.seed = 2;
  const auto samples = synthesize(o);
  const DatasetWriteResult r = write_dataset(samples, dir);
  EXPECT_EQ(r.written + r.skipped.size(), 5u);
  for (const auto& s : samples) {
    if (s.estimate.skipped) continue;
    EXPECT_TRUE(std::filesystem::exists(dir / (scene_stem(s.index) + ".gt.json")));
    const LaneGraph back = load_graph(dir / (scene_stem(s.index) + ".est.json"));
    EXPECT_EQ(back.size(), s.estimate.graph.size());
  }
  EXPECT_EQ(scene_stem(7), "scene_00007");
}
