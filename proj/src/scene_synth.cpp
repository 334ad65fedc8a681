#include "lgwae/scene_synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "lgwae/errors.hpp"
#include "lgwae/graph_io.hpp"
#include "parallel.hpp"

namespace lgwae {

namespace {

constexpr double kLaneWidth = 3.5;
constexpr double kMargin = 0.5;

constexpr std::array kKinds = {TemplateKind::straight,       TemplateKind::curve, TemplateKind::t_junction,
                               TemplateKind::x_intersection, TemplateKind::merge, TemplateKind::split};

// Shared-node layout in meters; segments sharing a node are connected.
struct Layout {
  struct Segment {
    std::size_t from;
    std::size_t to;
    Point2 interior;  // quadratic middle control point
  };
  std::vector<Point2> nodes;
  std::vector<Segment> segments;

  std::size_t node(Point2 p) {
    nodes.push_back(p);
    return nodes.size() - 1;
  }
  void segment(std::size_t from, std::size_t to, Point2 interior) { segments.push_back({from, to, interior}); }
  void straight(std::size_t from, std::size_t to) {
    const Point2 a = nodes[from];
    const Point2 b = nodes[to];
    segment(from, to, {(a.x + b.x) / 2, (a.y + b.y) / 2});
  }
};

double lane_offset(int lane, int lanes) { return (lane - (lanes - 1) / 2.0) * kLaneWidth; }

// Degree elevation of a quadratic to `degree` control points; degree 2 keeps the chord.
std::vector<Point2> elevate(std::array<Point2, 3> quad, std::size_t degree) {
  if (degree == 2) return {quad[0], quad[2]};
  std::vector<Point2> cps(quad.begin(), quad.end());
  while (cps.size() < degree) {
    const std::size_t n = cps.size();  // current point count; elevate to n + 1
    std::vector<Point2> next(n + 1);
    next.front() = cps.front();
    next.back() = cps.back();
    for (std::size_t i = 1; i < n; ++i) {
      const double a = static_cast<double>(i) / static_cast<double>(n);
      next[i] = {a * cps[i - 1].x + (1 - a) * cps[i].x, a * cps[i - 1].y + (1 - a) * cps[i].y};
    }
    cps = std::move(next);
  }
  return cps;
}

void build_straight(const SceneTemplate& t, const BevExtent& e, Layout& out) {
  const double lo = e.z_min + kMargin;
  const double hi = e.z_max - kMargin;
  const double dx = (hi - lo) * std::tan(t.heading);
  for (int i = 0; i < t.lanes_per_direction; ++i) {
    const double x = t.lateral_offset + lane_offset(i, t.lanes_per_direction);
    out.straight(out.node({x, lo}), out.node({x + dx, hi}));
  }
}

void build_curve(const SceneTemplate& t, const BevExtent& e, Layout& out) {
  const double lo = e.z_min + kMargin;
  const double hi = e.z_max - kMargin;
  if (std::abs(t.curvature) < 1e-9) {
    for (int i = 0; i < t.lanes_per_direction; ++i) {
      const double x = t.lateral_offset + lane_offset(i, t.lanes_per_direction);
      const std::size_t a = out.node({x, lo});
      const std::size_t m = out.node({x, (lo + hi) / 2});
      const std::size_t b = out.node({x, hi});
      out.straight(a, m);
      out.straight(m, b);
    }
    return;
  }
  const double s = t.curvature > 0 ? 1.0 : -1.0;
  const double radius = 1.0 / std::abs(t.curvature);
  const Point2 centre{t.lateral_offset + s * radius, lo};
  auto at = [&](double r, double psi) { return Point2{centre.x - s * r * std::cos(psi), centre.y + r * std::sin(psi)}; };
  auto inside = [&](Point2 p) {
    return p.x >= e.x_min + kMargin && p.x <= e.x_max - kMargin && p.y >= lo && p.y <= hi;
  };
  double sweep = std::min((hi - lo - 4.0) / radius, std::numbers::pi / 2);
  for (int iter = 0; iter < 200; ++iter) {
    bool ok = true;
    for (int i = 0; i < t.lanes_per_direction; ++i) {
      const double r = radius - s * lane_offset(i, t.lanes_per_direction);
      for (int k = 1; k <= 8; ++k) ok = ok && inside(at(r, sweep * k / 8));
    }
    if (ok) break;
    sweep *= 0.95;
  }
  for (int i = 0; i < t.lanes_per_direction; ++i) {
    const double r = radius - s * lane_offset(i, t.lanes_per_direction);
    const std::size_t a = out.node(at(r, 0.0));
    const std::size_t m = out.node(at(r, sweep / 2));
    const std::size_t b = out.node(at(r, sweep));
    const double half = sweep / 2;
    const double rt = r / std::cos(half / 2);
    out.segment(a, m, {centre.x - s * rt * std::cos(half / 2), centre.y + rt * std::sin(half / 2)});
    out.segment(m, b, {centre.x - s * rt * std::cos(1.5 * half), centre.y + rt * std::sin(1.5 * half)});
  }
}

void build_split(const SceneTemplate& t, const BevExtent& e, Layout& out) {
  const double lo = e.z_min + kMargin;
  const double hi = e.z_max - kMargin;
  const double side = t.curvature >= 0 ? 1.0 : -1.0;
  for (int i = 0; i < t.lanes_per_direction; ++i) {
    const double x = t.lateral_offset + lane_offset(i, t.lanes_per_direction);
    const std::size_t a = out.node({x, lo});
    const std::size_t fork = out.node({x, t.junction_z});
    const std::size_t through = out.node({x, hi});
    const std::size_t branch = out.node({x + side * t.branch_size, hi});
    out.straight(a, fork);
    out.straight(fork, through);
    out.segment(fork, branch, {x, (t.junction_z + hi) / 2});
  }
}

void build_merge(const SceneTemplate& t, const BevExtent& e, Layout& out) {
  const double lo = e.z_min + kMargin;
  const double hi = e.z_max - kMargin;
  const double side = t.curvature >= 0 ? 1.0 : -1.0;
  for (int i = 0; i < t.lanes_per_direction; ++i) {
    const double x = t.lateral_offset + lane_offset(i, t.lanes_per_direction);
    const std::size_t a = out.node({x, lo});
    const std::size_t b = out.node({x + side * t.branch_size, lo});
    const std::size_t join = out.node({x, t.junction_z});
    const std::size_t end = out.node({x, hi});
    out.straight(a, join);
    out.segment(b, join, {x, (lo + t.junction_z) / 2});
    out.straight(join, end);
  }
}

void build_junction(const SceneTemplate& t, const BevExtent& e, bool through, Layout& out) {
  const double lo = e.z_min + kMargin;
  const double hi = e.z_max - kMargin;
  const double west = e.x_min + kMargin;
  const double east = e.x_max - kMargin;
  const int lanes = t.lanes_per_direction;
  const double xa = t.lateral_offset;
  const double zj = t.junction_z;
  const double r = t.branch_size;
  const double z_east = zj + r;                      // nearest eastbound lane
  const double z_west = zj + r + lanes * kLaneWidth;  // nearest westbound lane
  const double r_left = z_west - zj;

  const std::size_t start = out.node({xa, lo});
  const std::size_t stop = out.node({xa, zj});
  out.straight(start, stop);
  if (through) out.straight(stop, out.node({xa, hi}));

  for (int k = 0; k < lanes; ++k) {
    const double z = z_east + k * kLaneWidth;
    const std::size_t a = out.node({west, z});
    const std::size_t m = out.node({xa + r, z});
    const std::size_t b = out.node({east, z});
    out.straight(a, m);
    out.straight(m, b);
    if (k == 0) out.segment(stop, m, {xa, z});
  }
  for (int k = 0; k < lanes; ++k) {
    const double z = z_west + k * kLaneWidth;
    const std::size_t a = out.node({east, z});
    const std::size_t m = out.node({xa - r_left, z});
    const std::size_t b = out.node({west, z});
    out.straight(a, m);
    out.straight(m, b);
    if (k == 0) out.segment(stop, m, {xa, z});
  }
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

double beta_sample(std::mt19937_64& rng, const ExistenceNoise& noise) {
  if (noise.alpha <= 0.0 || noise.beta <= 0.0) return 1.0;
  std::gamma_distribution<double> ga(noise.alpha, 1.0);
  std::gamma_distribution<double> gb(noise.beta, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  const double v = x / (x + y);
  return std::clamp(v, std::nextafter(0.0, 1.0), std::nextafter(1.0, 0.0));
}

}  // namespace

std::string to_string(TemplateKind kind) {
  switch (kind) {
    case TemplateKind::straight: return "straight";
    case TemplateKind::curve: return "curve";
    case TemplateKind::t_junction: return "t_junction";
    case TemplateKind::x_intersection: return "x_intersection";
    case TemplateKind::merge: return "merge";
    case TemplateKind::split: return "split";
  }
  return "unknown";
}

TemplateKind template_kind_from_string(const std::string& name) {
  for (TemplateKind k : kKinds) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown scene template '" + name + "'");
}

void SceneTemplate::check() const {
  if (lanes_per_direction < 1) throw ConfigError("template: lanes_per_direction must be >= 1");
  if (jitter < 0.0) throw ConfigError("template: jitter must be >= 0");
  if (degree < 2) throw ConfigError("template: degree must be >= 2");
  if (branch_size <= 0.0) throw ConfigError("template: branch_size must be > 0");
}

SceneTemplate sample_template(std::mt19937_64& rng, std::size_t degree) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double a, double b) { return a + (b - a) * u01(rng); };
  SceneTemplate t;
  t.kind = kKinds[std::uniform_int_distribution<std::size_t>(0, kKinds.size() - 1)(rng)];
  t.lanes_per_direction = u01(rng) < 0.5 ? 1 : 2;
  const double sign = u01(rng) < 0.5 ? -1.0 : 1.0;
  t.curvature = sign * uniform(0.006, 0.02);
  t.jitter = 0.15;
  t.lateral_offset = uniform(-4.0, 4.0);
  t.heading = uniform(-0.15, 0.15);
  t.junction_z = uniform(18.0, 28.0);
  t.degree = degree;
  switch (t.kind) {
    case TemplateKind::t_junction:
    case TemplateKind::x_intersection: t.branch_size = uniform(5.0, 8.0); break;
    case TemplateKind::split:
    case TemplateKind::merge: t.branch_size = uniform(5.5, 9.0); break;
    case TemplateKind::curve: t.lateral_offset = -sign * uniform(2.0, 6.0); break;
    case TemplateKind::straight: break;
  }
  return t;
}

LaneGraph generate_scene(const SceneTemplate& tmpl, const BevExtent& extent, std::uint64_t seed) {
  tmpl.check();
  extent.check();
  Layout layout;
  switch (tmpl.kind) {
    case TemplateKind::straight: build_straight(tmpl, extent, layout); break;
    case TemplateKind::curve: build_curve(tmpl, extent, layout); break;
    case TemplateKind::t_junction: build_junction(tmpl, extent, false, layout); break;
    case TemplateKind::x_intersection: build_junction(tmpl, extent, true, layout); break;
    case TemplateKind::merge: build_merge(tmpl, extent, layout); break;
    case TemplateKind::split: build_split(tmpl, extent, layout); break;
  }
  if (layout.segments.empty()) throw ConfigError("template " + to_string(tmpl.kind) + " produced no centerlines");

  std::mt19937_64 rng(seed);
  if (tmpl.jitter > 0.0) {
    std::normal_distribution<double> noise(0.0, tmpl.jitter);
    for (Point2& p : layout.nodes) {
      p.x += noise(rng);
      p.y += noise(rng);
    }
    for (auto& s : layout.segments) {
      s.interior.x += noise(rng);
      s.interior.y += noise(rng);
    }
  }

  LaneGraph g;
  g.extent = extent;
  const std::size_t n = layout.segments.size();
  g.centerlines.reserve(n);
  for (const auto& s : layout.segments) {
    Centerline c;
    for (const Point2& p : elevate({layout.nodes[s.from], s.interior, layout.nodes[s.to]}, tmpl.degree)) {
      const Point2 u = normalize(p, extent);
      c.control_points.push_back({clamp01(u.x), clamp01(u.y)});
    }
    c.existence = 1.0;
    g.centerlines.push_back(std::move(c));
  }
  g.incidence = Incidence(n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      if (a != b && layout.segments[a].to == layout.segments[b].from) g.incidence.set(a, b);
    }
  }
  return g;
}

void NoiseProfile::check() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string("noise profile: ") + name + " must be in [0,1]");
  };
  prob(p_drop, "p_drop");
  prob(p_dup, "p_dup");
  prob(p_edge_flip, "p_edge_flip");
  if (!(cp_sigma >= 0.0)) throw ConfigError("noise profile: cp_sigma must be >= 0");
  if (existence.alpha < 0.0 || existence.beta < 0.0) throw ConfigError("noise profile: Beta parameters must be >= 0");
}

nlohmann::json profile_to_json(const NoiseProfile& p) {
  return {{"cp_sigma", p.cp_sigma},
          {"p_drop", p.p_drop},
          {"p_dup", p.p_dup},
          {"p_edge_flip", p.p_edge_flip},
          {"existence_noise", {{"alpha", p.existence.alpha}, {"beta", p.existence.beta}}}};
}

NoiseProfile profile_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw SchemaError("/", "noise profile must be an object");
  NoiseProfile p;
  for (const auto& [key, value] : doc.items()) {
    auto num = [&, &key = key, &value = value]() {
      if (!value.is_number()) throw SchemaError("/" + key, "expected a number");
      return value.get<double>();
    };
    if (key == "cp_sigma") p.cp_sigma = num();
    else if (key == "p_drop") p.p_drop = num();
    else if (key == "p_dup") p.p_dup = num();
    else if (key == "p_edge_flip") p.p_edge_flip = num();
    else if (key == "existence_noise") {
      if (!value.is_object()) throw SchemaError("/existence_noise", "expected an object");
      for (const auto& [k, v] : value.items()) {
        if (!v.is_number()) throw SchemaError("/existence_noise/" + k, "expected a number");
        if (k == "alpha") p.existence.alpha = v.get<double>();
        else if (k == "beta") p.existence.beta = v.get<double>();
        else throw SchemaError("/existence_noise/" + k, "unknown field");
      }
    } else {
      throw SchemaError("/" + key, "unknown field");
    }
  }
  try {
    p.check();
  } catch (const ConfigError& e) {
    throw SchemaError("/", e.what());
  }
  return p;
}

PerturbedEstimate perturb_estimate(const LaneGraph& gt, const NoiseProfile& profile, std::uint64_t seed) {
  profile.check();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  auto jitter = [&](Centerline c) {
    if (profile.cp_sigma > 0.0) {
      for (Point2& p : c.control_points) {
        p.x = clamp01(p.x + profile.cp_sigma * noise(rng));
        p.y = clamp01(p.y + profile.cp_sigma * noise(rng));
      }
    }
    c.existence = beta_sample(rng, profile.existence);
    return c;
  };

  PerturbedEstimate out;
  out.graph.extent = gt.extent;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (u01(rng) < profile.p_drop) continue;
    Centerline kept = jitter(gt.centerlines[i]);
    const bool duplicate = u01(rng) < profile.p_dup;
    out.graph.centerlines.push_back(kept);
    out.provenance.push_back(i);
    if (duplicate) {
      Centerline dup = jitter(kept);
      out.graph.centerlines.push_back(std::move(dup));
      out.provenance.push_back(i);
    }
  }
  const std::size_t n = out.graph.size();
  out.graph.incidence = Incidence(n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      if (a == b) continue;
      bool edge = gt.incidence(out.provenance[a], out.provenance[b]);
      if (u01(rng) < profile.p_edge_flip) edge = !edge;
      out.graph.incidence.set(a, b, edge);
    }
  }
  out.skipped = n == 0;
  return out;
}

std::uint64_t stream_seed(std::uint64_t global_seed, std::uint64_t index, std::uint64_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(global_seed), static_cast<std::uint32_t>(global_seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    static_cast<std::uint32_t>(purpose)};
  std::array<std::uint32_t, 2> words{};
  seq.generate(words.begin(), words.end());
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

namespace {

SceneSample make_sample(const SynthOptions& o, std::size_t index) {
  SceneSample s;
  s.index = index;
  std::mt19937_64 rng(stream_seed(o.seed, index, 0));
  s.tmpl = sample_template(rng, o.degree);
  s.gt = generate_scene(s.tmpl, o.extent, stream_seed(o.seed, index, 1));
  s.estimate = perturb_estimate(s.gt, o.profile, stream_seed(o.seed, index, 2));
  return s;
}

}  // namespace

std::vector<SceneSample> synthesize_serial(const SynthOptions& options) {
  options.profile.check();
  std::vector<SceneSample> out(options.count);
  for (std::size_t i = 0; i < options.count; ++i) out[i] = make_sample(options, i);
  return out;
}

std::vector<SceneSample> synthesize(const SynthOptions& options) {
  options.profile.check();
  std::vector<SceneSample> out(options.count);
  detail::parallel_for(options.count, true, [&](std::size_t i) { out[i] = make_sample(options, i); });
  return out;
}

std::string scene_stem(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%05zu", index);
  return buf;
}

DatasetWriteResult write_dataset(const std::vector<SceneSample>& samples, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  DatasetWriteResult result;
  for (const SceneSample& s : samples) {
    if (s.estimate.skipped) {
      result.skipped.push_back(s.index);
      continue;
    }
    save_graph(s.gt, dir / (scene_stem(s.index) + ".gt.json"));
    save_graph(s.estimate.graph, dir / (scene_stem(s.index) + ".est.json"));
    ++result.written;
  }
  return result;
}

}  // namespace lgwae
