#include "lgwae/graph_io.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "lgwae/errors.hpp"

namespace lgwae {

using nlohmann::json;

namespace {

void require_keys(const json& obj, const std::string& ptr, std::initializer_list<const char*> required,
                  std::initializer_list<const char*> optional = {}) {
  if (!obj.is_object()) throw SchemaError(ptr.empty() ? "/" : ptr, "expected an object");
  for (const char* key : required) {
    if (!obj.contains(key)) throw SchemaError(ptr + "/" + key, "missing required field");
  }
  for (const auto& [key, _] : obj.items()) {
    const bool known = std::any_of(required.begin(), required.end(), [&](const char* k) { return key == k; }) ||
                       std::any_of(optional.begin(), optional.end(), [&](const char* k) { return key == k; });
    if (!known) throw SchemaError(ptr + "/" + key, "unknown field");
  }
}

double number(const json& v, const std::string& ptr) {
  if (!v.is_number()) throw SchemaError(ptr, "expected a number");
  return v.get<double>();
}

std::size_t index(const json& v, const std::string& ptr) {
  if (!v.is_number_integer() || v.get<long long>() < 0) throw SchemaError(ptr, "expected a non-negative integer");
  return v.get<std::size_t>();
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

json graph_to_json(const LaneGraph& graph) {
  json doc;
  doc["version"] = 1;
  doc["extent"] = {{"x_min", graph.extent.x_min},
                   {"x_max", graph.extent.x_max},
                   {"z_min", graph.extent.z_min},
                   {"z_max", graph.extent.z_max}};
  json lines = json::array();
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const Centerline& c = graph.centerlines[i];
    json cps = json::array();
    for (const Point2& p : c.control_points) {
      const Point2 m = denormalize(p, graph.extent);
      cps.push_back({m.x, m.y});
    }
    lines.push_back({{"id", i}, {"control_points_m", std::move(cps)}, {"existence", c.existence}});
  }
  doc["centerlines"] = std::move(lines);
  json edges = json::array();
  if (graph.incidence.size() == graph.size()) {
    for (auto [x, y] : graph.incidence.edges()) edges.push_back({x, y});
  }
  doc["edges"] = std::move(edges);
  return doc;
}

LaneGraph graph_from_json(const json& doc, std::optional<std::size_t> expected_degree) {
  require_keys(doc, "", {"version", "extent", "centerlines", "edges"});
  if (!doc["version"].is_number_integer() || doc["version"].get<int>() != 1) {
    throw SchemaError("/version", "unsupported version");
  }
  LaneGraph graph;
  const json& ext = doc["extent"];
  require_keys(ext, "/extent", {"x_min", "x_max", "z_min", "z_max"});
  graph.extent = {number(ext["x_min"], "/extent/x_min"), number(ext["x_max"], "/extent/x_max"),
                  number(ext["z_min"], "/extent/z_min"), number(ext["z_max"], "/extent/z_max")};
  if (!(graph.extent.x_min < graph.extent.x_max) || !(graph.extent.z_min < graph.extent.z_max)) {
    throw SchemaError("/extent", "degenerate extent");
  }

  const json& lines = doc["centerlines"];
  if (!lines.is_array()) throw SchemaError("/centerlines", "expected an array");
  const std::size_t n = lines.size();
  graph.centerlines.resize(n);
  std::vector<bool> seen(n, false);
  std::optional<std::size_t> degree = expected_degree;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string ptr = "/centerlines/" + std::to_string(i);
    const json& c = lines[i];
    require_keys(c, ptr, {"id", "control_points_m", "existence"});
    const std::size_t id = index(c["id"], ptr + "/id");
    if (id >= n || seen[id]) throw SchemaError(ptr + "/id", "ids must be dense and unique in 0..N-1");
    seen[id] = true;
    const json& cps = c["control_points_m"];
    if (!cps.is_array() || cps.size() < 2) throw SchemaError(ptr + "/control_points_m", "expected >= 2 points");
    if (degree && cps.size() != *degree) {
      throw SchemaError(ptr + "/control_points_m",
                        "expected " + std::to_string(*degree) + " control points, got " + std::to_string(cps.size()));
    }
    degree = cps.size();
    Centerline line;
    for (std::size_t k = 0; k < cps.size(); ++k) {
      const std::string pp = ptr + "/control_points_m/" + std::to_string(k);
      if (!cps[k].is_array() || cps[k].size() != 2) throw SchemaError(pp, "expected [x, z]");
      const Point2 u = normalize({number(cps[k][0], pp + "/0"), number(cps[k][1], pp + "/1")}, graph.extent);
      line.control_points.push_back({clamp01(u.x), clamp01(u.y)});
    }
    line.existence = number(c["existence"], ptr + "/existence");
    if (!(line.existence >= 0.0 && line.existence <= 1.0)) throw SchemaError(ptr + "/existence", "outside [0,1]");
    graph.centerlines[id] = std::move(line);
  }

  const json& edges = doc["edges"];
  if (!edges.is_array()) throw SchemaError("/edges", "expected an array");
  graph.incidence = Incidence(n);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const std::string ptr = "/edges/" + std::to_string(e);
    if (!edges[e].is_array() || edges[e].size() != 2) throw SchemaError(ptr, "expected [from_id, to_id]");
    const std::size_t from = index(edges[e][0], ptr + "/0");
    const std::size_t to = index(edges[e][1], ptr + "/1");
    if (from >= n) throw SchemaError(ptr + "/0", "references missing centerline id " + std::to_string(from));
    if (to >= n) throw SchemaError(ptr + "/1", "references missing centerline id " + std::to_string(to));
    if (from == to) throw SchemaError(ptr, "self loop");
    graph.incidence.set(from, to);
  }
  return graph;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json_file(const json& doc, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << doc.dump(1) << '\n';
}

LaneGraph load_graph(const std::filesystem::path& path, std::optional<std::size_t> expected_degree) {
  const json doc = read_json_file(path);
  try {
    return graph_from_json(doc, expected_degree);
  } catch (const SchemaError& e) {
    throw SchemaError(e.pointer(), path.string() + ": " + std::string(e.what()).substr(e.pointer().size() + 2));
  }
}

void save_graph(const LaneGraph& graph, const std::filesystem::path& path) { write_json_file(graph_to_json(graph), path); }

}  // namespace lgwae
