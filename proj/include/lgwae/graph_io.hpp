#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>

#include <json.hpp>
#include "lgwae/lane_graph.hpp"

namespace lgwae {

/// LaneGraph JSON (version 1). Control points are written in meters.
nlohmann::json graph_to_json(const LaneGraph& graph);

/// Parses and validates a LaneGraph document. Coordinates are normalized and
/// clamped to the unit square. Throws SchemaError with a JSON pointer to the
/// offending field. When expected_degree is set, centerlines of another
/// degree are rejected.
LaneGraph graph_from_json(const nlohmann::json& doc, std::optional<std::size_t> expected_degree = std::nullopt);

LaneGraph load_graph(const std::filesystem::path& path, std::optional<std::size_t> expected_degree = std::nullopt);
void save_graph(const LaneGraph& graph, const std::filesystem::path& path);

/// Reads a whole JSON file; DataError on I/O or parse failure.
nlohmann::json read_json_file(const std::filesystem::path& path);
/// Writes pretty-printed JSON with a trailing newline.
void write_json_file(const nlohmann::json& doc, const std::filesystem::path& path);

}  // namespace lgwae
