// Copyright 2026 The WAP Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Graph file format (JSON, version 1):
//
//   { "version": 1,
//     "name": "mlp",
//     "nodes": [ { "id": "fc1", "kind": "MatMul", "inputs": ["x", "w1"],
//                  "attrs": {}, "device": 0 }, ... ],
//     "outputs": ["loss", "w1/update"] }
//
// Nodes are written in ascending id order. "device" is omitted for host
// nodes. Inputs reference "<id>" or "<id>:<port>". Unknown fields anywhere
// are rejected.
#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "wap/graph_ir.hpp"

namespace wap {

inline constexpr int kGraphFormatVersion = 1;

nlohmann::json graph_to_json(const Graph& graph);
/// `where` prefixes field diagnostics (e.g. a file name).
Graph graph_from_json(const nlohmann::json& doc, const std::string& where = "");

std::string serialize(const Graph& graph);
Graph deserialize(std::string_view text);

/// Reads, deserializes and shape-infers a graph file.
Graph load_graph(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
/// Writes via a temporary sibling file and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

/// Parses JSON text, mapping syntax errors to kParse with line/column.
nlohmann::json parse_json_text(std::string_view text, const std::string& where);

}  // namespace wap
