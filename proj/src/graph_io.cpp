// Copyright 2026 The WAP Authors.
// SPDX-License-Identifier: Apache-2.0
#include "wap/graph_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace wap {

using nlohmann::json;

namespace {

[[noreturn]] void field_error(const std::string& where, const std::string& field,
                              const std::string& what) {
  std::string message = where.empty() ? "" : where + ": ";
  throw Error(ErrorCode::kParse, message + field + ": " + what);
}

void reject_unknown_fields(const json& object,
                           std::initializer_list<std::string_view> allowed,
                           const std::string& where, const std::string& field) {
  for (const auto& item : object.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      field_error(where, field, "unknown field '" + item.key() + "'");
    }
  }
}

json attr_to_json(const AttrValue& value) {
  return std::visit([](const auto& v) { return json(v); }, value);
}

AttrValue attr_from_json(const json& value, AttrType type,
                         const std::string& where, const std::string& field) {
  switch (type) {
    case AttrType::kInt:
      if (!value.is_number_integer()) field_error(where, field, "expected an integer");
      return value.get<std::int64_t>();
    case AttrType::kDouble:
      if (!value.is_number()) field_error(where, field, "expected a number");
      return value.get<double>();
    case AttrType::kString:
      if (!value.is_string()) field_error(where, field, "expected a string");
      return value.get<std::string>();
    case AttrType::kInts: {
      if (!value.is_array()) field_error(where, field, "expected an array of integers");
      std::vector<std::int64_t> out;
      for (const auto& element : value) {
        if (!element.is_number_integer()) {
          field_error(where, field, "expected an array of integers");
        }
        out.push_back(element.get<std::int64_t>());
      }
      return out;
    }
  }
  field_error(where, field, "unsupported attribute type");
}

}  // namespace

json graph_to_json(const Graph& graph) {
  json nodes = json::array();
  for (const auto& [id, node] : graph.nodes()) {
    json inputs = json::array();
    for (const auto& in : node.inputs) inputs.push_back(in.str());
    json attrs = json::object();
    for (const auto& [key, value] : node.attrs.values()) {
      attrs[key] = attr_to_json(value);
    }
    json entry = {{"id", id},
                  {"kind", std::string(to_string(node.kind))},
                  {"inputs", std::move(inputs)},
                  {"attrs", std::move(attrs)}};
    if (node.device) entry["device"] = *node.device;
    nodes.push_back(std::move(entry));
  }
  return {{"version", kGraphFormatVersion},
          {"name", graph.name()},
          {"nodes", std::move(nodes)},
          {"outputs", graph.outputs()}};
}

Graph graph_from_json(const json& doc, const std::string& where) {
  if (!doc.is_object()) field_error(where, "<root>", "expected an object");
  reject_unknown_fields(doc, {"version", "name", "nodes", "outputs"}, where, "<root>");
  if (!doc.contains("version")) field_error(where, "version", "missing");
  if (!doc["version"].is_number_integer()) {
    field_error(where, "version", "expected an integer");
  }
  const auto version = doc["version"].get<int>();
  if (version != kGraphFormatVersion) {
    throw Error(ErrorCode::kVersionMismatch,
                (where.empty() ? "" : where + ": ") + "graph format version " +
                    std::to_string(version) + " is not supported (expected " +
                    std::to_string(kGraphFormatVersion) + ")");
  }
  for (const char* key : {"name", "nodes", "outputs"}) {
    if (!doc.contains(key)) field_error(where, key, "missing");
  }
  if (!doc["name"].is_string()) field_error(where, "name", "expected a string");
  if (!doc["nodes"].is_array()) field_error(where, "nodes", "expected an array");
  if (!doc["outputs"].is_array()) field_error(where, "outputs", "expected an array");

  Graph graph(doc["name"].get<std::string>());
  std::size_t index = 0;
  for (const auto& entry : doc["nodes"]) {
    const std::string field = "nodes[" + std::to_string(index++) + "]";
    if (!entry.is_object()) field_error(where, field, "expected an object");
    reject_unknown_fields(entry, {"id", "kind", "inputs", "attrs", "device"}, where,
                          field);
    for (const char* key : {"id", "kind", "inputs"}) {
      if (!entry.contains(key)) field_error(where, field + "." + key, "missing");
    }
    Node node;
    if (!entry["id"].is_string() || entry["id"].get<std::string>().empty()) {
      field_error(where, field + ".id", "expected a non-empty string");
    }
    node.id = entry["id"].get<std::string>();
    if (!entry["kind"].is_string()) field_error(where, field + ".kind", "expected a string");
    const auto kind_name = entry["kind"].get<std::string>();
    const auto kind = parse_op_kind(kind_name);
    if (!kind) {
      field_error(where, field + ".kind", "unknown op kind '" + kind_name + "'");
    }
    node.kind = *kind;
    if (!entry["inputs"].is_array()) {
      field_error(where, field + ".inputs", "expected an array");
    }
    for (const auto& in : entry["inputs"]) {
      if (!in.is_string()) field_error(where, field + ".inputs", "expected strings");
      node.inputs.push_back(TensorRef::parse(in.get<std::string>()));
    }
    if (entry.contains("attrs")) {
      const auto& attrs = entry["attrs"];
      if (!attrs.is_object()) field_error(where, field + ".attrs", "expected an object");
      const auto& specs = attr_specs(node.kind);
      for (const auto& item : attrs.items()) {
        const auto spec = std::find_if(specs.begin(), specs.end(), [&](const AttrSpec& s) {
          return s.key == item.key();
        });
        const std::string attr_field = field + ".attrs." + item.key();
        if (spec == specs.end()) {
          field_error(where, attr_field,
                      "unknown attribute for " + kind_name);
        }
        node.attrs.set(item.key(), attr_from_json(item.value(), spec->type, where,
                                                  attr_field));
      }
    }
    if (entry.contains("device")) {
      if (!entry["device"].is_number_integer() || entry["device"].get<int>() < 0) {
        field_error(where, field + ".device", "expected a non-negative integer");
      }
      node.device = entry["device"].get<int>();
    }
    if (graph.has_node(node.id)) {
      field_error(where, field + ".id", "duplicate node id '" + node.id + "'");
    }
    graph.add_node(std::move(node));
  }
  std::vector<NodeId> outputs;
  for (const auto& out : doc["outputs"]) {
    if (!out.is_string()) field_error(where, "outputs", "expected strings");
    outputs.push_back(out.get<std::string>());
  }
  graph.set_outputs(std::move(outputs));
  return graph;
}

json parse_json_text(std::string_view text, const std::string& where) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    const auto offset = std::min<std::size_t>(e.byte, text.size());
    std::size_t line = 1, column = 1;
    for (std::size_t i = 0; i + 1 < offset; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    std::string message = where.empty() ? "" : where + ": ";
    std::string detail = e.what();
    const auto colon = detail.rfind(": ");
    if (colon != std::string::npos) detail = detail.substr(colon + 2);
    throw Error(ErrorCode::kParse, message + "line " + std::to_string(line) +
                                       ", column " + std::to_string(column) +
                                       ": " + detail);
  }
}

std::string serialize(const Graph& graph) {
  return graph_to_json(graph).dump(2) + "\n";
}

Graph deserialize(std::string_view text) {
  return graph_from_json(parse_json_text(text, ""), "");
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write '" + tmp.string() + "'");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error(ErrorCode::kIo, "short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(ErrorCode::kIo, "cannot rename onto '" + path.string() + "': " +
                                    ec.message());
  }
}

Graph load_graph(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  return infer_shapes(graph_from_json(parse_json_text(text, path.string()),
                                      path.string()));
}

}  // namespace wap
