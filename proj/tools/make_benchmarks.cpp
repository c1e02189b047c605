// Copyright 2026 The WAP Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Regenerates the shipped benchmark graphs:
//   make_benchmarks <out_dir>
#include <filesystem>
#include <iostream>

#include "wap/graph_io.hpp"
#include "wap/models.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_benchmarks <out_dir>\n";
    return 2;
  }
  const std::filesystem::path dir = argv[1];
  std::filesystem::create_directories(dir);
  struct Entry {
    const char* file;
    wap::ModelSpec spec;
    std::int64_t batch;
  };
  const Entry entries[] = {
      {"alexnet_b128.json", wap::alexnet_like_spec(), 128},
      {"alexnet_b2048.json", wap::alexnet_like_spec(), 2048},
      {"vgg_b512.json", wap::vgg_like_spec(), 512},
      {"mlp_b64.json", wap::mlp_spec({32, 32, 10}, 16), 64},
  };
  for (const auto& e : entries) {
    wap::Graph graph = wap::build_model(e.spec, e.batch);
    graph.set_name(e.spec.name + "_b" + std::to_string(e.batch));
    wap::write_file_atomic(dir / e.file, wap::serialize(graph));
    std::cout << "wrote " << (dir / e.file).string() << " (" << graph.size() << " nodes)\n";
  }
  return 0;
}
