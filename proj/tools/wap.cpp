// Copyright 2026 The WAP Authors.
// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "wap/cli.hpp"

int main(int argc, char** argv) { return wap::run_cli(argc, argv, std::cout, std::cerr); }
