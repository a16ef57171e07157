// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "forge/cli.hpp"

int main(int argc, char** argv) { return forge::run({argv, argv + argc}, std::cout, std::cerr); }
