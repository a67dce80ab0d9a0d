// Copyright 2026 The peakmem Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace peakmem::cli {

// Process exit codes.
inline constexpr int kExitFits = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitOom = 2;
inline constexpr int kExitDivergence = 3;

// Environment variable naming the default field-mapping file.
inline constexpr const char* kMappingEnv = "PEAKMEM_MAPPING";

// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace peakmem::cli
