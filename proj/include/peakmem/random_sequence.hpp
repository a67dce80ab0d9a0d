// Copyright 2026 The peakmem Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "peakmem/allocator_sim.hpp"
#include "peakmem/orchestrator.hpp"

namespace peakmem::sim {

struct RandomSequenceOptions {
  std::size_t max_events = 1000;
  std::uint64_t min_bytes = 1;
  std::uint64_t max_bytes = 64 * kMiB;
};

// Valid orchestrated sequence with interleaved allocs and frees. Sizes are
// log-uniform with frequent repeats; timestamps include ties. Some blocks
// stay live at the end.
orch::OrchestratedSequence random_sequence(std::uint64_t seed, const RandomSequenceOptions& options = {});

// Default config with a capacity that is tight for roughly a third of seeds.
SimConfig random_config(std::uint64_t seed);

// Allocates `sizes` in order. In the early ordering every block is freed
// before the next allocation; in the late ordering all frees follow the last
// allocation.
orch::OrchestratedSequence early_free_sequence(std::span<const std::uint64_t> sizes);
orch::OrchestratedSequence late_free_sequence(std::span<const std::uint64_t> sizes);

}  // namespace peakmem::sim
