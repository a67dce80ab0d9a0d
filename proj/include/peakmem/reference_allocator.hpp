// Copyright 2026 The peakmem Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "peakmem/allocator_sim.hpp"
#include "peakmem/orchestrator.hpp"

// Straight-line re-implementation of the caching allocator rules using flat
// vectors and linear scans. Shares no code with SimState; used to
// cross-check it.
namespace peakmem::sim::reference {

struct ReferenceOutcome {
  std::vector<CurvePoint> timeline;
  std::optional<std::size_t> oom_event;  // index of the failing event
};

ReferenceOutcome simulate_naive(const orch::OrchestratedSequence& seq, const SimConfig& cfg);

struct Divergence {
  std::size_t event_index = 0;
  std::string description;
};

// Compares the fast simulator with the naive reference event by event.
std::optional<Divergence> cross_check(const orch::OrchestratedSequence& seq, const SimConfig& cfg);

}  // namespace peakmem::sim::reference
