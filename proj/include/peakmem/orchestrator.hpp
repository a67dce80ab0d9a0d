// Copyright 2026 The peakmem Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "peakmem/annotations.hpp"
#include "peakmem/lifecycle.hpp"
#include "peakmem/window_forest.hpp"

namespace peakmem::orch {

using lifecycle::LifecycleClass;
using lifecycle::MemoryBlock;

struct ClassifyOptions {
  // Optimizer-state blocks one parameter of a given size can account for.
  std::size_t max_states_per_parameter = 2;
  // Substring a backward op name carries, in addition to sharing its
  // sequence number with an earlier op. Empty disables the name check.
  std::string backward_marker = "Backward";
};

// Assigns a lifecycle class to every block. Resolution order when several
// rules match: Parameter, OptimizerState, Gradient, BatchData, Activation,
// Other. Blocks are visited in allocation order, so the optimizer-state
// budget is consumed by the earliest candidates.
std::vector<MemoryBlock> classify_blocks(std::vector<MemoryBlock> blocks,
                                         std::span<const trace::TraceEvent> events,
                                         const trace::WindowForest& forest,
                                         const trace::AnnotationIndex& annotations,
                                         const ClassifyOptions& options = {});

// Free sorts before Alloc at equal timestamps.
enum class EventKind : std::uint8_t { Free = 0, Alloc = 1 };

std::string_view to_string(EventKind kind);

struct OrchestratedEvent {
  std::int64_t ts_us = 0;
  EventKind kind = EventKind::Alloc;
  std::size_t block_id = 0;
  std::uint64_t size_bytes = 0;
  LifecycleClass lifecycle = LifecycleClass::Unclassified;

  bool operator==(const OrchestratedEvent&) const = default;
};

bool event_order(const OrchestratedEvent& a, const OrchestratedEvent& b) noexcept;

struct AnalysisWindow {
  std::int64_t start_us = 0;
  std::int64_t end_us = 0;
  bool operator==(const AnalysisWindow&) const = default;
};

struct OrchestratedSequence {
  std::vector<OrchestratedEvent> events;
  AnalysisWindow analysis_window;
  std::vector<std::size_t> carryover_ids;  // sorted

  bool operator==(const OrchestratedSequence&) const = default;
};

struct OrchestrateOptions {
  // Zero-based; the default analyses the second iteration with the first
  // providing persistent carryover.
  std::size_t analysis_iteration = 1;
};

// Re-times classified blocks into GPU-side lifecycles and cuts the result to
// the analysis iteration:
//  - Parameter and OptimizerState blocks never free;
//  - Gradient blocks free at the end of the next zero_grad window after their
//    allocation;
//  - BatchData frees are clamped to the end of their iteration;
//  - Activation and Other keep their observed timings.
// Blocks live at the window start are re-allocated there (carryover); non-
// persistent blocks still live at the window end free at the window end.
// Throws Error(InsufficientIterations) if the analysis iteration is missing.
OrchestratedSequence orchestrate(std::span<const MemoryBlock> blocks,
                                 const trace::AnnotationIndex& annotations,
                                 const OrchestrateOptions& options = {});

// First ordering or pairing violation, if any, as "event <i>: <what>".
std::optional<std::string> check_sequence(const OrchestratedSequence& seq);

// Delimited text: '#' metadata lines, then ts_us,kind,block_id,size_bytes,class.
std::string dump_sequence(const OrchestratedSequence& seq);
// Throws Error(Simulate, Parse|Validation) naming the failing line.
OrchestratedSequence parse_sequence(std::string_view text);

}  // namespace peakmem::orch
