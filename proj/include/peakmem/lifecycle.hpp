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

#include "peakmem/trace_ingest.hpp"
#include "peakmem/window_forest.hpp"

namespace peakmem::lifecycle {

enum class LifecycleClass {
  Unclassified,
  Parameter,
  BatchData,
  Activation,
  Gradient,
  OptimizerState,
  Other,
};

std::string_view to_string(LifecycleClass c);
std::optional<LifecycleClass> lifecycle_from_string(std::string_view s);

enum class AttributionRule {
  ContainedInOp,      // whole lifespan inside the op window
  OutlivesComponent,  // allocated in the op, outlives the enclosing component
};

std::string_view to_string(AttributionRule r);

struct Attribution {
  std::size_t op_node = 0;                    // WindowForest node of the CpuOp
  std::optional<std::size_t> component_node;  // nearest PythonFunction ancestor
  AttributionRule rule = AttributionRule::ContainedInOp;

  bool operator==(const Attribution&) const = default;
};

struct MemoryBlock {
  std::size_t block_id = 0;
  std::uint64_t address = 0;
  std::uint64_t size_bytes = 0;
  std::int64_t alloc_us = 0;
  std::optional<std::int64_t> dealloc_us;  // absent => persistent
  std::int64_t device_id = 0;
  std::int64_t thread_id = 0;
  // Positions of the originating instants in the event list.
  std::size_t alloc_event = 0;
  std::optional<std::size_t> dealloc_event;
  std::optional<Attribution> attribution;
  LifecycleClass lifecycle = LifecycleClass::Unclassified;

  bool persistent() const noexcept { return !dealloc_us.has_value(); }
  bool operator==(const MemoryBlock&) const = default;
};

struct ReconstructTallies {
  std::size_t orphan_frees = 0;     // free with no open block at the address
  std::size_t size_mismatches = 0;  // free size differs from the open block
  // Alloc and free in the same microsecond; the free is moved one tick later.
  std::size_t zero_lifetime = 0;

  bool operator==(const ReconstructTallies&) const = default;
};

struct Reconstruction {
  std::vector<MemoryBlock> blocks;  // in allocation order, block_id == index
  ReconstructTallies tallies;
};

// Pairs memory instants into blocks. A free closes the most recently opened
// block at its address with the same size; when no size matches, the most
// recent open block at the address is closed and a mismatch is tallied.
Reconstruction reconstruct_blocks(std::span<const trace::TraceEvent> events);

// Attributes each block to the innermost CpuOp window that contains its whole
// lifespan; failing that, to the innermost CpuOp window it was allocated in
// whose enclosing PythonFunction ends before the block dies.
std::vector<MemoryBlock> attribute_blocks(std::vector<MemoryBlock> blocks,
                                          const trace::WindowForest& forest);

// Keeps attributed blocks. Throws Error(EmptyAnalysis) when none remain.
std::vector<MemoryBlock> filter_relevant(std::vector<MemoryBlock> blocks);

// Delimited debug dump: one line per block with op and component names.
std::string dump_blocks(std::span<const MemoryBlock> blocks,
                        std::span<const trace::TraceEvent> events,
                        const trace::WindowForest& forest);

}  // namespace peakmem::lifecycle
