// Copyright 2026 The peakmem Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "peakmem/lifecycle.hpp"

namespace peakmem::synth {

enum class ZeroGradPlacement { BeforeBackward, StartOfIteration, Absent };

std::string_view to_string(ZeroGradPlacement p);
std::optional<ZeroGradPlacement> zero_grad_from_string(std::string_view s);

struct ActivationSpec {
  std::uint64_t bytes = 0;
  std::size_t layer = 0;  // forward op that produces it, freed by its backward op
};

struct GradientSpec {
  std::uint64_t bytes = 0;
  std::size_t layer = 0;  // backward op that produces it
};

// A training loop of `parameter_bytes.size()` layers. Every iteration loads
// the batch, runs forward layer by layer, backward in reverse and an
// optimizer step; zero_grad sits where `zero_grad` says.
struct SynthSpec {
  std::size_t iterations = 3;
  std::vector<std::uint64_t> parameter_bytes;
  std::vector<ActivationSpec> activations;  // allocated every iteration
  std::vector<GradientSpec> gradients;
  std::vector<std::uint64_t> batch_bytes;
  bool optimizer_state = false;  // two persistent state tensors per parameter
  ZeroGradPlacement zero_grad = ZeroGradPlacement::StartOfIteration;
  // Scratch buffer allocated and freed inside every forward and backward op.
  std::uint64_t op_workspace_bytes = 0;
  // Script-level temporaries outside any op; the analyzer must drop them.
  bool script_noise = true;
  std::uint64_t seed = 0;
  std::int64_t grid_us = 10;
  std::int64_t jitter_us = 4;  // max per-point jitter, < grid_us

  // Throws Error(Synth, InvalidSpec).
  void validate() const;
};

// Fixture used by the golden tests and the CLI default.
SynthSpec small_spec();
// `layers` identical layers; roughly 13 trace records per layer per iteration.
SynthSpec scaled_spec(std::size_t layers, std::size_t iterations, std::uint64_t seed);

// Expected fate of one generated block. `expected_class` is absent for
// blocks the analyzer should filter out.
struct InventoryEntry {
  std::uint64_t address = 0;
  std::uint64_t size_bytes = 0;
  std::optional<lifecycle::LifecycleClass> expected_class;
  std::int64_t alloc_us = 0;
  std::optional<std::int64_t> dealloc_us;
  bool in_window = false;  // appears in the analysis-iteration sequence
  std::int64_t orch_alloc_us = 0;
  std::optional<std::int64_t> orch_free_us;

  bool operator==(const InventoryEntry&) const = default;
};

struct Inventory {
  std::vector<InventoryEntry> entries;  // in allocation order
  std::int64_t analysis_start_us = 0;
  std::int64_t analysis_end_us = 0;
};

struct SynthOutput {
  std::string trace_json;
  Inventory inventory;
  std::size_t record_count = 0;
};

// Deterministic for a given spec. The analysis window is the second
// iteration.
SynthOutput generate(const SynthSpec& spec);

std::string dump_inventory(const Inventory& inventory);

}  // namespace peakmem::synth
