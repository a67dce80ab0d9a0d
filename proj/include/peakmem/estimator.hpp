// Copyright 2026 The peakmem Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "peakmem/allocator_sim.hpp"
#include "peakmem/annotations.hpp"
#include "peakmem/lifecycle.hpp"
#include "peakmem/orchestrator.hpp"
#include "peakmem/trace_ingest.hpp"
#include "peakmem/window_forest.hpp"

namespace peakmem {

inline constexpr int kReportSchemaVersion = 1;

struct EstimateOptions {
  trace::FieldMapping mapping;
  sim::SimConfig sim;
  unsigned ingest_threads = 1;
  orch::OrchestrateOptions orchestrate;
  orch::ClassifyOptions classify;
};

struct EstimateReport {
  std::uint64_t peak_reserved_bytes = 0;  // the estimate
  std::uint64_t peak_allocated_bytes = 0;
  bool predicted_oom = false;
  std::optional<sim::OomEvent> oom;
  orch::AnalysisWindow analysis_window;
  std::size_t iteration_count = 0;
  trace::IngestStats ingest;
  lifecycle::ReconstructTallies tallies;
  std::size_t blocks_total = 0;
  std::size_t blocks_attributed = 0;
  std::size_t sequence_events = 0;
  std::size_t carryover_blocks = 0;
  std::vector<std::pair<lifecycle::LifecycleClass, std::size_t>> class_counts;  // attributed blocks
  sim::SimConfig sim;

  bool operator==(const EstimateReport&) const = default;
};

// Full pipeline output. Intermediate products back the debug dumps.
struct Estimation {
  EstimateReport report;
  trace::ParsedTrace trace;
  trace::WindowForest forest;
  trace::AnnotationIndex annotations;
  std::vector<lifecycle::MemoryBlock> blocks;  // attributed and classified
  orch::OrchestratedSequence sequence;
  sim::SimOutcome outcome;
};

// Strict: a peak equal to the capacity fits.
constexpr bool predict_oom(std::uint64_t peak_bytes, std::uint64_t capacity_bytes) noexcept {
  return peak_bytes > capacity_bytes;
}

// Errors propagate unchanged and carry the stage that raised them.
Estimation estimate(std::string_view trace_text, const EstimateOptions& options);
Estimation estimate_file(const std::filesystem::path& trace_path, const EstimateOptions& options);

// `key=value` lines; the first line is `schema_version=<n>`.
std::string serialize_report(const EstimateReport& report);

}  // namespace peakmem
