// Copyright 2026 The peakmem Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "peakmem/trace_ingest.hpp"

namespace peakmem::trace {

struct TimeWindow {
  std::int64_t start_us = 0;
  std::int64_t end_us = 0;
  std::size_t event_index = 0;

  bool contains(std::int64_t t) const noexcept { return start_us <= t && t <= end_us; }
  bool contains(const TimeWindow& w) const noexcept {
    return start_us <= w.start_us && w.end_us <= end_us;
  }
};

struct MarkerWindow {
  TimeWindow window;
  // Index of the iteration window that contains this marker; absent when the
  // marker sits before the first iteration or outside every iteration.
  std::optional<std::size_t> iteration;
};

struct AnnotationIndex {
  std::vector<TimeWindow> iterations;  // ordered, non-overlapping
  std::vector<MarkerWindow> zero_grad;
  std::vector<MarkerWindow> dataloader;
  std::vector<MarkerWindow> optimizer_step;

  bool has_zero_grad() const noexcept { return !zero_grad.empty(); }

  // Markers of one kind belonging to a given iteration, in time order.
  std::vector<TimeWindow> in_iteration(const std::vector<MarkerWindow>& markers,
                                       std::size_t iteration) const;
  std::optional<std::size_t> iteration_containing(std::int64_t t) const;
};

// Builds the annotation index from UserAnnotation events.
// Throws Error(InsufficientIterations) when fewer than `min_iterations`
// iteration markers exist and Error(StructuralTrace) when iteration windows
// overlap.
AnnotationIndex index_annotations(std::span<const TraceEvent> events, const FieldMapping& mapping,
                                  std::size_t min_iterations = 2);

}  // namespace peakmem::trace
