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

struct WindowNode {
  std::size_t event_index = 0;  // into the event list the forest was built from
  std::int64_t start_us = 0;
  std::int64_t end_us = 0;
  std::optional<std::size_t> parent;
  std::vector<std::size_t> children;  // ordered by start_us
  Category category = Category::CpuOp;
  std::int64_t thread_id = 0;
  std::uint32_t depth = 0;

  bool contains(std::int64_t t) const noexcept { return start_us <= t && t <= end_us; }
};

// Per-thread call hierarchy over PythonFunction and CpuOp windows. Nodes of
// one thread occupy a contiguous range in pre-order, i.e. sorted by
// (start asc, end desc, file order).
class WindowForest {
 public:
  struct ThreadRange {
    std::int64_t thread_id = 0;
    std::size_t begin = 0;
    std::size_t end = 0;
    std::vector<std::size_t> roots;
  };

  const std::vector<WindowNode>& nodes() const noexcept { return nodes_; }
  const WindowNode& node(std::size_t i) const { return nodes_.at(i); }
  const std::vector<ThreadRange>& threads() const noexcept { return threads_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Deepest window on `thread_id` with start <= t <= end.
  std::optional<std::size_t> innermost_containing(std::int64_t thread_id, std::int64_t t) const;

  // Nearest ancestor (excluding `node` itself) of the given category.
  std::optional<std::size_t> nearest_ancestor(std::size_t node, Category category) const;

  std::optional<std::size_t> node_for_event(std::size_t event_index) const;

 private:
  friend WindowForest build_windows(std::span<const TraceEvent> events);

  std::vector<WindowNode> nodes_;
  std::vector<ThreadRange> threads_;  // sorted by thread id
  std::vector<std::size_t> event_to_node_;  // SIZE_MAX where not a window
};

// Nests windows by time containment on each thread. A window is the child of
// the tightest window that contains it with closed bounds; windows that
// merely touch at an endpoint are siblings.
// Throws Error(StructuralTrace) listing partially overlapping windows.
WindowForest build_windows(std::span<const TraceEvent> events);

}  // namespace peakmem::trace
