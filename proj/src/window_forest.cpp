// Copyright 2026 The peakmem Authors
// SPDX-License-Identifier: Apache-2.0

#include "peakmem/window_forest.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <sstream>

#include "peakmem/error.hpp"

namespace peakmem::trace {

namespace {
constexpr std::size_t kNoNode = std::numeric_limits<std::size_t>::max();
constexpr std::size_t kMaxListedOffenders = 8;

bool is_window(Category c) { return c == Category::PythonFunction || c == Category::CpuOp; }
}  // namespace

WindowForest build_windows(std::span<const TraceEvent> events) {
  std::map<std::int64_t, std::vector<std::size_t>> by_thread;
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (is_window(events[i].category)) by_thread[events[i].thread_id].push_back(i);
  }

  WindowForest forest;
  forest.event_to_node_.assign(events.size(), kNoNode);
  std::size_t offender_count = 0;
  std::ostringstream offenders;

  for (auto& [tid, indices] : by_thread) {
    std::sort(indices.begin(), indices.end(), [&](std::size_t a, std::size_t b) {
      const auto& ea = events[a];
      const auto& eb = events[b];
      if (ea.start_us != eb.start_us) return ea.start_us < eb.start_us;
      if (ea.end_us() != eb.end_us()) return ea.end_us() > eb.end_us();
      return ea.file_order < eb.file_order;
    });

    WindowForest::ThreadRange range;
    range.thread_id = tid;
    range.begin = forest.nodes_.size();
    std::vector<std::size_t> stack;  // node indices of open ancestors

    for (std::size_t event_index : indices) {
      const TraceEvent& ev = events[event_index];
      const std::int64_t start = ev.start_us;
      const std::int64_t end = ev.end_us();

      bool overlap = false;
      while (!stack.empty()) {
        const WindowNode& top = forest.nodes_[stack.back()];
        if (top.start_us <= start && end <= top.end_us) break;
        if (top.end_us <= start) {
          stack.pop_back();
          continue;
        }
        overlap = true;
        if (offender_count < kMaxListedOffenders) {
          const TraceEvent& other = events[top.event_index];
          offenders << "\n  thread " << tid << ": '" << other.name << "' [" << top.start_us << ","
                    << top.end_us << "] vs '" << ev.name << "' [" << start << "," << end << "]";
        }
        ++offender_count;
        break;
      }
      if (overlap) continue;

      WindowNode node;
      node.event_index = event_index;
      node.start_us = start;
      node.end_us = end;
      node.category = ev.category;
      node.thread_id = tid;
      const std::size_t id = forest.nodes_.size();
      if (!stack.empty()) {
        node.parent = stack.back();
        node.depth = forest.nodes_[stack.back()].depth + 1;
        forest.nodes_[stack.back()].children.push_back(id);
      } else {
        range.roots.push_back(id);
      }
      forest.nodes_.push_back(std::move(node));
      forest.event_to_node_[event_index] = id;
      stack.push_back(id);
    }
    range.end = forest.nodes_.size();
    forest.threads_.push_back(std::move(range));
  }

  if (offender_count > 0) {
    std::string message = std::to_string(offender_count) + " partially overlapping window(s)" +
                          offenders.str();
    if (offender_count > kMaxListedOffenders) message += "\n  ...";
    throw Error(Stage::Ingest, ErrorKind::StructuralTrace, message);
  }
  return forest;
}

std::optional<std::size_t> WindowForest::innermost_containing(std::int64_t thread_id,
                                                              std::int64_t t) const {
  auto range_it = std::lower_bound(
      threads_.begin(), threads_.end(), thread_id,
      [](const ThreadRange& r, std::int64_t tid) { return r.thread_id < tid; });
  if (range_it == threads_.end() || range_it->thread_id != thread_id) return std::nullopt;

  // Last node in pre-order with start <= t; walking up from it reaches the
  // deepest container first because the family is laminar.
  auto first = nodes_.begin() + static_cast<std::ptrdiff_t>(range_it->begin);
  auto last = nodes_.begin() + static_cast<std::ptrdiff_t>(range_it->end);
  auto it = std::upper_bound(first, last, t,
                             [](std::int64_t value, const WindowNode& n) { return value < n.start_us; });
  if (it == first) return std::nullopt;
  std::optional<std::size_t> cur = static_cast<std::size_t>(std::distance(nodes_.begin(), it) - 1);
  while (cur) {
    if (nodes_[*cur].contains(t)) return cur;
    cur = nodes_[*cur].parent;
  }
  return std::nullopt;
}

std::optional<std::size_t> WindowForest::nearest_ancestor(std::size_t node, Category category) const {
  auto cur = nodes_.at(node).parent;
  while (cur) {
    if (nodes_[*cur].category == category) return cur;
    cur = nodes_[*cur].parent;
  }
  return std::nullopt;
}

std::optional<std::size_t> WindowForest::node_for_event(std::size_t event_index) const {
  if (event_index >= event_to_node_.size() || event_to_node_[event_index] == kNoNode) {
    return std::nullopt;
  }
  return event_to_node_[event_index];
}

}  // namespace peakmem::trace
