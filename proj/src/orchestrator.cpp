// Copyright 2026 The peakmem Authors
// SPDX-License-Identifier: Apache-2.0

#include "peakmem/orchestrator.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_map>

#include "peakmem/error.hpp"
#include "peakmem/text_io.hpp"

namespace peakmem::orch {

using trace::Category;
using trace::TimeWindow;

std::string_view to_string(EventKind kind) { return kind == EventKind::Alloc ? "alloc" : "free"; }

bool event_order(const OrchestratedEvent& a, const OrchestratedEvent& b) noexcept {
  if (a.ts_us != b.ts_us) return a.ts_us < b.ts_us;
  if (a.kind != b.kind) return a.kind < b.kind;
  return a.block_id < b.block_id;
}

namespace {

bool inside_any(const std::vector<trace::MarkerWindow>& markers, std::int64_t t) {
  return std::any_of(markers.begin(), markers.end(),
                     [&](const trace::MarkerWindow& m) { return m.window.contains(t); });
}

// Backward ops are CpuOps that reuse the sequence number of an earlier op
// (the forward op they differentiate) and whose name carries the marker.
// Forward ops that do not record an autograd node repeat the current
// sequence number, so the number alone does not identify a backward op.
std::vector<bool> backward_ops(std::span<const trace::TraceEvent> events,
                               const trace::WindowForest& forest, const std::string& marker) {
  std::vector<bool> backward(forest.size(), false);
  std::unordered_map<std::int64_t, std::vector<std::size_t>> by_seq;
  for (std::size_t n = 0; n < forest.size(); ++n) {
    const auto& node = forest.node(n);
    if (node.category != Category::CpuOp) continue;
    const auto& seq = events[node.event_index].seq_no;
    if (seq) by_seq[*seq].push_back(n);
  }
  for (auto& [seq, nodes] : by_seq) {
    if (nodes.size() < 2) continue;
    auto first = std::min_element(nodes.begin(), nodes.end(), [&](std::size_t a, std::size_t b) {
      const auto& ea = events[forest.node(a).event_index];
      const auto& eb = events[forest.node(b).event_index];
      if (ea.start_us != eb.start_us) return ea.start_us < eb.start_us;
      return ea.file_order < eb.file_order;
    });
    for (std::size_t n : nodes) {
      if (n == *first) continue;
      const auto& name = events[forest.node(n).event_index].name;
      if (marker.empty() || name.find(marker) != std::string::npos) backward[n] = true;
    }
  }
  return backward;
}

// Outermost backward CpuOp among `node` and its ancestors.
std::optional<std::size_t> outermost_backward(std::size_t node, const trace::WindowForest& forest,
                                              const std::vector<bool>& backward) {
  std::optional<std::size_t> found;
  for (std::optional<std::size_t> cur = node; cur; cur = forest.node(*cur).parent) {
    if (backward[*cur]) found = cur;
  }
  return found;
}

}  // namespace

std::vector<MemoryBlock> classify_blocks(std::vector<MemoryBlock> blocks,
                                         std::span<const trace::TraceEvent> events,
                                         const trace::WindowForest& forest,
                                         const trace::AnnotationIndex& annotations,
                                         const ClassifyOptions& options) {
  const std::int64_t first_iteration_start =
      annotations.iterations.empty() ? std::numeric_limits<std::int64_t>::min()
                                     : annotations.iterations.front().start_us;
  const auto backward = backward_ops(events, forest, options.backward_marker);

  std::sort(blocks.begin(), blocks.end(), [](const MemoryBlock& a, const MemoryBlock& b) {
    if (a.alloc_us != b.alloc_us) return a.alloc_us < b.alloc_us;
    return a.block_id < b.block_id;
  });

  for (MemoryBlock& b : blocks) {
    if (b.persistent() && b.alloc_us < first_iteration_start) b.lifecycle = LifecycleClass::Parameter;
  }
  std::map<std::uint64_t, std::size_t> state_budget;
  for (const MemoryBlock& b : blocks) {
    if (b.lifecycle == LifecycleClass::Parameter) {
      state_budget[b.size_bytes] += options.max_states_per_parameter;
    }
  }

  for (MemoryBlock& b : blocks) {
    if (b.lifecycle == LifecycleClass::Parameter) continue;

    if (inside_any(annotations.optimizer_step, b.alloc_us)) {
      auto it = state_budget.find(b.size_bytes);
      if (it != state_budget.end() && it->second > 0) {
        --it->second;
        b.lifecycle = LifecycleClass::OptimizerState;
        continue;
      }
    }
    if (b.attribution) {
      if (auto bw = outermost_backward(b.attribution->op_node, forest, backward)) {
        if (b.persistent() || *b.dealloc_us > forest.node(*bw).end_us) {
          b.lifecycle = LifecycleClass::Gradient;
          continue;
        }
      }
    }
    if (inside_any(annotations.dataloader, b.alloc_us)) {
      b.lifecycle = LifecycleClass::BatchData;
    } else if (annotations.iteration_containing(b.alloc_us)) {
      b.lifecycle = LifecycleClass::Activation;
    } else {
      b.lifecycle = LifecycleClass::Other;
    }
  }
  return blocks;
}

OrchestratedSequence orchestrate(std::span<const MemoryBlock> blocks,
                                 const trace::AnnotationIndex& annotations,
                                 const OrchestrateOptions& options) {
  if (options.analysis_iteration >= annotations.iterations.size()) {
    throw Error(Stage::Orchestrate, ErrorKind::InsufficientIterations,
                "analysis iteration " + std::to_string(options.analysis_iteration + 1) +
                    " requested but the trace has " +
                    std::to_string(annotations.iterations.size()));
  }
  const TimeWindow& window = annotations.iterations[options.analysis_iteration];
  const std::int64_t ws = window.start_us;
  const std::int64_t we = window.end_us;

  std::vector<TimeWindow> zero_grad;
  for (const auto& m : annotations.zero_grad) zero_grad.push_back(m.window);

  OrchestratedSequence seq;
  seq.analysis_window = {ws, we};

  for (const MemoryBlock& b : blocks) {
    // GPU-side lifetime [alloc, free) in trace time; nullopt free = forever.
    const std::int64_t alloc = b.alloc_us;
    std::optional<std::int64_t> free = b.dealloc_us;
    bool persistent_class = false;

    switch (b.lifecycle) {
      case LifecycleClass::Parameter:
      case LifecycleClass::OptimizerState:
        persistent_class = true;
        free.reset();
        break;
      case LifecycleClass::Gradient: {
        free.reset();
        auto it = std::find_if(zero_grad.begin(), zero_grad.end(),
                               [&](const TimeWindow& w) { return w.end_us > alloc; });
        if (it != zero_grad.end()) free = it->end_us;
        break;
      }
      case LifecycleClass::BatchData:
        if (auto k = annotations.iteration_containing(alloc)) {
          const std::int64_t bound =
              std::max(annotations.iterations[*k].end_us, alloc + 1);
          free = free ? std::min(*free, bound) : bound;
        }
        break;
      default:
        break;
    }

    const std::int64_t free_at = free.value_or(std::numeric_limits<std::int64_t>::max());
    if (alloc >= we) continue;
    if (free_at <= ws) continue;

    const std::int64_t alloc_ts = std::max(alloc, ws);
    if (alloc < ws) seq.carryover_ids.push_back(b.block_id);
    seq.events.push_back({alloc_ts, EventKind::Alloc, b.block_id, b.size_bytes, b.lifecycle});
    if (persistent_class) continue;
    const std::int64_t free_ts = std::min(free_at, we);
    seq.events.push_back({free_ts, EventKind::Free, b.block_id, b.size_bytes, b.lifecycle});
  }

  std::sort(seq.events.begin(), seq.events.end(), event_order);
  std::sort(seq.carryover_ids.begin(), seq.carryover_ids.end());
  return seq;
}

std::optional<std::string> check_sequence(const OrchestratedSequence& seq) {
  struct Seen {
    bool alloc = false;
    bool freed = false;
    std::int64_t alloc_ts = 0;
    std::uint64_t size = 0;
  };
  std::unordered_map<std::size_t, Seen> seen;
  seen.reserve(seq.events.size());
  for (std::size_t i = 0; i < seq.events.size(); ++i) {
    const auto& e = seq.events[i];
    auto fail = [&](const std::string& what) {
      return "event " + std::to_string(i) + " (block " + std::to_string(e.block_id) + "): " + what;
    };
    if (i > 0 && event_order(e, seq.events[i - 1])) return fail("out of order");
    if (i > 0 && !event_order(seq.events[i - 1], e)) return fail("duplicate event");
    if (e.size_bytes == 0) return fail("zero size");
    Seen& s = seen[e.block_id];
    if (e.kind == EventKind::Alloc) {
      if (s.alloc) return fail("second alloc of the same block");
      s.alloc = true;
      s.alloc_ts = e.ts_us;
      s.size = e.size_bytes;
    } else {
      if (!s.alloc) return fail("free without a preceding alloc");
      if (s.freed) return fail("second free of the same block");
      if (e.ts_us <= s.alloc_ts) return fail("free not after its alloc");
      if (e.size_bytes != s.size) return fail("free size differs from alloc size");
      s.freed = true;
    }
  }
  return std::nullopt;
}

std::string dump_sequence(const OrchestratedSequence& seq) {
  std::ostringstream out;
  out << "# analysis_window_us=" << seq.analysis_window.start_us << ','
      << seq.analysis_window.end_us << '\n';
  out << "# carryover_ids=";
  for (std::size_t i = 0; i < seq.carryover_ids.size(); ++i) {
    if (i) out << ';';
    out << seq.carryover_ids[i];
  }
  out << '\n';
  out << "ts_us,kind,block_id,size_bytes,class\n";
  for (const auto& e : seq.events) {
    out << e.ts_us << ',' << to_string(e.kind) << ',' << e.block_id << ',' << e.size_bytes << ','
        << lifecycle::to_string(e.lifecycle) << '\n';
  }
  return out.str();
}

OrchestratedSequence parse_sequence(std::string_view text) {
  OrchestratedSequence seq;
  bool header_seen = false;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    return Error(Stage::Simulate, ErrorKind::Parse,
                 "sequence line " + std::to_string(line_no) + ": " + what);
  };
  for (std::string_view raw : split(text, '\n')) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '#') {
      line.remove_prefix(1);
      line = trim(line);
      if (line.starts_with("analysis_window_us=")) {
        auto parts = split(line.substr(19), ',');
        auto s = parts.size() == 2 ? parse_int(parts[0]) : std::nullopt;
        auto e = parts.size() == 2 ? parse_int(parts[1]) : std::nullopt;
        if (!s || !e) throw fail("bad analysis_window_us");
        seq.analysis_window = {*s, *e};
      } else if (line.starts_with("carryover_ids=")) {
        const auto list = line.substr(14);
        if (!list.empty()) {
          for (auto part : split(list, ';')) {
            auto id = parse_uint(part);
            if (!id) throw fail("bad carryover id");
            seq.carryover_ids.push_back(static_cast<std::size_t>(*id));
          }
        }
      }
      continue;
    }
    if (!header_seen) {
      header_seen = true;
      if (line.starts_with("ts_us")) continue;
    }
    auto fields = split(line, ',');
    if (fields.size() < 4 || fields.size() > 5) throw fail("expected 4 or 5 fields");
    OrchestratedEvent e;
    auto ts = parse_int(fields[0]);
    auto id = parse_uint(fields[2]);
    auto size = parse_uint(fields[3]);
    if (!ts || !id || !size) throw fail("bad number");
    const auto kind = trim(fields[1]);
    if (kind == "alloc") {
      e.kind = EventKind::Alloc;
    } else if (kind == "free") {
      e.kind = EventKind::Free;
    } else {
      throw fail("kind must be alloc or free");
    }
    e.ts_us = *ts;
    e.block_id = static_cast<std::size_t>(*id);
    e.size_bytes = *size;
    if (fields.size() == 5 && !trim(fields[4]).empty()) {
      auto c = lifecycle::lifecycle_from_string(trim(fields[4]));
      if (!c) throw fail("unknown class '" + std::string(trim(fields[4])) + "'");
      e.lifecycle = *c;
    }
    seq.events.push_back(e);
  }
  return seq;
}

}  // namespace peakmem::orch
