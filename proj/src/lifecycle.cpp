// Copyright 2026 The peakmem Authors
// SPDX-License-Identifier: Apache-2.0

#include "peakmem/lifecycle.hpp"

#include <algorithm>
#include <array>
#include <sstream>
#include <unordered_map>

#include "peakmem/error.hpp"

namespace peakmem::lifecycle {

namespace {
constexpr std::array<std::pair<LifecycleClass, std::string_view>, 7> kClassNames{{
    {LifecycleClass::Unclassified, "unclassified"},
    {LifecycleClass::Parameter, "parameter"},
    {LifecycleClass::BatchData, "batch_data"},
    {LifecycleClass::Activation, "activation"},
    {LifecycleClass::Gradient, "gradient"},
    {LifecycleClass::OptimizerState, "optimizer_state"},
    {LifecycleClass::Other, "other"},
}};
}  // namespace

std::string_view to_string(LifecycleClass c) {
  for (const auto& [value, name] : kClassNames) {
    if (value == c) return name;
  }
  return "unknown";
}

std::optional<LifecycleClass> lifecycle_from_string(std::string_view s) {
  for (const auto& [value, name] : kClassNames) {
    if (name == s) return value;
  }
  return std::nullopt;
}

std::string_view to_string(AttributionRule r) {
  return r == AttributionRule::ContainedInOp ? "contained" : "outlives_component";
}

Reconstruction reconstruct_blocks(std::span<const trace::TraceEvent> events) {
  Reconstruction out;
  // Open blocks per address, most recent last.
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> open;

  for (std::size_t i = 0; i < events.size(); ++i) {
    const trace::TraceEvent& ev = events[i];
    if (ev.category != trace::Category::CpuInstant || !ev.mem) continue;
    const trace::MemArgs& mem = *ev.mem;

    if (mem.bytes > 0) {
      MemoryBlock block;
      block.block_id = out.blocks.size();
      block.address = mem.address;
      block.size_bytes = static_cast<std::uint64_t>(mem.bytes);
      block.alloc_us = ev.start_us;
      block.device_id = mem.device_id;
      block.thread_id = ev.thread_id;
      block.alloc_event = i;
      open[mem.address].push_back(block.block_id);
      out.blocks.push_back(block);
      continue;
    }

    auto it = open.find(mem.address);
    if (it == open.end() || it->second.empty()) {
      ++out.tallies.orphan_frees;
      continue;
    }
    auto& stack = it->second;
    const auto size = static_cast<std::uint64_t>(-mem.bytes);
    auto match = std::find_if(stack.rbegin(), stack.rend(),
                              [&](std::size_t id) { return out.blocks[id].size_bytes == size; });
    std::size_t closed = 0;
    if (match == stack.rend()) {
      ++out.tallies.size_mismatches;
      closed = stack.back();
      stack.pop_back();
    } else {
      closed = *match;
      stack.erase(std::next(match).base());
    }
    MemoryBlock& block = out.blocks[closed];
    std::int64_t when = ev.start_us;
    if (when <= block.alloc_us) {
      ++out.tallies.zero_lifetime;
      when = block.alloc_us + 1;
    }
    block.dealloc_us = when;
    block.dealloc_event = i;
  }
  return out;
}

std::vector<MemoryBlock> attribute_blocks(std::vector<MemoryBlock> blocks,
                                          const trace::WindowForest& forest) {
  using trace::Category;
  for (MemoryBlock& block : blocks) {
    block.attribution.reset();
    const auto start = forest.innermost_containing(block.thread_id, block.alloc_us);
    if (!start) continue;

    std::optional<Attribution> contained;
    std::optional<Attribution> outlives;
    for (std::optional<std::size_t> cur = start; cur; cur = forest.node(*cur).parent) {
      const trace::WindowNode& op = forest.node(*cur);
      if (op.category != Category::CpuOp) continue;
      const auto component = forest.nearest_ancestor(*cur, Category::PythonFunction);
      if (block.dealloc_us && *block.dealloc_us <= op.end_us) {
        contained = Attribution{*cur, component, AttributionRule::ContainedInOp};
        break;
      }
      if (!outlives && component &&
          (block.persistent() || *block.dealloc_us > forest.node(*component).end_us)) {
        outlives = Attribution{*cur, component, AttributionRule::OutlivesComponent};
      }
    }
    if (contained) {
      block.attribution = contained;
    } else {
      block.attribution = outlives;
    }
  }
  return blocks;
}

std::vector<MemoryBlock> filter_relevant(std::vector<MemoryBlock> blocks) {
  std::erase_if(blocks, [](const MemoryBlock& b) { return !b.attribution.has_value(); });
  if (blocks.empty()) {
    throw Error(Stage::Analyze, ErrorKind::EmptyAnalysis,
                "no memory block could be attributed to an operator");
  }
  return blocks;
}

std::string dump_blocks(std::span<const MemoryBlock> blocks,
                        std::span<const trace::TraceEvent> events,
                        const trace::WindowForest& forest) {
  std::ostringstream out;
  out << "block_id,size_bytes,alloc_us,dealloc_us,op,component,condition,class\n";
  auto name_of = [&](std::size_t node) -> std::string {
    std::string name = events[forest.node(node).event_index].name;
    // Keep the dump single-field: the delimiter is ','.
    std::replace(name.begin(), name.end(), ',', ';');
    return name;
  };
  for (const MemoryBlock& b : blocks) {
    out << b.block_id << ',' << b.size_bytes << ',' << b.alloc_us << ',';
    if (b.dealloc_us) out << *b.dealloc_us;
    out << ',';
    if (b.attribution) {
      out << name_of(b.attribution->op_node) << ',';
      if (b.attribution->component_node) out << name_of(*b.attribution->component_node);
      out << ',' << to_string(b.attribution->rule);
    } else {
      out << ",,";
    }
    out << ',' << to_string(b.lifecycle) << '\n';
  }
  return out.str();
}

}  // namespace peakmem::lifecycle
