// Copyright 2026 The peakmem Authors
// SPDX-License-Identifier: Apache-2.0

#include "peakmem/allocator_sim.hpp"

#include <algorithm>
#include <iterator>
#include <sstream>

#include "peakmem/error.hpp"
#include "peakmem/text_io.hpp"

namespace peakmem::sim {

namespace {

[[noreturn]] void invalid_config(const std::string& what) {
  throw Error(Stage::Simulate, ErrorKind::Validation, "sim config: " + what);
}

struct ConfigField {
  const char* name;
  std::uint64_t SimConfig::*member;
};

constexpr ConfigField kConfigFields[] = {
    {"min_block_bytes", &SimConfig::min_block_bytes},
    {"small_alloc_threshold_bytes", &SimConfig::small_alloc_threshold_bytes},
    {"small_segment_bytes", &SimConfig::small_segment_bytes},
    {"large_segment_bytes", &SimConfig::large_segment_bytes},
    {"min_large_alloc_bytes", &SimConfig::min_large_alloc_bytes},
    {"large_round_bytes", &SimConfig::large_round_bytes},
    {"device_capacity_bytes", &SimConfig::device_capacity_bytes},
    {"split_remainder_small_min", &SimConfig::split_remainder_small_min},
    {"split_remainder_large_min", &SimConfig::split_remainder_large_min},
};

}  // namespace

void SimConfig::validate() const {
  if (min_block_bytes == 0) invalid_config("min_block_bytes must be positive");
  if (large_round_bytes == 0) invalid_config("large_round_bytes must be positive");
  if (device_capacity_bytes == 0) invalid_config("device_capacity_bytes must be positive");
  for (std::uint64_t v : {small_segment_bytes, large_segment_bytes, large_round_bytes}) {
    if (v % min_block_bytes != 0) {
      invalid_config("min_block_bytes must divide segment sizes and large_round_bytes");
    }
  }
  if (!(small_alloc_threshold_bytes < min_large_alloc_bytes &&
        min_large_alloc_bytes < large_segment_bytes)) {
    invalid_config("need small_alloc_threshold < min_large_alloc < large_segment");
  }
  if (small_alloc_threshold_bytes > small_segment_bytes) {
    invalid_config("small_alloc_threshold_bytes exceeds small_segment_bytes");
  }
  if (split_remainder_small_min == 0 || split_remainder_large_min == 0) {
    invalid_config("split minima must be positive");
  }
}

SimConfig load_sim_config(std::string_view key_value_text, SimConfig base) {
  for (const auto& [key, value] : parse_key_values(key_value_text, Stage::Simulate)) {
    const auto* it = std::find_if(std::begin(kConfigFields), std::end(kConfigFields),
                                  [&](const ConfigField& f) { return key == f.name; });
    if (it == std::end(kConfigFields)) invalid_config("unknown key '" + key + "'");
    auto bytes = parse_byte_size(value);
    if (!bytes) invalid_config("bad byte value for '" + key + "': " + value);
    base.*(it->member) = *bytes;
  }
  return base;
}

std::string dump_sim_config(const SimConfig& cfg) {
  std::ostringstream out;
  for (const auto& f : kConfigFields) out << f.name << " = " << cfg.*(f.member) << '\n';
  return out.str();
}

std::uint64_t round_size(std::uint64_t request_bytes, const SimConfig& cfg) {
  if (request_bytes == 0) {
    throw Error(Stage::Simulate, ErrorKind::ContractViolation, "zero-byte allocation request");
  }
  const std::uint64_t rem = request_bytes % cfg.min_block_bytes;
  return rem == 0 ? request_bytes : request_bytes + (cfg.min_block_bytes - rem);
}

std::uint64_t segment_size_for(std::uint64_t rounded_bytes, const SimConfig& cfg) {
  if (rounded_bytes <= cfg.small_alloc_threshold_bytes) return cfg.small_segment_bytes;
  if (rounded_bytes < cfg.min_large_alloc_bytes) return cfg.large_segment_bytes;
  const std::uint64_t rem = rounded_bytes % cfg.large_round_bytes;
  return rem == 0 ? rounded_bytes : rounded_bytes + (cfg.large_round_bytes - rem);
}

Pool pool_for(std::uint64_t rounded_bytes, const SimConfig& cfg) {
  return rounded_bytes <= cfg.small_alloc_threshold_bytes ? Pool::Small : Pool::Large;
}

SimState::SimState(SimConfig cfg) : cfg_(cfg) { cfg_.validate(); }

std::uint64_t SimState::split_min(Pool pool) const {
  return pool == Pool::Small ? cfg_.split_remainder_small_min : cfg_.split_remainder_large_min;
}

bool SimState::device_grant(std::uint64_t bytes) {
  if (bytes > cfg_.device_capacity_bytes || reserved_ > cfg_.device_capacity_bytes - bytes) {
    return false;
  }
  reserved_ += bytes;
  return true;
}

std::size_t SimState::reclaim(std::uint64_t needed) {
  std::vector<std::pair<std::uint64_t, std::size_t>> candidates;  // (size, id)
  for (const auto& [id, seg] : segments_) {
    if (seg.fully_free()) candidates.emplace_back(seg.total_bytes, id);
  }
  std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::size_t released = 0;
  for (const auto& [size, id] : candidates) {
    if (needed <= cfg_.device_capacity_bytes && reserved_ <= cfg_.device_capacity_bytes - needed) {
      break;
    }
    Segment& seg = segments_.at(id);
    const SegmentBlock& only = seg.blocks.begin()->second;
    free_index(seg.pool).erase({only.size, id, only.offset});
    reserved_ -= seg.total_bytes;
    segments_.erase(id);
    ++released;
  }
  return released;
}

AllocResult SimState::alloc(std::size_t block_id, std::uint64_t request_bytes) {
  if (live_.contains(block_id)) {
    throw Error(Stage::Simulate, ErrorKind::ContractViolation,
                "block " + std::to_string(block_id) + " is already live");
  }
  AllocResult result;
  const std::uint64_t rounded = round_size(request_bytes, cfg_);
  result.rounded_bytes = rounded;
  const Pool pool = pool_for(rounded, cfg_);
  auto& index = free_index(pool);

  auto it = index.lower_bound({rounded, 0, 0});
  if (it == index.end()) {
    const std::uint64_t seg_size = segment_size_for(rounded, cfg_);
    if (!device_grant(seg_size)) {
      result.reclaim_attempted = true;
      result.segments_released = reclaim(seg_size);
      if (!device_grant(seg_size)) return result;
    }
    Segment seg;
    seg.segment_id = next_segment_id_++;
    seg.total_bytes = seg_size;
    seg.pool = pool;
    seg.blocks.emplace(0, SegmentBlock{0, seg_size, BlockState::Free, 0, 0});
    const std::size_t id = seg.segment_id;
    segments_.emplace(id, std::move(seg));
    it = index.insert({seg_size, id, 0}).first;
    result.new_segment = true;
  }

  const auto [size, segment_id, offset] = *it;
  index.erase(it);
  Segment& seg = segments_.at(segment_id);
  SegmentBlock& block = seg.blocks.at(offset);
  const std::uint64_t remainder = size - rounded;
  if (remainder >= split_min(pool)) {
    block.size = rounded;
    const std::uint64_t rest_offset = offset + rounded;
    seg.blocks.emplace(rest_offset, SegmentBlock{rest_offset, remainder, BlockState::Free, 0, 0});
    index.insert({remainder, segment_id, rest_offset});
  }
  block.state = BlockState::Used;
  block.requested = rounded;
  block.block_id = block_id;
  ++seg.used_blocks;
  allocated_ += rounded;
  live_.emplace(block_id, std::make_pair(segment_id, offset));
  result.ok = true;
  return result;
}

void SimState::free(std::size_t block_id) {
  auto live_it = live_.find(block_id);
  if (live_it == live_.end()) {
    throw Error(Stage::Simulate, ErrorKind::ContractViolation,
                "free of unknown block " + std::to_string(block_id));
  }
  const auto [segment_id, offset] = live_it->second;
  live_.erase(live_it);

  Segment& seg = segments_.at(segment_id);
  auto& index = free_index(seg.pool);
  auto it = seg.blocks.find(offset);
  allocated_ -= it->second.requested;
  it->second.state = BlockState::Free;
  it->second.requested = 0;
  --seg.used_blocks;

  if (it != seg.blocks.begin()) {
    auto prev = std::prev(it);
    if (prev->second.state == BlockState::Free) {
      index.erase({prev->second.size, segment_id, prev->first});
      prev->second.size += it->second.size;
      seg.blocks.erase(it);
      it = prev;
    }
  }
  auto next = std::next(it);
  if (next != seg.blocks.end() && next->second.state == BlockState::Free) {
    index.erase({next->second.size, segment_id, next->first});
    it->second.size += next->second.size;
    seg.blocks.erase(next);
  }
  index.insert({it->second.size, segment_id, it->first});
}

std::optional<std::string> SimState::check_invariants() const {
  std::uint64_t reserved = 0;
  std::uint64_t allocated = 0;
  std::size_t free_small = 0;
  std::size_t free_large = 0;
  std::size_t used_total = 0;
  for (const auto& [id, seg] : segments_) {
    const std::string where = "segment " + std::to_string(id) + ": ";
    if (seg.segment_id != id) return where + "id mismatch";
    if (seg.total_bytes % cfg_.min_block_bytes != 0) return where + "unaligned segment size";
    reserved += seg.total_bytes;
    std::uint64_t expect_offset = 0;
    std::size_t used = 0;
    bool prev_free = false;
    for (const auto& [offset, b] : seg.blocks) {
      if (offset != b.offset || offset != expect_offset) return where + "blocks do not tile";
      if (b.size == 0) return where + "empty block";
      if (b.size % cfg_.min_block_bytes != 0) return where + "unaligned block";
      expect_offset += b.size;
      if (b.state == BlockState::Free) {
        if (prev_free) return where + "adjacent free blocks";
        const auto& index = seg.pool == Pool::Small ? free_small_ : free_large_;
        if (!index.contains({b.size, id, offset})) return where + "free block missing from index";
        (seg.pool == Pool::Small ? free_small : free_large) += 1;
        prev_free = true;
      } else {
        prev_free = false;
        ++used;
        if (b.requested == 0 || b.requested > b.size) return where + "bad requested size";
        allocated += b.requested;
        auto live_it = live_.find(b.block_id);
        if (live_it == live_.end() || live_it->second != std::make_pair(id, offset)) {
          return where + "used block not in live map";
        }
      }
    }
    if (expect_offset != seg.total_bytes) return where + "blocks do not cover segment";
    if (used != seg.used_blocks) return where + "used count drift";
    used_total += used;
  }
  if (free_small != free_small_.size() || free_large != free_large_.size()) {
    return std::string("free index has stale entries");
  }
  if (used_total != live_.size()) return std::string("live map has stale entries");
  if (reserved != reserved_) return std::string("reserved_bytes drift");
  if (allocated != allocated_) return std::string("allocated_bytes drift");
  if (!(allocated_ <= reserved_ && reserved_ <= cfg_.device_capacity_bytes)) {
    return std::string("allocated <= reserved <= capacity violated");
  }
  return std::nullopt;
}

SimOutcome simulate(const orch::OrchestratedSequence& seq, const SimConfig& cfg) {
  if (auto violation = orch::check_sequence(seq)) {
    throw Error(Stage::Simulate, ErrorKind::ContractViolation, "invalid sequence: " + *violation);
  }
  SimState state(cfg);
  SimOutcome outcome;
  outcome.curve.reserve(seq.events.size());
  for (std::size_t i = 0; i < seq.events.size(); ++i) {
    const auto& e = seq.events[i];
    if (e.kind == orch::EventKind::Alloc) {
      if (!state.alloc(e.block_id, e.size_bytes).ok) {
        outcome.oom = OomEvent{e.ts_us, e.size_bytes, e.block_id, i};
        break;
      }
    } else {
      state.free(e.block_id);
    }
    outcome.curve.push_back({e.ts_us, state.allocated_bytes(), state.reserved_bytes()});
    outcome.peak_reserved_bytes = std::max(outcome.peak_reserved_bytes, state.reserved_bytes());
    outcome.peak_allocated_bytes = std::max(outcome.peak_allocated_bytes, state.allocated_bytes());
  }
  return outcome;
}

std::string dump_curve(const SimOutcome& outcome) {
  std::ostringstream out;
  out << "ts_us,allocated_bytes,reserved_bytes\n";
  for (const auto& p : outcome.curve) {
    out << p.ts_us << ',' << p.allocated_bytes << ',' << p.reserved_bytes << '\n';
  }
  return out.str();
}

}  // namespace peakmem::sim
