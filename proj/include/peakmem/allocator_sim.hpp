// Copyright 2026 The peakmem Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "peakmem/orchestrator.hpp"

namespace peakmem::sim {

inline constexpr std::uint64_t kKiB = 1ULL << 10;
inline constexpr std::uint64_t kMiB = 1ULL << 20;
inline constexpr std::uint64_t kGiB = 1ULL << 30;

// Caching-allocator constants. Defaults follow the CUDA caching allocator;
// device_capacity_bytes has no default and must be set.
struct SimConfig {
  std::uint64_t min_block_bytes = 512;
  std::uint64_t small_alloc_threshold_bytes = 1 * kMiB;
  std::uint64_t small_segment_bytes = 2 * kMiB;
  std::uint64_t large_segment_bytes = 20 * kMiB;
  std::uint64_t min_large_alloc_bytes = 10 * kMiB;
  std::uint64_t large_round_bytes = 2 * kMiB;
  std::uint64_t device_capacity_bytes = 0;
  std::uint64_t split_remainder_small_min = 512;
  std::uint64_t split_remainder_large_min = 1 * kMiB;

  // Throws Error(Simulate, Validation).
  void validate() const;
  bool operator==(const SimConfig&) const = default;
};

// `key = value` overrides on top of `base`; byte values accept unit suffixes.
SimConfig load_sim_config(std::string_view key_value_text, SimConfig base = {});
std::string dump_sim_config(const SimConfig& cfg);

enum class Pool : std::uint8_t { Small, Large };

// Smallest multiple of min_block_bytes >= request. Zero is a contract
// violation.
std::uint64_t round_size(std::uint64_t request_bytes, const SimConfig& cfg = {});
// Size of the segment requested from the device for a rounded request.
std::uint64_t segment_size_for(std::uint64_t rounded_bytes, const SimConfig& cfg = {});
Pool pool_for(std::uint64_t rounded_bytes, const SimConfig& cfg = {});

enum class BlockState : std::uint8_t { Used, Free };

struct SegmentBlock {
  std::uint64_t offset = 0;
  std::uint64_t size = 0;
  BlockState state = BlockState::Free;
  std::uint64_t requested = 0;  // rounded request served, 0 when free
  std::size_t block_id = 0;     // meaningful when used
};

struct Segment {
  std::size_t segment_id = 0;
  std::uint64_t total_bytes = 0;
  Pool pool = Pool::Small;
  std::map<std::uint64_t, SegmentBlock> blocks;  // keyed by offset
  std::size_t used_blocks = 0;

  bool fully_free() const noexcept { return used_blocks == 0; }
};

struct AllocResult {
  bool ok = false;
  std::uint64_t rounded_bytes = 0;
  bool new_segment = false;
  bool reclaim_attempted = false;
  std::size_t segments_released = 0;
};

// Framework-level best-fit-with-coalescing cache over segments, backed by a
// device level that only tracks capacity.
class SimState {
 public:
  explicit SimState(SimConfig cfg);

  // Best fit in the request's pool, ties by (segment id, offset). On a miss a
  // new segment is requested from the device; if refused, fully free cached
  // segments are released largest first until the request fits and the
  // device is asked once more. ok == false is an out-of-memory outcome.
  // Throws Error(ContractViolation) if `block_id` is already live.
  AllocResult alloc(std::size_t block_id, std::uint64_t request_bytes);

  // Marks the block free and merges it with free neighbours. The segment
  // stays cached. Throws Error(ContractViolation) for unknown ids.
  void free(std::size_t block_id);

  std::uint64_t reserved_bytes() const noexcept { return reserved_; }
  std::uint64_t allocated_bytes() const noexcept { return allocated_; }
  std::size_t live_blocks() const noexcept { return live_.size(); }
  const std::map<std::size_t, Segment>& segments() const noexcept { return segments_; }
  const SimConfig& config() const noexcept { return cfg_; }

  // Full structural audit; returns a description of the first violation.
  std::optional<std::string> check_invariants() const;

 private:
  using FreeKey = std::tuple<std::uint64_t, std::size_t, std::uint64_t>;  // size, segment, offset

  std::set<FreeKey>& free_index(Pool pool) { return pool == Pool::Small ? free_small_ : free_large_; }
  bool device_grant(std::uint64_t bytes);
  std::size_t reclaim(std::uint64_t needed);
  std::uint64_t split_min(Pool pool) const;

  SimConfig cfg_;
  std::map<std::size_t, Segment> segments_;
  std::set<FreeKey> free_small_;
  std::set<FreeKey> free_large_;
  std::unordered_map<std::size_t, std::pair<std::size_t, std::uint64_t>> live_;  // id -> (segment, offset)
  std::size_t next_segment_id_ = 0;
  std::uint64_t reserved_ = 0;
  std::uint64_t allocated_ = 0;
};

struct CurvePoint {
  std::int64_t ts_us = 0;
  std::uint64_t allocated_bytes = 0;
  std::uint64_t reserved_bytes = 0;

  bool operator==(const CurvePoint&) const = default;
};

struct OomEvent {
  std::int64_t ts_us = 0;
  std::uint64_t requested_bytes = 0;
  std::size_t block_id = 0;
  std::size_t event_index = 0;

  bool operator==(const OomEvent&) const = default;
};

struct SimOutcome {
  std::vector<CurvePoint> curve;  // one point per processed event
  std::uint64_t peak_reserved_bytes = 0;
  std::uint64_t peak_allocated_bytes = 0;
  std::optional<OomEvent> oom;  // curve stops before the failing event

  bool operator==(const SimOutcome&) const = default;
};

// Replays the sequence chronologically. Throws Error(ContractViolation) when
// the sequence breaks its ordering or pairing invariants.
SimOutcome simulate(const orch::OrchestratedSequence& seq, const SimConfig& cfg);

// ts_us,allocated_bytes,reserved_bytes
std::string dump_curve(const SimOutcome& outcome);

}  // namespace peakmem::sim
