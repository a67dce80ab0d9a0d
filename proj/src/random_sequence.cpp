// Copyright 2026 The peakmem Authors
// SPDX-License-Identifier: Apache-2.0

#include "peakmem/random_sequence.hpp"

#include <algorithm>
#include <bit>
#include <random>
#include <vector>

namespace peakmem::sim {

using orch::EventKind;
using orch::OrchestratedEvent;
using orch::OrchestratedSequence;

namespace {

std::uint64_t log_uniform(std::mt19937_64& rng, std::uint64_t lo, std::uint64_t hi) {
  const int lo_exp = std::bit_width(lo) - 1;
  const int hi_exp = std::bit_width(hi) - 1;
  const int e = std::uniform_int_distribution<int>(lo_exp, hi_exp)(rng);
  const std::uint64_t a = std::max(lo, std::uint64_t{1} << e);
  const std::uint64_t b = std::min(hi, (std::uint64_t{2} << e) - 1);
  return std::uniform_int_distribution<std::uint64_t>(a, b)(rng);
}

}  // namespace

OrchestratedSequence random_sequence(std::uint64_t seed, const RandomSequenceOptions& options) {
  std::mt19937_64 rng(seed);
  const std::size_t target = std::uniform_int_distribution<std::size_t>(1, options.max_events)(rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  struct Live {
    std::size_t id;
    std::int64_t ts;
    std::uint64_t size;
  };
  std::vector<Live> live;
  std::vector<std::uint64_t> seen_sizes;
  OrchestratedSequence seq;
  std::int64_t ts = 0;
  std::size_t next_id = 0;
  const double free_bias = unit(rng) * 0.5 + 0.25;

  while (seq.events.size() < target) {
    ts += std::uniform_int_distribution<std::int64_t>(0, 3)(rng);
    std::vector<std::size_t> freeable;
    for (std::size_t i = 0; i < live.size(); ++i) {
      if (live[i].ts < ts) freeable.push_back(i);
    }
    if (!freeable.empty() && unit(rng) < free_bias) {
      const std::size_t pick =
          freeable[std::uniform_int_distribution<std::size_t>(0, freeable.size() - 1)(rng)];
      const Live l = live[pick];
      live.erase(live.begin() + static_cast<std::ptrdiff_t>(pick));
      seq.events.push_back({ts, EventKind::Free, l.id, l.size, lifecycle::LifecycleClass::Other});
      continue;
    }
    std::uint64_t size;
    if (!seen_sizes.empty() && unit(rng) < 0.3) {
      size = seen_sizes[std::uniform_int_distribution<std::size_t>(0, seen_sizes.size() - 1)(rng)];
    } else {
      size = log_uniform(rng, options.min_bytes, options.max_bytes);
      seen_sizes.push_back(size);
    }
    const std::size_t id = next_id++;
    live.push_back({id, ts, size});
    seq.events.push_back({ts, EventKind::Alloc, id, size, lifecycle::LifecycleClass::Other});
  }
  std::stable_sort(seq.events.begin(), seq.events.end(), orch::event_order);
  seq.analysis_window = {0, ts + 1};
  return seq;
}

SimConfig random_config(std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  SimConfig cfg;
  if (std::uniform_int_distribution<int>(0, 2)(rng) == 0) {
    cfg.device_capacity_bytes = std::uniform_int_distribution<std::uint64_t>(64, 512)(rng) * kMiB;
  } else {
    cfg.device_capacity_bytes = 64 * kGiB;
  }
  return cfg;
}

OrchestratedSequence early_free_sequence(std::span<const std::uint64_t> sizes) {
  OrchestratedSequence seq;
  std::int64_t ts = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    seq.events.push_back({ts++, EventKind::Alloc, i, sizes[i], lifecycle::LifecycleClass::Other});
    seq.events.push_back({ts++, EventKind::Free, i, sizes[i], lifecycle::LifecycleClass::Other});
  }
  seq.analysis_window = {0, ts};
  return seq;
}

OrchestratedSequence late_free_sequence(std::span<const std::uint64_t> sizes) {
  OrchestratedSequence seq;
  std::int64_t ts = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    seq.events.push_back({ts++, EventKind::Alloc, i, sizes[i], lifecycle::LifecycleClass::Other});
  }
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    seq.events.push_back({ts++, EventKind::Free, i, sizes[i], lifecycle::LifecycleClass::Other});
  }
  seq.analysis_window = {0, ts};
  return seq;
}

}  // namespace peakmem::sim
