// Copyright 2026 The peakmem Authors
// SPDX-License-Identifier: Apache-2.0

#include "peakmem/reference_allocator.hpp"

#include <limits>
#include <sstream>

namespace peakmem::sim::reference {

namespace {

struct Chunk {
  std::uint64_t offset;
  std::uint64_t size;
  bool used;
  std::uint64_t charged;
  std::size_t owner;
};

struct Seg {
  std::size_t id;
  std::uint64_t total;
  bool small;
  std::vector<Chunk> chunks;
};

class NaiveAllocator {
 public:
  explicit NaiveAllocator(const SimConfig& cfg) : cfg_(cfg) {}

  bool alloc(std::size_t owner, std::uint64_t request) {
    const std::uint64_t m = cfg_.min_block_bytes;
    const std::uint64_t rounded = ((request + m - 1) / m) * m;
    const bool small = rounded <= cfg_.small_alloc_threshold_bytes;

    if (!find_best(small, rounded)) {
      std::uint64_t seg_size = 0;
      if (small) {
        seg_size = cfg_.small_segment_bytes;
      } else if (rounded < cfg_.min_large_alloc_bytes) {
        seg_size = cfg_.large_segment_bytes;
      } else {
        const std::uint64_t r = cfg_.large_round_bytes;
        seg_size = ((rounded + r - 1) / r) * r;
      }
      if (reserved_ + seg_size > cfg_.device_capacity_bytes) {
        // Release empty segments, biggest first, until the request fits.
        while (reserved_ + seg_size > cfg_.device_capacity_bytes) {
          std::size_t victim = segs_.size();
          for (std::size_t i = 0; i < segs_.size(); ++i) {
            const Seg& s = segs_[i];
            if (s.chunks.size() != 1 || s.chunks[0].used) continue;
            if (victim == segs_.size() || s.total > segs_[victim].total ||
                (s.total == segs_[victim].total && s.id < segs_[victim].id)) {
              victim = i;
            }
          }
          if (victim == segs_.size()) break;
          reserved_ -= segs_[victim].total;
          segs_.erase(segs_.begin() + static_cast<std::ptrdiff_t>(victim));
        }
        if (reserved_ + seg_size > cfg_.device_capacity_bytes) return false;
      }
      reserved_ += seg_size;
      segs_.push_back(Seg{next_id_++, seg_size, small, {Chunk{0, seg_size, false, 0, 0}}});
      best_seg_ = segs_.size() - 1;
      best_chunk_ = 0;
    }

    Seg& s = segs_[best_seg_];
    Chunk& c = s.chunks[best_chunk_];
    const std::uint64_t leftover = c.size - rounded;
    const std::uint64_t min_split = small ? cfg_.split_remainder_small_min
                                          : cfg_.split_remainder_large_min;
    c.used = true;
    c.charged = rounded;
    c.owner = owner;
    if (leftover >= min_split) {
      c.size = rounded;
      const Chunk rest{c.offset + rounded, leftover, false, 0, 0};
      s.chunks.insert(s.chunks.begin() + static_cast<std::ptrdiff_t>(best_chunk_) + 1, rest);
    }
    allocated_ += rounded;
    return true;
  }

  void free(std::size_t owner) {
    for (Seg& s : segs_) {
      for (std::size_t i = 0; i < s.chunks.size(); ++i) {
        if (!s.chunks[i].used || s.chunks[i].owner != owner) continue;
        allocated_ -= s.chunks[i].charged;
        s.chunks[i].used = false;
        s.chunks[i].charged = 0;
        // Merge right, then left.
        if (i + 1 < s.chunks.size() && !s.chunks[i + 1].used) {
          s.chunks[i].size += s.chunks[i + 1].size;
          s.chunks.erase(s.chunks.begin() + static_cast<std::ptrdiff_t>(i) + 1);
        }
        if (i > 0 && !s.chunks[i - 1].used) {
          s.chunks[i - 1].size += s.chunks[i].size;
          s.chunks.erase(s.chunks.begin() + static_cast<std::ptrdiff_t>(i));
        }
        return;
      }
    }
  }

  std::uint64_t allocated() const { return allocated_; }
  std::uint64_t reserved() const { return reserved_; }

 private:
  bool find_best(bool small, std::uint64_t rounded) {
    bool found = false;
    std::uint64_t best_size = 0;
    std::size_t best_id = 0;
    std::uint64_t best_offset = 0;
    for (std::size_t si = 0; si < segs_.size(); ++si) {
      const Seg& s = segs_[si];
      if (s.small != small) continue;
      for (std::size_t ci = 0; ci < s.chunks.size(); ++ci) {
        const Chunk& c = s.chunks[ci];
        if (c.used || c.size < rounded) continue;
        const bool better = !found || c.size < best_size ||
                            (c.size == best_size && s.id < best_id) ||
                            (c.size == best_size && s.id == best_id && c.offset < best_offset);
        if (better) {
          found = true;
          best_size = c.size;
          best_id = s.id;
          best_offset = c.offset;
          best_seg_ = si;
          best_chunk_ = ci;
        }
      }
    }
    return found;
  }

  SimConfig cfg_;
  std::vector<Seg> segs_;
  std::size_t next_id_ = 0;
  std::uint64_t reserved_ = 0;
  std::uint64_t allocated_ = 0;
  std::size_t best_seg_ = 0;
  std::size_t best_chunk_ = 0;
};

}  // namespace

ReferenceOutcome simulate_naive(const orch::OrchestratedSequence& seq, const SimConfig& cfg) {
  NaiveAllocator allocator(cfg);
  ReferenceOutcome out;
  for (std::size_t i = 0; i < seq.events.size(); ++i) {
    const auto& e = seq.events[i];
    if (e.kind == orch::EventKind::Alloc) {
      if (!allocator.alloc(e.block_id, e.size_bytes)) {
        out.oom_event = i;
        break;
      }
    } else {
      allocator.free(e.block_id);
    }
    out.timeline.push_back({e.ts_us, allocator.allocated(), allocator.reserved()});
  }
  return out;
}

std::optional<Divergence> cross_check(const orch::OrchestratedSequence& seq, const SimConfig& cfg) {
  const SimOutcome fast = simulate(seq, cfg);
  const ReferenceOutcome naive = simulate_naive(seq, cfg);
  const std::size_t n = std::min(fast.curve.size(), naive.timeline.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = fast.curve[i];
    const auto& b = naive.timeline[i];
    if (a == b) continue;
    std::ostringstream msg;
    msg << "simulator (allocated=" << a.allocated_bytes << ", reserved=" << a.reserved_bytes
        << ") vs reference (allocated=" << b.allocated_bytes << ", reserved=" << b.reserved_bytes
        << ")";
    return Divergence{i, msg.str()};
  }
  const std::optional<std::size_t> fast_oom =
      fast.oom ? std::optional<std::size_t>(fast.oom->event_index) : std::nullopt;
  if (fast.curve.size() != naive.timeline.size() || fast_oom != naive.oom_event) {
    std::ostringstream msg;
    msg << "out-of-memory disagreement: simulator "
        << (fast_oom ? "failed at event " + std::to_string(*fast_oom) : std::string("completed"))
        << ", reference "
        << (naive.oom_event ? "failed at event " + std::to_string(*naive.oom_event)
                            : std::string("completed"));
    return Divergence{n, msg.str()};
  }
  return std::nullopt;
}

}  // namespace peakmem::sim::reference
