// Copyright 2026 The peakmem Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "peakmem/error.hpp"
#include "peakmem/lifecycle.hpp"
#include "peakmem/window_forest.hpp"
#include "trace_builder.hpp"

namespace peakmem::lifecycle {
namespace {

using testing::TraceBuilder;
using trace::Category;
using trace::TraceEvent;

MemoryBlock block(std::int64_t alloc, std::optional<std::int64_t> dealloc, std::int64_t tid = 1) {
  MemoryBlock b;
  b.size_bytes = 64;
  b.alloc_us = alloc;
  b.dealloc_us = dealloc;
  b.thread_id = tid;
  return b;
}

TEST(Reconstruct, PairsAllocAndFree) {
  const auto ev = TraceBuilder().mem(1, 0xA, 1024).mem(5, 0xA, -1024).events();
  const auto r = reconstruct_blocks(ev);
  ASSERT_EQ(r.blocks.size(), 1u);
  EXPECT_EQ(r.blocks[0].size_bytes, 1024u);
  EXPECT_EQ(r.blocks[0].alloc_us, 1);
  EXPECT_EQ(r.blocks[0].dealloc_us, 5);
  EXPECT_EQ(r.tallies, ReconstructTallies{});
}

TEST(Reconstruct, AddressReuseOpensFreshBlock) {
  const auto ev = TraceBuilder().mem(1, 0xA, 1024).mem(5, 0xA, -1024).mem(7, 0xA, 2048).events();
  const auto r = reconstruct_blocks(ev);
  ASSERT_EQ(r.blocks.size(), 2u);
  EXPECT_FALSE(r.blocks[0].persistent());
  EXPECT_TRUE(r.blocks[1].persistent());
  EXPECT_EQ(r.blocks[1].size_bytes, 2048u);
  EXPECT_EQ(r.blocks[1].block_id, 1u);
}

TEST(Reconstruct, OrphanFreeIsTallied) {
  const auto ev = TraceBuilder().mem(3, 0xB, -512).events();
  const auto r = reconstruct_blocks(ev);
  EXPECT_TRUE(r.blocks.empty());
  EXPECT_EQ(r.tallies.orphan_frees, 1u);
}

TEST(Reconstruct, LifoWithSizeMatch) {
  const auto ev =
      TraceBuilder().mem(1, 0xA, 100).mem(2, 0xA, 200).mem(3, 0xA, -100).mem(4, 0xA, -200).events();
  const auto r = reconstruct_blocks(ev);
  ASSERT_EQ(r.blocks.size(), 2u);
  EXPECT_EQ(r.blocks[0].dealloc_us, 3);
  EXPECT_EQ(r.blocks[1].dealloc_us, 4);
  EXPECT_EQ(r.tallies.size_mismatches, 0u);
}

TEST(Reconstruct, SizeMismatchClosesMostRecent) {
  const auto ev = TraceBuilder().mem(1, 0xA, 100).mem(2, 0xA, 200).mem(3, 0xA, -300).events();
  const auto r = reconstruct_blocks(ev);
  EXPECT_EQ(r.tallies.size_mismatches, 1u);
  EXPECT_EQ(r.blocks[1].dealloc_us, 3);
  EXPECT_EQ(r.blocks[1].size_bytes, 200u);
  EXPECT_TRUE(r.blocks[0].persistent());
}

TEST(Reconstruct, ZeroLifetimeIsStretchedAndTallied) {
  const auto ev = TraceBuilder().mem(4, 0xA, 100).mem(4, 0xA, -100).events();
  const auto r = reconstruct_blocks(ev);
  ASSERT_EQ(r.blocks.size(), 1u);
  EXPECT_EQ(r.blocks[0].dealloc_us, 5);
  EXPECT_EQ(r.tallies.zero_lifetime, 1u);
}

// Open-block bytes equal the folded signed instant stream after every event.
TEST(Reconstruct, ConservationOnRandomStreams) {
  std::mt19937_64 rng(11);
  for (int round = 0; round < 50; ++round) {
    TraceBuilder tb;
    std::vector<std::pair<std::uint64_t, std::int64_t>> live;  // address, size
    std::uint64_t fresh = 0x100000;
    for (std::int64_t t = 0; t < 300; ++t) {
      if (!live.empty() && rng() % 2) {
        const std::size_t k = rng() % live.size();
        tb.mem(t, live[k].first, -live[k].second);
        live.erase(live.begin() + static_cast<std::ptrdiff_t>(k));
      } else {
        // Small shared address pool so that reuse is frequent.
        std::uint64_t use = 0x1000 + (rng() % 8) * 0x100;
        for (const auto& l : live) {
          if (l.first == use) use = fresh++;
        }
        const std::int64_t size = 1 + static_cast<std::int64_t>(rng() % 5000);
        tb.mem(t, use, size);
        live.push_back({use, size});
      }
    }
    const auto ev = tb.events();
    const auto r = reconstruct_blocks(ev);
    ASSERT_EQ(r.tallies.orphan_frees + r.tallies.size_mismatches, 0u);
    std::int64_t folded = 0;
    for (std::size_t i = 0; i < ev.size(); ++i) {
      folded += ev[i].mem->bytes;
      std::int64_t open = 0;
      for (const auto& b : r.blocks) {
        if (b.alloc_event <= i && (!b.dealloc_event || *b.dealloc_event > i)) {
          open += static_cast<std::int64_t>(b.size_bytes);
        }
      }
      ASSERT_EQ(open, folded) << "round " << round << " event " << i;
    }
  }
}

class Attribution : public ::testing::Test {
 protected:
  void build(TraceBuilder tb) {
    events_ = tb.events();
    forest_ = trace::build_windows(events_);
  }
  std::optional<lifecycle::Attribution> attribute(MemoryBlock b) {
    return attribute_blocks({b}, forest_).front().attribution;
  }
  std::string name(std::size_t node) const { return events_[forest_.node(node).event_index].name; }

  std::vector<TraceEvent> events_;
  trace::WindowForest forest_;
};

TEST_F(Attribution, ContainedInOp) {
  build(TraceBuilder().component("m", 0, 100).op("op", 10, 10));
  const auto a = attribute(block(12, 18));
  ASSERT_TRUE(a);
  EXPECT_EQ(name(a->op_node), "op");
  EXPECT_EQ(name(*a->component_node), "m");
  EXPECT_EQ(a->rule, AttributionRule::ContainedInOp);
}

TEST_F(Attribution, OutlivesComponent) {
  build(TraceBuilder().component("m", 5, 55).op("op", 10, 10));
  const auto a = attribute(block(15, std::nullopt));
  ASSERT_TRUE(a);
  EXPECT_EQ(name(a->op_node), "op");
  EXPECT_EQ(a->rule, AttributionRule::OutlivesComponent);
}

TEST_F(Attribution, DiesBeforeComponentEndsIsUnattributed) {
  build(TraceBuilder().component("m", 5, 35).op("op", 10, 10));
  EXPECT_FALSE(attribute(block(12, 30)));
}

TEST_F(Attribution, OutlivingComponentByDeathTime) {
  build(TraceBuilder().component("m", 5, 20).op("op", 10, 10));
  const auto a = attribute(block(12, 30));
  ASSERT_TRUE(a);
  EXPECT_EQ(a->rule, AttributionRule::OutlivesComponent);
}

TEST_F(Attribution, InnermostOpWinsAndConditionOneFirst) {
  build(TraceBuilder().component("m", 0, 100).op("outer", 10, 50).op("inner", 20, 10));
  auto a = attribute(block(22, 28));
  ASSERT_TRUE(a);
  EXPECT_EQ(name(a->op_node), "inner");
  a = attribute(block(22, 40));  // outlives inner, contained in outer
  ASSERT_TRUE(a);
  EXPECT_EQ(name(a->op_node), "outer");
  EXPECT_EQ(a->rule, AttributionRule::ContainedInOp);
}

TEST_F(Attribution, OtherThreadsAndScriptLevelAreIgnored) {
  build(TraceBuilder().component("m", 0, 100).op("op", 10, 10, 2));
  EXPECT_FALSE(attribute(block(12, 15)));
  const auto a = attribute(block(12, 15, 2));
  ASSERT_TRUE(a);
  EXPECT_EQ(a->rule, AttributionRule::ContainedInOp);
  EXPECT_FALSE(a->component_node);
  EXPECT_FALSE(attribute(block(12, 30, 2)));  // no component on thread 2
  EXPECT_FALSE(attribute(block(50, std::nullopt)));
}

TEST(Filter, KeepsAttributedInOrderAndIsIdempotent) {
  std::vector<MemoryBlock> blocks{block(1, 2), block(3, 4), block(5, 6)};
  blocks[0].attribution = lifecycle::Attribution{};
  blocks[2].attribution = lifecycle::Attribution{};
  blocks[2].block_id = 2;
  const auto once = filter_relevant(blocks);
  ASSERT_EQ(once.size(), 2u);
  EXPECT_EQ(once[1].block_id, 2u);
  EXPECT_EQ(filter_relevant(once), once);
  try {
    filter_relevant({block(1, 2)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyAnalysis);
  }
}

// Recursively fills [s, e] with properly nested windows of random category.
void nested_windows(std::mt19937_64& rng, TraceBuilder& tb, std::int64_t s, std::int64_t e, int depth,
                    int& counter) {
  if (depth > 4 || e - s < 4) return;
  std::int64_t cursor = s + 1;
  while (cursor + 3 < e) {
    const std::int64_t len = 2 + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(e - cursor - 1));
    const std::int64_t end = std::min(e - 1, cursor + len);
    if (end - cursor < 2) break;
    const std::string name = "w" + std::to_string(counter++);
    if (rng() % 2) tb.op(name, cursor, end - cursor);
    else tb.component(name, cursor, end - cursor);
    nested_windows(rng, tb, cursor, end, depth + 1, counter);
    cursor = end + 1 + static_cast<std::int64_t>(rng() % 3);
  }
}

TEST(AttributionOracle, MatchesBruteForceEnumeration) {
  std::mt19937_64 rng(2024);
  for (int round = 0; round < 200; ++round) {
    TraceBuilder tb;
    int counter = 0;
    tb.component("root", 0, 400);
    nested_windows(rng, tb, 0, 400, 0, counter);
    const auto ev = tb.events();
    const auto forest = trace::build_windows(ev);

    std::vector<MemoryBlock> blocks;
    for (int i = 0; i < 40; ++i) {
      const std::int64_t alloc = static_cast<std::int64_t>(rng() % 400);
      std::optional<std::int64_t> dealloc;
      if (rng() % 4) dealloc = alloc + 1 + static_cast<std::int64_t>(rng() % 150);
      blocks.push_back(block(alloc, dealloc));
    }
    const auto got = attribute_blocks(blocks, forest);

    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
      const auto& b = blocks[bi];
      // Brute force over raw events: tightest enclosing windows by span.
      auto tightest_pf = [&](std::int64_t s, std::int64_t e) -> std::optional<std::size_t> {
        std::optional<std::size_t> best;
        for (std::size_t i = 0; i < ev.size(); ++i) {
          if (ev[i].category != Category::PythonFunction) continue;
          if (ev[i].start_us <= s && e <= ev[i].end_us() &&
              (!best || ev[i].duration_us < ev[*best].duration_us)) {
            best = i;
          }
        }
        return best;
      };
      std::optional<std::size_t> cond_i, cond_ii;
      for (std::size_t i = 0; i < ev.size(); ++i) {
        if (ev[i].category != Category::CpuOp) continue;
        if (!(ev[i].start_us <= b.alloc_us && b.alloc_us <= ev[i].end_us())) continue;
        if (b.dealloc_us && *b.dealloc_us <= ev[i].end_us()) {
          if (!cond_i || ev[i].duration_us < ev[*cond_i].duration_us) cond_i = i;
        }
        const auto comp = tightest_pf(ev[i].start_us, ev[i].end_us());
        if (comp && (!b.dealloc_us || *b.dealloc_us > ev[*comp].end_us())) {
          if (!cond_ii || ev[i].duration_us < ev[*cond_ii].duration_us) cond_ii = i;
        }
      }
      const auto expected = cond_i ? cond_i : cond_ii;
      const auto& a = got[bi].attribution;
      ASSERT_EQ(a.has_value(), expected.has_value()) << "round " << round << " block " << bi;
      if (!a) continue;
      EXPECT_EQ(forest.node(a->op_node).event_index, *expected);
      EXPECT_EQ(a->rule, cond_i ? AttributionRule::ContainedInOp : AttributionRule::OutlivesComponent);
      if (a->rule == AttributionRule::ContainedInOp) {
        EXPECT_LE(b.alloc_us, forest.node(a->op_node).end_us);
        EXPECT_LE(*b.dealloc_us, forest.node(a->op_node).end_us);
      }
    }
  }
}

}  // namespace
}  // namespace peakmem::lifecycle
