// Copyright 2026 The peakmem Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>

#include "peakmem/error.hpp"
#include "peakmem/orchestrator.hpp"
#include "trace_builder.hpp"

namespace peakmem::orch {
namespace {

using testing::TraceBuilder;

struct Pipeline {
  std::vector<trace::TraceEvent> events;
  trace::WindowForest forest;
  trace::AnnotationIndex annotations;
  std::vector<MemoryBlock> blocks;

  explicit Pipeline(const TraceBuilder& tb, ClassifyOptions opts = {}) {
    events = tb.events();
    forest = trace::build_windows(events);
    annotations = trace::index_annotations(events, {});
    auto recon = lifecycle::reconstruct_blocks(events);
    auto attributed = lifecycle::filter_relevant(lifecycle::attribute_blocks(recon.blocks, forest));
    blocks = classify_blocks(attributed, events, forest, annotations, opts);
  }
  const MemoryBlock& by_size(std::uint64_t size) const {
    auto it = std::find_if(blocks.begin(), blocks.end(), [&](const MemoryBlock& b) { return b.size_bytes == size; });
    EXPECT_NE(it, blocks.end()) << "no block of size " << size;
    return *it;
  }
};

constexpr std::uint64_t kParam = 4096000;
constexpr std::uint64_t kBatch = 7000;
constexpr std::uint64_t kAct = 9000;
constexpr std::uint64_t kGrad = 11000;

// Iteration 1 spans [100, 200]; every rule has one representative block.
TraceBuilder training_trace(bool with_zero_grad) {
  TraceBuilder tb;
  tb.component("nn.Module: Model.to", 5, 15).op("aten::empty", 10, 5).mem(12, 0x10, kParam);
  tb.annotation("ProfilerStep#0", 30, 69);
  tb.annotation("ProfilerStep#1", 100, 100);
  tb.annotation("ProfilerStep#2", 201, 99);
  tb.annotation("enumerate(DataLoader)#_SingleProcessDataLoaderIter.__next__", 101, 3)
      .component("dataloader.py: __next__", 101, 3)
      .op("aten::empty", 102, 1)
      .mem(102, 0x20, kBatch)
      .mem(250, 0x20, -static_cast<std::int64_t>(kBatch));
  tb.component("nn.Module: Linear", 105, 20).op("aten::mm", 110, 10, 1, 5).mem(112, 0x30, kAct);
  tb.component("backward", 128, 17)
      .op("MmBackward0", 130, 10, 1, 5)
      .mem(135, 0x40, kGrad)
      .mem(138, 0x30, -static_cast<std::int64_t>(kAct))
      .mem(150, 0x40, -static_cast<std::int64_t>(kGrad));
  if (with_zero_grad) tb.annotation("Optimizer.zero_grad#Adam.zero_grad", 180, 5);
  tb.annotation("Optimizer.step#Adam.step", 186, 9)
      .component("adam.py: step", 187, 7)
      .op("aten::zeros_like", 188, 2)
      .mem(189, 0x50, kParam);
  return tb;
}

TEST(Classify, EveryRuleHasItsRepresentative) {
  Pipeline p(training_trace(true));
  EXPECT_EQ(p.blocks.size(), 5u);
  EXPECT_EQ(p.by_size(kBatch).lifecycle, LifecycleClass::BatchData);
  EXPECT_EQ(p.by_size(kAct).lifecycle, LifecycleClass::Activation);
  EXPECT_EQ(p.by_size(kGrad).lifecycle, LifecycleClass::Gradient);
  std::map<LifecycleClass, int> counts;
  for (const auto& b : p.blocks) ++counts[b.lifecycle];
  EXPECT_EQ(counts[LifecycleClass::Parameter], 1);
  EXPECT_EQ(counts[LifecycleClass::OptimizerState], 1);
}

TEST(Classify, OptimizerStateBudgetIsBounded) {
  TraceBuilder tb;
  tb.component("to", 5, 15).op("aten::empty", 10, 5).mem(12, 0x10, 4096);
  tb.annotation("ProfilerStep#0", 30, 69).annotation("ProfilerStep#1", 100, 100);
  tb.annotation("Optimizer.step#Adam.step", 40, 20).component("step", 41, 18);
  for (int i = 0; i < 3; ++i) tb.op("aten::zeros_like", 42 + 5 * i, 2).mem(43 + 5 * i, 0x100 + i, 4096);
  Pipeline p(tb);
  std::map<LifecycleClass, int> counts;
  for (const auto& b : p.blocks) ++counts[b.lifecycle];
  EXPECT_EQ(counts[LifecycleClass::OptimizerState], 2);
  EXPECT_EQ(counts[LifecycleClass::Activation], 1);

  Pipeline one(tb, ClassifyOptions{1});
  counts.clear();
  for (const auto& b : one.blocks) ++counts[b.lifecycle];
  EXPECT_EQ(counts[LifecycleClass::OptimizerState], 1);
}

TEST(Classify, BackwardTemporaryIsActivation) {
  TraceBuilder tb;
  tb.annotation("ProfilerStep#0", 0, 99).annotation("ProfilerStep#1", 100, 100);
  tb.component("fwd", 10, 20).op("aten::mm", 12, 5, 1, 3);
  tb.component("bwd", 40, 20).op("MmBackward0", 42, 10, 1, 3).mem(43, 0x1, 100).mem(45, 0x1, -100);
  Pipeline p(tb);
  ASSERT_EQ(p.blocks.size(), 1u);
  EXPECT_EQ(p.blocks[0].lifecycle, LifecycleClass::Activation);
}

// Forward ops repeat the current sequence number until a new autograd node
// is recorded; nested and sibling forward ops sharing it stay forward.
TEST(Classify, SharedForwardSequenceNumberIsNotBackward) {
  TraceBuilder tb;
  tb.annotation("ProfilerStep#0", 0, 99).annotation("ProfilerStep#1", 100, 100);
  tb.component("fwd", 10, 40).op("aten::select", 11, 2, 1, 7).op("aten::linear", 14, 20, 1, 7);
  tb.op("aten::addmm", 15, 10, 1, 7).mem(16, 0x1, 4096);
  tb.component("bwd", 60, 30).op("autograd::engine::evaluate_function: AddmmBackward0", 61, 20, 1, 7);
  tb.op("aten::mm", 62, 5).mem(63, 0x2, 8192);
  Pipeline p(tb);
  EXPECT_EQ(p.by_size(4096).lifecycle, LifecycleClass::Activation);
  EXPECT_EQ(p.by_size(8192).lifecycle, LifecycleClass::Gradient);

  ClassifyOptions any_name;
  any_name.backward_marker.clear();
  Pipeline loose(tb, any_name);
  EXPECT_EQ(loose.by_size(4096).lifecycle, LifecycleClass::Gradient);
}

TEST(Orchestrate, RetimesAnalysisIteration) {
  Pipeline p(training_trace(true));
  const auto seq = orchestrate(p.blocks, p.annotations);
  EXPECT_EQ(seq.analysis_window, (AnalysisWindow{100, 200}));
  EXPECT_FALSE(check_sequence(seq));

  auto find = [&](std::uint64_t size, EventKind kind, LifecycleClass cls) -> std::optional<std::int64_t> {
    for (const auto& e : seq.events) {
      if (e.size_bytes == size && e.kind == kind && e.lifecycle == cls) return e.ts_us;
    }
    return std::nullopt;
  };
  EXPECT_EQ(find(kGrad, EventKind::Free, LifecycleClass::Gradient), 185);
  EXPECT_EQ(find(kBatch, EventKind::Free, LifecycleClass::BatchData), 200);
  EXPECT_EQ(find(kAct, EventKind::Alloc, LifecycleClass::Activation), 112);
  EXPECT_EQ(find(kAct, EventKind::Free, LifecycleClass::Activation), 138);
  EXPECT_EQ(find(kParam, EventKind::Alloc, LifecycleClass::Parameter), 100);
  EXPECT_FALSE(find(kParam, EventKind::Free, LifecycleClass::Parameter));
  EXPECT_EQ(find(kParam, EventKind::Alloc, LifecycleClass::OptimizerState), 189);
  EXPECT_FALSE(find(kParam, EventKind::Free, LifecycleClass::OptimizerState));
  ASSERT_EQ(seq.carryover_ids.size(), 1u);
  EXPECT_EQ(seq.events.size(), 8u);
}

TEST(Orchestrate, MissingZeroGradFreesGradientsAtWindowEnd) {
  Pipeline p(training_trace(false));
  const auto seq = orchestrate(p.blocks, p.annotations);
  for (const auto& e : seq.events) {
    if (e.lifecycle == LifecycleClass::Gradient && e.kind == EventKind::Free) {
      EXPECT_EQ(e.ts_us, 200);
    }
  }
}

TEST(Orchestrate, AnalysisIterationMustExist) {
  Pipeline p(training_trace(true));
  try {
    orchestrate(p.blocks, p.annotations, {5});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientIterations);
    EXPECT_EQ(e.stage(), Stage::Orchestrate);
  }
}

TEST(Orchestrate, RandomClassifiedBlocksKeepInvariants) {
  std::mt19937_64 rng(99);
  trace::AnnotationIndex idx;
  idx.iterations = {{0, 99, 0}, {100, 199, 1}, {200, 299, 2}};
  idx.zero_grad = {{{20, 25, 3}, 0}, {{150, 160, 4}, 1}, {{210, 215, 5}, 2}};
  const LifecycleClass classes[] = {LifecycleClass::Parameter, LifecycleClass::BatchData,
                                    LifecycleClass::Activation, LifecycleClass::Gradient,
                                    LifecycleClass::OptimizerState, LifecycleClass::Other};
  for (int round = 0; round < 300; ++round) {
    std::vector<MemoryBlock> blocks;
    for (std::size_t i = 0; i < 60; ++i) {
      MemoryBlock b;
      b.block_id = i;
      b.size_bytes = 1 + rng() % 100000;
      b.alloc_us = static_cast<std::int64_t>(rng() % 320) - 10;
      if (rng() % 5) b.dealloc_us = b.alloc_us + 1 + static_cast<std::int64_t>(rng() % 200);
      b.lifecycle = classes[rng() % 6];
      blocks.push_back(b);
    }
    const auto seq = orchestrate(blocks, idx);
    ASSERT_FALSE(check_sequence(seq)) << *check_sequence(seq);

    std::multiset<std::uint64_t> in_sizes, out_sizes;
    for (const auto& e : seq.events) {
      ASSERT_GE(e.ts_us, 100);
      ASSERT_LE(e.ts_us, 199);
      if (e.kind == EventKind::Alloc) out_sizes.insert(e.size_bytes);
      const auto& b = blocks[e.block_id];
      EXPECT_EQ(e.size_bytes, b.size_bytes);
      if (b.lifecycle == LifecycleClass::Activation && e.kind == EventKind::Alloc && b.alloc_us >= 100) {
        EXPECT_EQ(e.ts_us, b.alloc_us);
      }
      if (b.lifecycle == LifecycleClass::Activation && e.kind == EventKind::Free && b.dealloc_us &&
          *b.dealloc_us <= 199) {
        EXPECT_EQ(e.ts_us, *b.dealloc_us);
      }
      if ((b.lifecycle == LifecycleClass::Parameter || b.lifecycle == LifecycleClass::OptimizerState)) {
        EXPECT_EQ(e.kind, EventKind::Alloc);
      }
    }
    for (const auto& b : blocks) {
      // Every block alive somewhere in the window appears exactly once.
      const bool persistent_class =
          b.lifecycle == LifecycleClass::Parameter || b.lifecycle == LifecycleClass::OptimizerState;
      if (persistent_class && b.alloc_us < 199) in_sizes.insert(b.size_bytes);
    }
    for (auto s : in_sizes) EXPECT_GE(out_sizes.count(s), in_sizes.count(s));
  }
}

TEST(SequenceText, DumpParseRoundTrip) {
  Pipeline p(training_trace(true));
  const auto seq = orchestrate(p.blocks, p.annotations);
  const auto text = dump_sequence(seq);
  EXPECT_EQ(parse_sequence(text), seq);
  EXPECT_THROW(parse_sequence("ts_us,kind,block_id,size_bytes,class\n1,alloc,0,banana,other\n"), Error);
}

TEST(SequenceCheck, DetectsViolations) {
  OrchestratedSequence seq;
  seq.events = {{5, EventKind::Alloc, 0, 64, LifecycleClass::Other},
                {5, EventKind::Free, 0, 64, LifecycleClass::Other}};
  EXPECT_TRUE(check_sequence(seq));  // out of order and free not after alloc
  seq.events = {{5, EventKind::Free, 0, 64, LifecycleClass::Other}};
  EXPECT_TRUE(check_sequence(seq));
  seq.events = {{5, EventKind::Alloc, 0, 64, LifecycleClass::Other},
                {6, EventKind::Alloc, 0, 64, LifecycleClass::Other}};
  EXPECT_TRUE(check_sequence(seq));
  seq.events = {{5, EventKind::Alloc, 0, 64, LifecycleClass::Other},
                {6, EventKind::Free, 0, 64, LifecycleClass::Other}};
  EXPECT_FALSE(check_sequence(seq));
}

}  // namespace
}  // namespace peakmem::orch
