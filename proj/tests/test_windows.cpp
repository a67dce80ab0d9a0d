// Copyright 2026 The peakmem Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "peakmem/annotations.hpp"
#include "peakmem/error.hpp"
#include "peakmem/window_forest.hpp"
#include "trace_builder.hpp"

namespace peakmem::trace {
namespace {

using testing::TraceBuilder;

std::size_t node_named(const WindowForest& f, const std::vector<TraceEvent>& ev, const std::string& name) {
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (ev[f.node(i).event_index].name == name) return i;
  }
  ADD_FAILURE() << "no node " << name;
  return 0;
}

TEST(BuildWindows, ContainmentDefinesParents) {
  const auto ev = TraceBuilder().op("A", 0, 100).op("B", 10, 30).op("C", 50, 40).events();
  const auto f = build_windows(ev);
  ASSERT_EQ(f.size(), 3u);
  const auto a = node_named(f, ev, "A"), b = node_named(f, ev, "B"), c = node_named(f, ev, "C");
  EXPECT_FALSE(f.node(a).parent);
  EXPECT_EQ(f.node(b).parent, a);
  EXPECT_EQ(f.node(c).parent, a);
  EXPECT_EQ(f.node(a).children, (std::vector<std::size_t>{b, c}));
}

TEST(BuildWindows, PartialOverlapIsStructuralError) {
  const auto ev = TraceBuilder().op("A", 0, 50).op("B", 40, 20).events();
  try {
    build_windows(ev);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::StructuralTrace);
    EXPECT_NE(std::string(e.what()).find("A"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("B"), std::string::npos);
  }
}

TEST(BuildWindows, SingleWindow) {
  const auto ev = TraceBuilder().op("A", 5, 5).events();
  const auto f = build_windows(ev);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_FALSE(f.node(0).parent);
  EXPECT_TRUE(f.node(0).children.empty());
  ASSERT_EQ(f.threads().size(), 1u);
  EXPECT_EQ(f.threads()[0].roots.size(), 1u);
}

TEST(BuildWindows, ThreadsAreIndependentAndTouchingWindowsAreSiblings) {
  const auto ev = TraceBuilder()
                      .op("A", 0, 50, 1)
                      .op("B", 40, 20, 2)  // overlaps A, but on another thread
                      .op("C", 50, 10, 1)  // touches A's end
                      .events();
  const auto f = build_windows(ev);
  EXPECT_EQ(f.threads().size(), 2u);
  EXPECT_FALSE(f.node(node_named(f, ev, "C")).parent);
}

TEST(BuildWindows, IdenticalSpansNestInFileOrder) {
  const auto ev = TraceBuilder().component("outer", 0, 10).op("inner", 0, 10).events();
  const auto f = build_windows(ev);
  EXPECT_EQ(f.node(node_named(f, ev, "inner")).parent, node_named(f, ev, "outer"));
}

TEST(BuildWindows, InnermostContaining) {
  const auto ev = TraceBuilder().component("m", 0, 100).op("A", 10, 50).op("B", 20, 10).events();
  const auto f = build_windows(ev);
  EXPECT_EQ(f.innermost_containing(1, 25), node_named(f, ev, "B"));
  EXPECT_EQ(f.innermost_containing(1, 45), node_named(f, ev, "A"));
  EXPECT_EQ(f.innermost_containing(1, 90), node_named(f, ev, "m"));
  EXPECT_FALSE(f.innermost_containing(1, 101));
  EXPECT_FALSE(f.innermost_containing(7, 25));
  EXPECT_EQ(f.nearest_ancestor(node_named(f, ev, "B"), Category::PythonFunction), node_named(f, ev, "m"));
}

TEST(BuildWindows, ParentsContainChildren) {
  TraceBuilder tb;
  for (int i = 0; i < 20; ++i) {
    tb.component("c" + std::to_string(i), i * 100, 90);
    for (int j = 0; j < 4; ++j) tb.op("o", i * 100 + j * 20 + 1, 15).op("k", i * 100 + j * 20 + 2, 5);
  }
  const auto ev = tb.events();
  const auto f = build_windows(ev);
  for (const auto& n : f.nodes()) {
    if (!n.parent) continue;
    const auto& p = f.node(*n.parent);
    EXPECT_LE(p.start_us, n.start_us);
    EXPECT_LE(n.end_us, p.end_us);
    EXPECT_EQ(n.depth, p.depth + 1);
  }
}

TEST(Annotations, IterationWindows) {
  const auto ev = TraceBuilder()
                      .annotation("ProfilerStep#0", 0, 100)
                      .annotation("ProfilerStep#1", 100, 100)
                      .annotation("ProfilerStep#2", 200, 100)
                      .events();
  const auto idx = index_annotations(ev, {});
  ASSERT_EQ(idx.iterations.size(), 3u);
  EXPECT_EQ(idx.iterations[1].start_us, 100);
  EXPECT_EQ(idx.iterations[1].end_us, 200);
  EXPECT_FALSE(idx.has_zero_grad());
  EXPECT_EQ(idx.iteration_containing(100), 1u);
  EXPECT_EQ(idx.iteration_containing(99), 0u);
  EXPECT_FALSE(idx.iteration_containing(301));
}

TEST(Annotations, SingleIterationIsInsufficient) {
  const auto ev = TraceBuilder().annotation("ProfilerStep#0", 0, 100).events();
  try {
    index_annotations(ev, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientIterations);
    EXPECT_EQ(e.stage(), Stage::Ingest);
  }
}

TEST(Annotations, MarkersLinkToTheirIteration) {
  const auto ev = TraceBuilder()
                      .annotation("ProfilerStep#0", 0, 100)
                      .annotation("ProfilerStep#1", 100, 100)
                      .annotation("Optimizer.zero_grad#SGD.zero_grad", 150, 5)
                      .annotation("enumerate(DataLoader)#_SingleProcessDataLoaderIter.__next__", 105, 10)
                      .annotation("Optimizer.step#SGD.step", 190, 5)
                      .annotation("Optimizer.zero_grad#SGD.zero_grad", 300, 5)
                      .events();
  const auto idx = index_annotations(ev, {});
  ASSERT_EQ(idx.zero_grad.size(), 2u);
  EXPECT_EQ(idx.zero_grad[0].iteration, 1u);
  EXPECT_FALSE(idx.zero_grad[1].iteration);
  ASSERT_EQ(idx.dataloader.size(), 1u);
  EXPECT_EQ(idx.dataloader[0].iteration, 1u);
  ASSERT_EQ(idx.optimizer_step.size(), 1u);
  EXPECT_EQ(idx.in_iteration(idx.zero_grad, 1).size(), 1u);
}

TEST(Annotations, OverlappingIterationsAreRejected) {
  const auto ev =
      TraceBuilder().annotation("ProfilerStep#0", 0, 100).annotation("ProfilerStep#1", 50, 100).events();
  EXPECT_THROW(index_annotations(ev, {}), Error);
}

}  // namespace
}  // namespace peakmem::trace
