// Copyright 2026 The peakmem Authors
// SPDX-License-Identifier: Apache-2.0

#include "peakmem/annotations.hpp"

#include <algorithm>
#include <cctype>

#include "peakmem/error.hpp"

namespace peakmem::trace {

namespace {

bool contains_ci(std::string_view haystack, std::string_view needle) {
  auto it = std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end(),
                        [](char a, char b) {
                          return std::tolower(static_cast<unsigned char>(a)) ==
                                 std::tolower(static_cast<unsigned char>(b));
                        });
  return it != haystack.end();
}

bool by_start(const TimeWindow& a, const TimeWindow& b) {
  if (a.start_us != b.start_us) return a.start_us < b.start_us;
  return a.end_us < b.end_us;
}

}  // namespace

std::vector<TimeWindow> AnnotationIndex::in_iteration(const std::vector<MarkerWindow>& markers,
                                                      std::size_t iteration) const {
  std::vector<TimeWindow> out;
  for (const auto& m : markers) {
    if (m.iteration == iteration) out.push_back(m.window);
  }
  return out;
}

std::optional<std::size_t> AnnotationIndex::iteration_containing(std::int64_t t) const {
  auto it = std::upper_bound(iterations.begin(), iterations.end(), t,
                             [](std::int64_t v, const TimeWindow& w) { return v < w.start_us; });
  if (it == iterations.begin()) return std::nullopt;
  --it;
  // Touching iterations share an endpoint; the later one owns it.
  if (!it->contains(t)) return std::nullopt;
  return static_cast<std::size_t>(std::distance(iterations.begin(), it));
}

AnnotationIndex index_annotations(std::span<const TraceEvent> events, const FieldMapping& mapping,
                                  std::size_t min_iterations) {
  AnnotationIndex index;
  std::vector<TimeWindow> zero_grad, dataloader, optimizer_step;

  for (std::size_t i = 0; i < events.size(); ++i) {
    const TraceEvent& ev = events[i];
    if (ev.category != Category::UserAnnotation) continue;
    const TimeWindow w{ev.start_us, ev.end_us(), i};
    if (ev.name.starts_with(mapping.label_iteration_prefix)) {
      index.iterations.push_back(w);
    } else if (contains_ci(ev.name, mapping.label_zero_grad)) {
      zero_grad.push_back(w);
    } else if (contains_ci(ev.name, mapping.label_optimizer_step)) {
      optimizer_step.push_back(w);
    } else if (contains_ci(ev.name, mapping.label_dataloader)) {
      dataloader.push_back(w);
    }
  }

  std::sort(index.iterations.begin(), index.iterations.end(), by_start);
  for (std::size_t k = 1; k < index.iterations.size(); ++k) {
    const auto& prev = index.iterations[k - 1];
    const auto& cur = index.iterations[k];
    if (cur.start_us < prev.end_us) {
      throw Error(Stage::Ingest, ErrorKind::StructuralTrace,
                  "iteration windows overlap: [" + std::to_string(prev.start_us) + "," +
                      std::to_string(prev.end_us) + "] and [" + std::to_string(cur.start_us) +
                      "," + std::to_string(cur.end_us) + "]");
    }
  }
  if (index.iterations.size() < min_iterations) {
    throw Error(Stage::Ingest, ErrorKind::InsufficientIterations,
                "found " + std::to_string(index.iterations.size()) +
                    " iteration marker(s) with prefix '" + mapping.label_iteration_prefix +
                    "', need at least " + std::to_string(min_iterations));
  }

  auto link = [&](std::vector<TimeWindow>& windows, std::vector<MarkerWindow>& out) {
    std::sort(windows.begin(), windows.end(), by_start);
    out.reserve(windows.size());
    for (const auto& w : windows) {
      MarkerWindow m{w, std::nullopt};
      for (std::size_t k = 0; k < index.iterations.size(); ++k) {
        if (index.iterations[k].contains(w)) {
          m.iteration = k;
          break;
        }
      }
      out.push_back(m);
    }
  };
  link(zero_grad, index.zero_grad);
  link(dataloader, index.dataloader);
  link(optimizer_step, index.optimizer_step);
  return index;
}

}  // namespace peakmem::trace
