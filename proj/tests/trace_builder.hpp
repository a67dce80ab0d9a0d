// Copyright 2026 The peakmem Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "peakmem/trace_ingest.hpp"

namespace peakmem::testing {

// Assembles small trace documents in the profiler's JSON layout.
class TraceBuilder {
 public:
  TraceBuilder& window(const std::string& category, const std::string& name, std::int64_t ts,
                       std::int64_t dur, std::int64_t tid = 1, std::optional<std::int64_t> seq = {}) {
    nlohmann::json r = {{"ph", "X"}, {"cat", category}, {"name", name}, {"pid", 1},
                        {"tid", tid}, {"ts", ts},       {"dur", dur}};
    if (seq) r["args"] = {{"Sequence number", *seq}};
    records_.push_back(std::move(r));
    return *this;
  }
  TraceBuilder& op(const std::string& name, std::int64_t ts, std::int64_t dur, std::int64_t tid = 1,
                   std::optional<std::int64_t> seq = {}) {
    return window("cpu_op", name, ts, dur, tid, seq);
  }
  TraceBuilder& component(const std::string& name, std::int64_t ts, std::int64_t dur, std::int64_t tid = 1) {
    return window("python_function", name, ts, dur, tid);
  }
  TraceBuilder& annotation(const std::string& name, std::int64_t ts, std::int64_t dur, std::int64_t tid = 1) {
    return window("user_annotation", name, ts, dur, tid);
  }
  TraceBuilder& mem(std::int64_t ts, std::uint64_t addr, std::int64_t bytes, std::int64_t tid = 1,
                    std::int64_t device = -1) {
    records_.push_back({{"ph", "i"},
                        {"cat", "cpu_instant_event"},
                        {"name", "[memory]"},
                        {"pid", 1},
                        {"tid", tid},
                        {"ts", ts},
                        {"args", {{"Addr", addr}, {"Bytes", bytes}, {"Device Id", device}}}});
    return *this;
  }
  TraceBuilder& raw(nlohmann::json record) {
    records_.push_back(std::move(record));
    return *this;
  }

  std::string json() const {
    nlohmann::json doc = {{"traceEvents", records_}};
    return doc.dump();
  }
  std::vector<trace::TraceEvent> events(const trace::FieldMapping& mapping = {}) const {
    return trace::parse_trace(json(), mapping).events;
  }

 private:
  std::vector<nlohmann::json> records_;
};

}  // namespace peakmem::testing
