// Copyright 2026 The peakmem Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace peakmem::trace {

enum class Category { PythonFunction, UserAnnotation, CpuOp, CpuInstant };

std::string_view to_string(Category category);

// Memory payload of an instant event. Positive bytes allocate, negative free.
struct MemArgs {
  std::uint64_t address = 0;
  std::int64_t bytes = 0;
  std::int64_t device_id = 0;
  std::optional<std::uint64_t> total_allocated;

  bool operator==(const MemArgs&) const = default;
};

struct TraceEvent {
  Category category = Category::CpuOp;
  std::string name;
  std::int64_t start_us = 0;
  std::optional<std::int64_t> duration_us;  // absent for instants
  std::int64_t thread_id = 0;
  std::optional<std::int64_t> seq_no;
  std::optional<MemArgs> mem;  // present for instants only
  std::size_t file_order = 0;

  std::int64_t end_us() const noexcept { return start_us + duration_us.value_or(0); }
  bool operator==(const TraceEvent&) const = default;
};

// Names of the keys and labels used to read a trace. Profiler versions
// disagree on spelling, so everything is overridable.
struct FieldMapping {
  std::string key_phase = "ph";
  std::string key_category = "cat";
  std::string key_name = "name";
  std::string key_timestamp = "ts";
  std::string key_duration = "dur";
  std::string key_thread = "tid";
  std::string key_args = "args";
  std::string key_seq_no = "Sequence number";
  std::string key_address = "Addr";
  std::string key_bytes = "Bytes";
  std::string key_device = "Device Id";
  std::string key_total_allocated = "Total Allocated";

  std::string cat_python_function = "python_function";
  std::string cat_user_annotation = "user_annotation";
  std::string cat_cpu_op = "cpu_op";
  std::string cat_cpu_instant = "cpu_instant_event";

  // Iteration markers match by prefix; the other labels match as
  // case-insensitive substrings of the annotation name.
  std::string label_iteration_prefix = "ProfilerStep#";
  std::string label_zero_grad = "zero_grad";
  std::string label_dataloader = "__next__";
  std::string label_optimizer_step = "optimizer.step";

  // Memory instants on any other device are discarded. The CPU profiler
  // reports host allocations as device -1; records without a device key are
  // assumed to be on the target device.
  std::int64_t target_device = -1;

  // Throws Error(Validation) on empty keys or duplicated labels.
  void validate() const;
};

// Applies `key = value` overrides (field names as above) on top of the
// defaults. Unknown keys are rejected.
FieldMapping load_field_mapping(std::string_view key_value_text);
std::string dump_field_mapping(const FieldMapping& mapping);

struct IngestStats {
  std::size_t records_seen = 0;
  std::size_t dropped_unrecognized = 0;  // category not one of the four
  std::size_t rejected_invalid = 0;      // recognized but malformed record
  std::size_t filtered_device = 0;       // memory instant on another device

  bool operator==(const IngestStats&) const = default;
};

struct ParsedTrace {
  std::vector<TraceEvent> events;  // sorted by (start_us, file_order)
  IngestStats stats;
};

struct IngestOptions {
  // Worker threads for record normalization. Output is identical for any
  // value.
  unsigned threads = 1;
};

// Parses a trace-event JSON document (top-level object with a "traceEvents"
// array, or a bare array of records). Gzip input must be inflated first;
// see read_file().
// Throws ParseError on malformed JSON and Error(EmptyTrace) when no record
// survives normalization.
ParsedTrace parse_trace(std::string_view source, const FieldMapping& mapping,
                        const IngestOptions& options = {});

}  // namespace peakmem::trace
