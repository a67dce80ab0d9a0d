// Copyright 2026 The peakmem Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace peakmem::metrics {

// One estimator run on one configuration and device. Round-two fields exist
// only when the first round validated the estimate (C1 = 1) and the job fit
// on the full device.
struct RunRecord {
  std::string config_id;
  int round = 1;
  std::string device;
  std::string estimator;
  std::optional<std::uint64_t> m_peak_measured;  // absent when round one ran out of memory
  std::optional<std::uint64_t> m_peak_measured_r2;
  std::uint64_t m_peak_estimated = 0;
  bool oom_r1 = false;
  std::optional<bool> oom_r2;
  std::uint64_t m_init = 0;
  std::uint64_t m_fm = 0;
  std::uint64_t m_max = 0;

  bool operator==(const RunRecord&) const = default;
};

// Throws Error(Metrics, UndefinedError) when measured is zero.
double relative_error(std::uint64_t estimated, std::uint64_t measured);
// Even counts take the mean of the two central values. Throws
// Error(Metrics, NoData) when empty.
double median(std::vector<double> values);

bool predicted_oom(const RunRecord& r) noexcept;
int correctness1(bool predicted_oom, bool oom_actual_r1) noexcept;
int correctness2(int c1, std::optional<bool> oom_actual_r2, bool oom_actual_r1) noexcept;
int correctness1(const RunRecord& r) noexcept;
int correctness2(const RunRecord& r) noexcept;

// Error used by the median: round two when it ran without running out of
// memory, else round one. Absent when round one ran out of memory.
std::optional<double> selected_error(const RunRecord& r);
double mre(std::span<const RunRecord> records);
// Share of runs that failed validation in the given round (1 or 2).
double pef(std::span<const RunRecord> records, int round);
std::int64_t memory_saving(const RunRecord& r) noexcept;
double mcp(std::span<const RunRecord> records);

struct RunMetrics {
  int c1 = 0;
  int c2 = 0;
  std::optional<double> error;
  std::int64_t saving = 0;
};

struct MetricsReport {
  std::size_t n = 0;
  std::optional<double> mre;  // absent when no run fit in round one
  double pef_r1 = 0;
  double pef_r2 = 0;
  double mcp_bytes = 0;
  std::vector<RunMetrics> runs;
};

// Throws Error(Metrics, NoData) for an empty record set.
MetricsReport evaluate(std::span<const RunRecord> records);
std::string serialize_metrics(const MetricsReport& report, std::span<const RunRecord> records);

// Comma-separated with a header row; columns may appear in any order.
// Required: config_id, device, estimator, m_peak_measured, m_peak_estimated,
// oom_r1, m_max. Optional: round, m_peak_measured_r2, oom_r2, m_init, m_fm.
// Throws Error(Metrics, Parse|Validation) naming the offending line.
std::vector<RunRecord> parse_run_records(std::string_view text);

}  // namespace peakmem::metrics
