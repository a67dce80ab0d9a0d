// Copyright 2026 The peakmem Authors
// SPDX-License-Identifier: Apache-2.0

#include "peakmem/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "peakmem/error.hpp"
#include "peakmem/text_io.hpp"

namespace peakmem::metrics {
namespace {

[[noreturn]] void no_data(const std::string& what) {
  throw Error(Stage::Metrics, ErrorKind::NoData, what);
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace

double relative_error(std::uint64_t estimated, std::uint64_t measured) {
  if (measured == 0) {
    throw Error(Stage::Metrics, ErrorKind::UndefinedError, "relative error with zero measured peak");
  }
  const double diff = estimated > measured ? static_cast<double>(estimated - measured)
                                           : static_cast<double>(measured - estimated);
  return diff / static_cast<double>(measured);
}

double median(std::vector<double> values) {
  if (values.empty()) no_data("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

bool predicted_oom(const RunRecord& r) noexcept { return r.m_peak_estimated > r.m_max; }

int correctness1(bool predicted, bool oom_actual_r1) noexcept { return predicted == oom_actual_r1 ? 1 : 0; }

int correctness2(int c1, std::optional<bool> oom_actual_r2, bool oom_actual_r1) noexcept {
  return (c1 == 1 && ((oom_actual_r2.has_value() && !*oom_actual_r2) || oom_actual_r1)) ? 1 : 0;
}

int correctness1(const RunRecord& r) noexcept { return correctness1(predicted_oom(r), r.oom_r1); }

int correctness2(const RunRecord& r) noexcept { return correctness2(correctness1(r), r.oom_r2, r.oom_r1); }

std::optional<double> selected_error(const RunRecord& r) {
  if (r.oom_r1) return std::nullopt;
  if (r.oom_r2.has_value() && !*r.oom_r2) {
    return relative_error(r.m_peak_estimated, r.m_peak_measured_r2.value_or(r.m_peak_measured.value_or(0)));
  }
  return relative_error(r.m_peak_estimated, r.m_peak_measured.value_or(0));
}

double mre(std::span<const RunRecord> records) {
  std::vector<double> errors;
  for (const auto& r : records) {
    if (auto e = selected_error(r)) errors.push_back(*e);
  }
  if (errors.empty()) no_data("no run fit in round one; MRE is undefined");
  return median(std::move(errors));
}

double pef(std::span<const RunRecord> records, int round) {
  if (records.empty()) no_data("PEF over zero runs");
  if (round != 1 && round != 2) {
    throw Error(Stage::Metrics, ErrorKind::Validation, "round must be 1 or 2");
  }
  std::size_t passed = 0;
  for (const auto& r : records) passed += round == 1 ? correctness1(r) : correctness2(r);
  return static_cast<double>(records.size() - passed) / static_cast<double>(records.size());
}

std::int64_t memory_saving(const RunRecord& r) noexcept {
  const auto max = static_cast<std::int64_t>(r.m_max);
  if (correctness1(r) == 1) {
    if (r.oom_r2.has_value() && !*r.oom_r2) return max - static_cast<std::int64_t>(r.m_peak_estimated);
    if (r.oom_r1) return max;
  }
  return -max;
}

double mcp(std::span<const RunRecord> records) {
  if (records.empty()) no_data("MCP over zero runs");
  long double sum = 0;
  for (const auto& r : records) sum += memory_saving(r);
  return static_cast<double>(sum / static_cast<long double>(records.size()));
}

MetricsReport evaluate(std::span<const RunRecord> records) {
  if (records.empty()) no_data("no run records");
  MetricsReport rep;
  rep.n = records.size();
  std::vector<double> errors;
  for (const auto& r : records) {
    RunMetrics m;
    m.c1 = correctness1(r);
    m.c2 = correctness2(r);
    m.error = selected_error(r);
    m.saving = memory_saving(r);
    if (m.error) errors.push_back(*m.error);
    rep.runs.push_back(m);
  }
  if (!errors.empty()) rep.mre = median(std::move(errors));
  rep.pef_r1 = pef(records, 1);
  rep.pef_r2 = pef(records, 2);
  rep.mcp_bytes = mcp(records);
  return rep;
}

std::string serialize_metrics(const MetricsReport& rep, std::span<const RunRecord> records) {
  std::ostringstream out;
  out << "schema_version=1\n";
  out << "runs=" << rep.n << '\n';
  out << "mre=" << (rep.mre ? format_double(*rep.mre) : std::string("undefined")) << '\n';
  out << "pef_r1=" << format_double(rep.pef_r1) << '\n';
  out << "pef_r2=" << format_double(rep.pef_r2) << '\n';
  out << "mcp_bytes=" << format_double(rep.mcp_bytes) << '\n';
  for (std::size_t i = 0; i < rep.runs.size(); ++i) {
    const auto& m = rep.runs[i];
    out << "run." << i << "=config_id:" << records[i].config_id << ",c1:" << m.c1 << ",c2:" << m.c2
        << ",error:" << (m.error ? format_double(*m.error) : std::string("none")) << ",saving_bytes:" << m.saving
        << '\n';
  }
  return out.str();
}

std::vector<RunRecord> parse_run_records(std::string_view text) {
  std::vector<RunRecord> records;
  std::map<std::string, std::size_t> columns;
  std::size_t line_no = 0;
  std::size_t pos = 0;

  auto fail = [&](ErrorKind kind, const std::string& what) -> void {
    throw Error(Stage::Metrics, kind, "line " + std::to_string(line_no) + ": " + what);
  };

  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto cells = split(line, ',');

    if (columns.empty()) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        const std::string name(trim(cells[i]));
        if (!columns.emplace(name, i).second) fail(ErrorKind::Parse, "duplicate column '" + name + "'");
      }
      for (const char* req : {"config_id", "device", "estimator", "m_peak_measured", "m_peak_estimated",
                              "oom_r1", "m_max"}) {
        if (!columns.count(req)) fail(ErrorKind::Parse, std::string("missing column '") + req + "'");
      }
      continue;
    }
    if (cells.size() != columns.size()) {
      fail(ErrorKind::Parse, "expected " + std::to_string(columns.size()) + " fields, got " +
                                 std::to_string(cells.size()));
    }
    auto cell = [&](const char* name) -> std::string_view {
      auto it = columns.find(name);
      return it == columns.end() ? std::string_view{} : trim(cells[it->second]);
    };
    auto bytes = [&](const char* name) -> std::optional<std::uint64_t> {
      const auto c = cell(name);
      if (c.empty()) return std::nullopt;
      auto v = parse_byte_size(c);
      if (!v) fail(ErrorKind::Parse, std::string(name) + ": not a byte quantity '" + std::string(c) + "'");
      return v;
    };
    auto boolean = [&](const char* name) -> std::optional<bool> {
      const auto c = cell(name);
      if (c.empty()) return std::nullopt;
      if (c == "1" || c == "true") return true;
      if (c == "0" || c == "false") return false;
      fail(ErrorKind::Parse, std::string(name) + ": not a boolean '" + std::string(c) + "'");
      return std::nullopt;
    };

    RunRecord r;
    r.config_id = std::string(cell("config_id"));
    r.device = std::string(cell("device"));
    r.estimator = std::string(cell("estimator"));
    r.m_peak_measured = bytes("m_peak_measured");
    r.m_peak_measured_r2 = bytes("m_peak_measured_r2");
    const auto est = bytes("m_peak_estimated");
    if (!est) fail(ErrorKind::Validation, "m_peak_estimated is required");
    r.m_peak_estimated = *est;
    const auto r1 = boolean("oom_r1");
    if (!r1) fail(ErrorKind::Validation, "oom_r1 is required");
    r.oom_r1 = *r1;
    r.oom_r2 = boolean("oom_r2");
    r.m_init = bytes("m_init").value_or(0);
    r.m_fm = bytes("m_fm").value_or(0);
    const auto max = bytes("m_max");
    if (!max || *max == 0) fail(ErrorKind::Validation, "m_max must be positive");
    r.m_max = *max;
    if (const auto c = cell("round"); !c.empty()) {
      if (c == "1") r.round = 1;
      else if (c == "2") r.round = 2;
      else fail(ErrorKind::Parse, "round must be 1 or 2");
    } else {
      r.round = r.oom_r2 ? 2 : 1;
    }

    if (!r.oom_r1 && (!r.m_peak_measured || *r.m_peak_measured == 0)) {
      fail(ErrorKind::Validation, "m_peak_measured must be positive when oom_r1 is false");
    }
    const bool has_r2 = r.oom_r2.has_value() || r.m_peak_measured_r2.has_value();
    if ((r.round == 2) != r.oom_r2.has_value()) {
      fail(ErrorKind::Validation, "round 2 records carry oom_r2 and round 1 records do not");
    }
    if (has_r2 && !(correctness1(r) == 1 && !r.oom_r1)) {
      fail(ErrorKind::Validation, "round-2 fields present but round 2 runs only when C1 = 1 and oom_r1 = false");
    }
    if (r.m_peak_measured_r2 && !r.oom_r2) {
      fail(ErrorKind::Validation, "m_peak_measured_r2 given without oom_r2");
    }
    if (r.m_peak_measured_r2 && *r.oom_r2) {
      fail(ErrorKind::Validation, "m_peak_measured_r2 given for a round 2 that ran out of memory");
    }
    records.push_back(std::move(r));
  }
  if (records.empty()) no_data("run-record file has no records");
  return records;
}

}  // namespace peakmem::metrics
