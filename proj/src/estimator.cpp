// Copyright 2026 The peakmem Authors
// SPDX-License-Identifier: Apache-2.0

#include "peakmem/estimator.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "peakmem/text_io.hpp"

namespace peakmem {

Estimation estimate(std::string_view trace_text, const EstimateOptions& options) {
  options.mapping.validate();
  options.sim.validate();

  Estimation est;
  est.trace = trace::parse_trace(trace_text, options.mapping, {options.ingest_threads});
  const auto& events = est.trace.events;
  est.forest = trace::build_windows(events);
  est.annotations = trace::index_annotations(
      events, options.mapping, std::max<std::size_t>(2, options.orchestrate.analysis_iteration + 1));

  auto recon = lifecycle::reconstruct_blocks(events);
  const std::size_t total = recon.blocks.size();
  auto attributed = lifecycle::filter_relevant(lifecycle::attribute_blocks(std::move(recon.blocks), est.forest));
  est.blocks = orch::classify_blocks(std::move(attributed), events, est.forest, est.annotations,
                                     options.classify);
  est.sequence = orch::orchestrate(est.blocks, est.annotations, options.orchestrate);
  est.outcome = sim::simulate(est.sequence, options.sim);

  EstimateReport& r = est.report;
  r.peak_reserved_bytes = est.outcome.peak_reserved_bytes;
  r.peak_allocated_bytes = est.outcome.peak_allocated_bytes;
  r.oom = est.outcome.oom;
  r.predicted_oom = predict_oom(r.peak_reserved_bytes, options.sim.device_capacity_bytes) || r.oom.has_value();
  r.analysis_window = est.sequence.analysis_window;
  r.iteration_count = est.annotations.iterations.size();
  r.ingest = est.trace.stats;
  r.tallies = recon.tallies;
  r.blocks_total = total;
  r.blocks_attributed = est.blocks.size();
  r.sequence_events = est.sequence.events.size();
  r.carryover_blocks = est.sequence.carryover_ids.size();
  std::map<lifecycle::LifecycleClass, std::size_t> counts;
  for (const auto& b : est.blocks) ++counts[b.lifecycle];
  r.class_counts.assign(counts.begin(), counts.end());
  r.sim = options.sim;
  return est;
}

Estimation estimate_file(const std::filesystem::path& trace_path, const EstimateOptions& options) {
  const std::string text = read_file(trace_path, Stage::Ingest);
  return estimate(text, options);
}

std::string serialize_report(const EstimateReport& r) {
  std::ostringstream out;
  out << "schema_version=" << kReportSchemaVersion << '\n';
  out << "peak_reserved_bytes=" << r.peak_reserved_bytes << '\n';
  out << "peak_allocated_bytes=" << r.peak_allocated_bytes << '\n';
  out << "device_capacity_bytes=" << r.sim.device_capacity_bytes << '\n';
  out << "predicted_oom=" << (r.predicted_oom ? "true" : "false") << '\n';
  if (r.oom) {
    out << "oom.event_index=" << r.oom->event_index << '\n';
    out << "oom.ts_us=" << r.oom->ts_us << '\n';
    out << "oom.block_id=" << r.oom->block_id << '\n';
    out << "oom.requested_bytes=" << r.oom->requested_bytes << '\n';
  }
  out << "analysis_window_us=" << r.analysis_window.start_us << ',' << r.analysis_window.end_us << '\n';
  out << "iterations=" << r.iteration_count << '\n';
  out << "ingest.records_seen=" << r.ingest.records_seen << '\n';
  out << "ingest.dropped_unrecognized=" << r.ingest.dropped_unrecognized << '\n';
  out << "ingest.rejected_invalid=" << r.ingest.rejected_invalid << '\n';
  out << "ingest.filtered_device=" << r.ingest.filtered_device << '\n';
  out << "blocks.total=" << r.blocks_total << '\n';
  out << "blocks.attributed=" << r.blocks_attributed << '\n';
  out << "blocks.orphan_frees=" << r.tallies.orphan_frees << '\n';
  out << "blocks.size_mismatches=" << r.tallies.size_mismatches << '\n';
  out << "blocks.zero_lifetime=" << r.tallies.zero_lifetime << '\n';
  for (const auto& [cls, n] : r.class_counts) out << "class." << lifecycle::to_string(cls) << '=' << n << '\n';
  out << "sequence.events=" << r.sequence_events << '\n';
  out << "sequence.carryover_blocks=" << r.carryover_blocks << '\n';
  std::istringstream cfg(sim::dump_sim_config(r.sim));
  for (std::string line; std::getline(cfg, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    out << "sim." << trim(std::string_view(line).substr(0, eq)) << '='
        << trim(std::string_view(line).substr(eq + 1)) << '\n';
  }
  return out.str();
}

}  // namespace peakmem
