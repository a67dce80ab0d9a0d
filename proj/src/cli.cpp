// Copyright 2026 The peakmem Authors
// SPDX-License-Identifier: Apache-2.0

#include "peakmem/cli.hpp"

#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include "peakmem/error.hpp"
#include "peakmem/estimator.hpp"
#include "peakmem/metrics.hpp"
#include "peakmem/random_sequence.hpp"
#include "peakmem/reference_allocator.hpp"
#include "peakmem/synthgen.hpp"
#include "peakmem/text_io.hpp"

namespace peakmem::cli {
namespace {

struct Common {
  std::string capacity;
  std::string sim_config;
  std::string out;
  bool verbose = false;
};

sim::SimConfig make_sim_config(const Common& c) {
  sim::SimConfig cfg;
  if (!c.sim_config.empty()) cfg = sim::load_sim_config(read_file(c.sim_config, Stage::Cli));
  if (!c.capacity.empty()) {
    auto v = parse_byte_size(c.capacity);
    if (!v || *v == 0) {
      throw Error(Stage::Cli, ErrorKind::Validation, "invalid capacity '" + c.capacity + "'");
    }
    cfg.device_capacity_bytes = *v;
  }
  if (cfg.device_capacity_bytes == 0) {
    throw Error(Stage::Cli, ErrorKind::Validation, "device capacity is required (--capacity or sim config)");
  }
  cfg.validate();
  return cfg;
}

void emit(const Common& c, const std::string& text, std::ostream& out) {
  if (c.out.empty() || c.out == "-") {
    out << text;
  } else {
    write_file(c.out, text, Stage::Cli);
  }
}

struct EstimateArgs {
  Common common;
  std::string trace;
  std::string mapping;
  std::string format = "report";
  unsigned threads = 1;
  std::size_t iteration = 1;
};

int cmd_estimate(const EstimateArgs& a, std::ostream& out, std::ostream& err) {
  EstimateOptions opts;
  std::string mapping_path = a.mapping;
  if (mapping_path.empty()) {
    if (const char* env = std::getenv(kMappingEnv)) mapping_path = env;
  }
  if (!mapping_path.empty()) opts.mapping = trace::load_field_mapping(read_file(mapping_path, Stage::Cli));
  opts.sim = make_sim_config(a.common);
  opts.ingest_threads = std::max(1u, a.threads);
  opts.orchestrate.analysis_iteration = a.iteration;

  const Estimation est = estimate_file(a.trace, opts);
  std::string text;
  if (a.format == "report") {
    text = serialize_report(est.report);
  } else if (a.format == "curve") {
    text = sim::dump_curve(est.outcome);
  } else if (a.format == "sequence-dump") {
    text = orch::dump_sequence(est.sequence);
  } else {
    text = lifecycle::dump_blocks(est.blocks, est.trace.events, est.forest);
  }
  emit(a.common, text, out);
  if (a.common.verbose) {
    err << "peak_reserved=" << format_bytes(est.report.peak_reserved_bytes)
        << " capacity=" << format_bytes(opts.sim.device_capacity_bytes)
        << " predicted_oom=" << (est.report.predicted_oom ? "true" : "false") << '\n';
  }
  return est.report.predicted_oom ? kExitOom : kExitFits;
}

struct SimulateArgs {
  Common common;
  std::string sequence;
  bool oracle_check = false;
  std::uint64_t seed = 1;
  std::size_t count = 100;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
  if (a.sequence.empty()) {
    if (!a.oracle_check) {
      throw Error(Stage::Cli, ErrorKind::Validation, "a sequence file is required unless --oracle-check is set");
    }
    for (std::size_t i = 0; i < a.count; ++i) {
      const std::uint64_t seed = a.seed + i;
      const auto seq = sim::random_sequence(seed);
      sim::SimConfig cfg = sim::random_config(seed);
      if (!a.common.capacity.empty() || !a.common.sim_config.empty()) cfg = make_sim_config(a.common);
      if (auto d = sim::reference::cross_check(seq, cfg)) {
        err << "divergence: seed " << seed << " first divergent event index " << d->event_index << ": "
            << d->description << '\n';
        return kExitDivergence;
      }
    }
    out << "oracle_check=pass sequences=" << a.count << " first_seed=" << a.seed << '\n';
    return kExitFits;
  }

  const auto seq = orch::parse_sequence(read_file(a.sequence, Stage::Cli));
  const sim::SimConfig cfg = make_sim_config(a.common);
  const sim::SimOutcome outcome = sim::simulate(seq, cfg);
  if (a.oracle_check) {
    if (auto d = sim::reference::cross_check(seq, cfg)) {
      err << "divergence: first divergent event index " << d->event_index << ": " << d->description << '\n';
      return kExitDivergence;
    }
  }
  emit(a.common, sim::dump_curve(outcome), out);
  if (a.common.verbose) {
    err << "peak_reserved=" << format_bytes(outcome.peak_reserved_bytes)
        << " peak_allocated=" << format_bytes(outcome.peak_allocated_bytes) << '\n';
  }
  if (outcome.oom) {
    err << "out of memory at event " << outcome.oom->event_index << " (block " << outcome.oom->block_id
        << ", " << outcome.oom->requested_bytes << " bytes)\n";
    return kExitOom;
  }
  return kExitFits;
}

int cmd_metrics(const std::string& path, const Common& c, std::ostream& out) {
  const auto records = metrics::parse_run_records(read_file(path, Stage::Metrics));
  const auto report = metrics::evaluate(records);
  emit(c, metrics::serialize_metrics(report, records), out);
  return kExitFits;
}

struct SynthArgs {
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string zero_grad;
  std::size_t layers = 0;
  std::size_t iterations = 0;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  synth::SynthSpec spec = a.layers > 0 ? synth::scaled_spec(a.layers, a.iterations ? a.iterations : 3, 1)
                                       : synth::small_spec();
  if (a.seed) spec.seed = *a.seed;
  if (a.iterations) spec.iterations = a.iterations;
  if (!a.zero_grad.empty()) {
    auto p = synth::zero_grad_from_string(a.zero_grad);
    if (!p) throw Error(Stage::Cli, ErrorKind::Validation, "unknown zero_grad placement '" + a.zero_grad + "'");
    spec.zero_grad = *p;
  }
  const auto result = synth::generate(spec);
  write_file(a.out, result.trace_json, Stage::Synth);
  write_file(a.out + ".inventory.csv", synth::dump_inventory(result.inventory), Stage::Synth);
  out << "records=" << result.record_count << " blocks=" << result.inventory.entries.size() << '\n';
  return kExitFits;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Peak GPU memory estimation from profiler traces", "peakmem"};
  app.require_subcommand(1);

  EstimateArgs est;
  auto* estimate = app.add_subcommand("estimate", "Estimate the peak reserved memory of a training trace");
  estimate->add_option("trace", est.trace, "Trace file (JSON, optionally gzip)")->required();
  estimate->add_option("--capacity", est.common.capacity, "Device capacity, e.g. 12GiB");
  estimate->add_option("--mapping", est.mapping, "Field-mapping file");
  estimate->add_option("--sim-config", est.common.sim_config, "Allocator constants file");
  estimate->add_option("--out", est.common.out, "Output file (default stdout)");
  estimate->add_option("--format", est.format, "Output format")
      ->check(CLI::IsMember({"report", "curve", "sequence-dump", "block-dump"}));
  estimate->add_option("--threads", est.threads, "Ingest worker threads");
  estimate->add_option("--iteration", est.iteration, "Zero-based analysis iteration");
  estimate->add_flag("--verbose,-v", est.common.verbose);

  SimulateArgs simu;
  auto* simulate = app.add_subcommand("simulate", "Replay an orchestrated sequence through the allocator");
  simulate->add_option("sequence", simu.sequence, "Sequence file");
  simulate->add_option("--capacity", simu.common.capacity, "Device capacity");
  simulate->add_option("--sim-config", simu.common.sim_config, "Allocator constants file");
  simulate->add_option("--out", simu.common.out, "Curve output file (default stdout)");
  simulate->add_flag("--oracle-check", simu.oracle_check, "Diff against the naive reference allocator");
  simulate->add_option("--seed", simu.seed, "First seed for random sequences");
  simulate->add_option("--count", simu.count, "Number of random sequences");
  simulate->add_flag("--verbose,-v", simu.common.verbose);

  std::string metrics_path;
  Common metrics_common;
  auto* metrics = app.add_subcommand("metrics", "Evaluate MRE, PEF and MCP over recorded runs");
  metrics->add_option("runs", metrics_path, "Run-record CSV")->required();
  metrics->add_option("--out", metrics_common.out, "Output file (default stdout)");
  metrics->add_flag("--verbose,-v", metrics_common.verbose);

  SynthArgs syn;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic trace and its expected inventory");
  synth->add_option("--out", syn.out, "Trace output path")->required();
  synth->add_option("--seed", syn.seed, "Jitter seed");
  synth->add_option("--zero-grad", syn.zero_grad, "before_backward, start_of_iteration or absent");
  synth->add_option("--layers", syn.layers, "Use a scaled spec with this many layers");
  synth->add_option("--iterations", syn.iterations, "Iteration count");

  std::vector<const char*> argv{"peakmem"};
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitFits : kExitError;
  }

  try {
    if (*estimate) return cmd_estimate(est, out, err);
    if (*simulate) return cmd_simulate(simu, out, err);
    if (*metrics) return cmd_metrics(metrics_path, metrics_common, out);
    return cmd_synth(syn, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
}

}  // namespace peakmem::cli
