// Copyright 2026 The peakmem Authors
// SPDX-License-Identifier: Apache-2.0

#include "peakmem/synthgen.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include "peakmem/error.hpp"

namespace peakmem::synth {
namespace {

using lifecycle::LifecycleClass;

constexpr std::uint64_t kBaseAddress = 0x7f3a00000000ULL;
constexpr std::int64_t kThread = 1;

[[noreturn]] void invalid(const std::string& what) {
  throw Error(Stage::Synth, ErrorKind::InvalidSpec, what);
}

void append_json_string(std::string& out, std::string_view s) {
  out.push_back('"');
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
}

// Emits trace records on a jittered time grid and keeps the ground truth for
// every block it allocates.
class Builder {
 public:
  explicit Builder(const SynthSpec& spec)
      : spec_(spec), rng_(spec.seed), jitter_(0, spec.jitter_us) {
    out_.reserve(1 << 20);
    out_ += "{\"schemaVersion\":1,\"traceName\":\"synthetic\",\"traceEvents\":[";
  }

  std::int64_t tick() {
    ++point_;
    return point_ * spec_.grid_us + jitter_(rng_);
  }

  // Returns the window's start time.
  std::int64_t open(std::string_view category, std::string name,
                    std::optional<std::int64_t> seq = {}) {
    const std::int64_t start = tick();
    stack_.push_back({std::string(category), std::move(name), start, seq});
    return start;
  }

  // Returns the window's end time.
  std::int64_t close() {
    Open o = std::move(stack_.back());
    stack_.pop_back();
    const std::int64_t end = tick();
    begin_record();
    out_ += "\"ph\":\"X\",\"cat\":";
    append_json_string(out_, o.category);
    out_ += ",\"name\":";
    append_json_string(out_, o.name);
    out_ += ",\"pid\":1,\"tid\":" + std::to_string(kThread) + ",\"ts\":" + std::to_string(o.start) +
            ",\"dur\":" + std::to_string(end - o.start);
    if (o.seq) out_ += ",\"args\":{\"Sequence number\":" + std::to_string(*o.seq) + "}";
    out_ += '}';
    return end;
  }

  std::uint64_t fresh_address(std::uint64_t size) {
    const std::uint64_t a = next_address_;
    next_address_ += (size + 1023) / 512 * 512;
    return a;
  }

  // Returns the inventory index of the new block.
  std::size_t alloc(std::uint64_t size, std::optional<LifecycleClass> cls,
                    std::optional<std::uint64_t> address = {}) {
    const std::uint64_t addr = address ? *address : fresh_address(size);
    const std::int64_t t = tick();
    total_ += size;
    memory_record(t, addr, static_cast<std::int64_t>(size));
    InventoryEntry e;
    e.address = addr;
    e.size_bytes = size;
    e.expected_class = cls;
    e.alloc_us = t;
    inventory_.entries.push_back(e);
    gpu_free_.emplace_back();
    return inventory_.entries.size() - 1;
  }

  void free(std::size_t index) {
    InventoryEntry& e = inventory_.entries[index];
    const std::int64_t t = tick();
    total_ -= e.size_bytes;
    memory_record(t, e.address, -static_cast<std::int64_t>(e.size_bytes));
    e.dealloc_us = t;
  }

  void set_gpu_free(std::size_t index, std::int64_t t) { gpu_free_[index] = t; }
  std::int64_t alloc_time(std::size_t index) const { return inventory_.entries[index].alloc_us; }
  const std::optional<std::int64_t>& dealloc_time(std::size_t index) const {
    return inventory_.entries[index].dealloc_us;
  }

  SynthOutput finish(std::int64_t ws, std::int64_t we) {
    out_ += "]}\n";
    inventory_.analysis_start_us = ws;
    inventory_.analysis_end_us = we;
    for (std::size_t i = 0; i < inventory_.entries.size(); ++i) {
      InventoryEntry& e = inventory_.entries[i];
      if (!e.expected_class) continue;
      const bool persistent = *e.expected_class == LifecycleClass::Parameter ||
                              *e.expected_class == LifecycleClass::OptimizerState;
      const std::optional<std::int64_t> gfree = persistent ? std::nullopt : gpu_free_[i];
      if (e.alloc_us >= we || (gfree && *gfree <= ws)) continue;
      e.in_window = true;
      e.orch_alloc_us = std::max(e.alloc_us, ws);
      if (!persistent) e.orch_free_us = gfree ? std::min(*gfree, we) : we;
    }
    return {std::move(out_), std::move(inventory_), records_};
  }

 private:
  struct Open {
    std::string category;
    std::string name;
    std::int64_t start;
    std::optional<std::int64_t> seq;
  };

  void begin_record() {
    if (records_++ > 0) out_ += ",\n";
    out_ += '{';
  }

  void memory_record(std::int64_t t, std::uint64_t addr, std::int64_t bytes) {
    begin_record();
    out_ += "\"ph\":\"i\",\"cat\":\"cpu_instant_event\",\"s\":\"t\",\"name\":\"[memory]\",\"pid\":1,\"tid\":" +
            std::to_string(kThread) + ",\"ts\":" + std::to_string(t) + ",\"args\":{\"Total Reserved\":0," +
            "\"Total Allocated\":" + std::to_string(total_) + ",\"Bytes\":" + std::to_string(bytes) +
            ",\"Addr\":" + std::to_string(addr) + ",\"Device Id\":-1,\"Device Type\":0}}";
  }

  const SynthSpec& spec_;
  std::mt19937_64 rng_;
  std::uniform_int_distribution<std::int64_t> jitter_;
  std::string out_;
  std::size_t records_ = 0;
  std::int64_t point_ = 0;
  std::vector<Open> stack_;
  std::uint64_t next_address_ = kBaseAddress;
  std::uint64_t total_ = 0;
  Inventory inventory_;
  // GPU-side free time per entry as the training loop defines it.
  std::vector<std::optional<std::int64_t>> gpu_free_;
};

}  // namespace

std::string_view to_string(ZeroGradPlacement p) {
  switch (p) {
    case ZeroGradPlacement::BeforeBackward: return "before_backward";
    case ZeroGradPlacement::StartOfIteration: return "start_of_iteration";
    case ZeroGradPlacement::Absent: return "absent";
  }
  return "?";
}

std::optional<ZeroGradPlacement> zero_grad_from_string(std::string_view s) {
  for (auto p : {ZeroGradPlacement::BeforeBackward, ZeroGradPlacement::StartOfIteration,
                 ZeroGradPlacement::Absent}) {
    if (s == to_string(p)) return p;
  }
  return std::nullopt;
}

void SynthSpec::validate() const {
  if (iterations < 2) invalid("at least two iterations are required");
  if (parameter_bytes.empty()) invalid("at least one layer is required");
  const std::size_t layers = parameter_bytes.size();
  for (auto b : parameter_bytes) {
    if (b == 0) invalid("parameter size must be positive");
  }
  for (const auto& a : activations) {
    if (a.bytes == 0) invalid("activation size must be positive");
    if (a.layer >= layers) invalid("activation layer " + std::to_string(a.layer) + " out of range");
  }
  for (const auto& g : gradients) {
    if (g.bytes == 0) invalid("gradient size must be positive");
    if (g.layer >= layers) invalid("gradient layer " + std::to_string(g.layer) + " out of range");
  }
  for (auto b : batch_bytes) {
    if (b == 0) invalid("batch tensor size must be positive");
  }
  if (grid_us < 2) invalid("grid_us must be at least 2");
  if (jitter_us < 0 || jitter_us >= grid_us) invalid("jitter_us must be in [0, grid_us)");
}

SynthSpec small_spec() {
  SynthSpec s;
  s.iterations = 3;
  s.parameter_bytes = {3 * 1048576ULL, 1536 * 1024ULL, 786432ULL, 12 * 1048576ULL + 12345};
  for (std::size_t j = 0; j < s.parameter_bytes.size(); ++j) {
    s.gradients.push_back({s.parameter_bytes[j], j});
  }
  s.activations = {{4 * 1048576ULL, 0}, {2 * 1048576ULL + 100, 1}, {3000, 1},
                   {700 * 1024ULL, 2}, {24 * 1048576ULL, 3}};
  s.batch_bytes = {6 * 1048576ULL, 4096};
  s.optimizer_state = true;
  s.zero_grad = ZeroGradPlacement::BeforeBackward;
  s.op_workspace_bytes = 256 * 1024;
  s.seed = 7;
  return s;
}

SynthSpec scaled_spec(std::size_t layers, std::size_t iterations, std::uint64_t seed) {
  static constexpr std::uint64_t kSizes[] = {4096, 65536, 524288, 3 * 1048576ULL, 1000};
  SynthSpec s;
  s.iterations = iterations;
  s.seed = seed;
  s.optimizer_state = true;
  s.zero_grad = ZeroGradPlacement::StartOfIteration;
  s.op_workspace_bytes = 8192;
  s.batch_bytes = {1048576};
  for (std::size_t j = 0; j < layers; ++j) {
    const std::uint64_t size = kSizes[j % 5];
    s.parameter_bytes.push_back(size);
    s.gradients.push_back({size, j});
    s.activations.push_back({kSizes[(j + 2) % 5], j});
  }
  return s;
}

SynthOutput generate(const SynthSpec& spec) {
  spec.validate();
  const std::size_t layers = spec.parameter_bytes.size();
  Builder b(spec);

  std::vector<std::vector<std::size_t>> acts_by_layer(layers), grads_by_layer(layers);
  for (std::size_t i = 0; i < spec.activations.size(); ++i) acts_by_layer[spec.activations[i].layer].push_back(i);
  for (std::size_t i = 0; i < spec.gradients.size(); ++i) grads_by_layer[spec.gradients[i].layer].push_back(i);
  const std::uint64_t workspace_address =
      spec.op_workspace_bytes ? b.fresh_address(spec.op_workspace_bytes) : 0;

  auto workspace = [&] {
    if (spec.op_workspace_bytes == 0) return;
    std::size_t w = b.alloc(spec.op_workspace_bytes, LifecycleClass::Activation, workspace_address);
    b.free(w);
    b.set_gpu_free(w, *b.dealloc_time(w));
  };

  b.open("python_function", "nn.Module: Model.to");
  for (std::size_t j = 0; j < layers; ++j) {
    b.open("cpu_op", "aten::empty_strided");
    b.alloc(spec.parameter_bytes[j], LifecycleClass::Parameter);
    b.close();
  }
  b.close();

  std::vector<std::size_t> live_gradients;
  std::vector<std::size_t> live_batch;
  std::int64_t ws = 0, we = 0;

  auto zero_grad = [&] {
    b.open("user_annotation", "Optimizer.zero_grad#Adam.zero_grad");
    b.open("python_function", "torch/optim/optimizer.py(258): zero_grad");
    for (std::size_t g : live_gradients) b.free(g);
    b.close();
    const std::int64_t end = b.close();
    for (std::size_t g : live_gradients) b.set_gpu_free(g, end);
    live_gradients.clear();
  };

  for (std::size_t k = 0; k < spec.iterations; ++k) {
    const std::int64_t iteration_start = b.open("user_annotation", "ProfilerStep#" + std::to_string(k));
    const bool allocate_grads = spec.zero_grad != ZeroGradPlacement::Absent || k == 0;
    if (spec.zero_grad == ZeroGradPlacement::StartOfIteration) zero_grad();

    b.open("user_annotation", "enumerate(DataLoader)#_SingleProcessDataLoaderIter.__next__");
    b.open("python_function", "torch/utils/data/dataloader.py(623): __next__");
    std::vector<std::size_t> batch;
    for (std::uint64_t size : spec.batch_bytes) {
      b.open("cpu_op", "aten::empty");
      batch.push_back(b.alloc(size, LifecycleClass::BatchData));
      b.close();
    }
    for (std::size_t x : live_batch) b.free(x);
    live_batch = batch;
    b.close();
    b.close();

    if (spec.script_noise) {
      b.open("python_function", "train.py(41): <module>");
      std::size_t n = b.alloc(512 + 128 * k, std::nullopt);
      b.free(n);
      b.close();
    }

    std::vector<std::vector<std::size_t>> acts(layers);
    b.open("python_function", "nn.Module: Model_0");
    for (std::size_t j = 0; j < layers; ++j) {
      b.open("python_function", "nn.Module: Linear_" + std::to_string(j));
      b.open("cpu_op", "aten::linear", static_cast<std::int64_t>(k * layers + j));
      workspace();
      for (std::size_t a : acts_by_layer[j]) {
        acts[j].push_back(b.alloc(spec.activations[a].bytes, LifecycleClass::Activation));
      }
      b.close();
      b.close();
    }
    b.close();

    if (spec.zero_grad == ZeroGradPlacement::BeforeBackward) zero_grad();

    b.open("python_function", "torch/autograd/__init__.py(197): backward");
    for (std::size_t jj = layers; jj-- > 0;) {
      b.open("cpu_op", "autograd::engine::evaluate_function: LinearBackward0",
             static_cast<std::int64_t>(k * layers + jj));
      workspace();
      if (allocate_grads) {
        for (std::size_t g : grads_by_layer[jj]) {
          live_gradients.push_back(b.alloc(spec.gradients[g].bytes, LifecycleClass::Gradient));
        }
      }
      for (std::size_t a : acts[jj]) {
        b.free(a);
        b.set_gpu_free(a, *b.dealloc_time(a));
      }
      b.close();
    }
    b.close();

    b.open("user_annotation", "Optimizer.step#Adam.step");
    b.open("python_function", "torch/optim/adam.py(130): step");
    if (spec.optimizer_state && k == 0) {
      for (std::size_t j = 0; j < layers; ++j) {
        for (int s = 0; s < 2; ++s) {
          b.open("cpu_op", "aten::zeros_like");
          b.alloc(spec.parameter_bytes[j], LifecycleClass::OptimizerState);
          b.close();
        }
      }
    }
    b.close();
    b.close();

    const std::int64_t iteration_end = b.close();
    for (std::size_t x : batch) b.set_gpu_free(x, iteration_end);
    if (k == 1) {
      ws = iteration_start;
      we = iteration_end;
    }
  }
  return b.finish(ws, we);
}

std::string dump_inventory(const Inventory& inventory) {
  std::ostringstream out;
  out << "# analysis_window_us=" << inventory.analysis_start_us << ',' << inventory.analysis_end_us
      << '\n';
  out << "address,size_bytes,class,alloc_us,dealloc_us,in_window,orch_alloc_us,orch_free_us\n";
  for (const auto& e : inventory.entries) {
    out << e.address << ',' << e.size_bytes << ','
        << (e.expected_class ? lifecycle::to_string(*e.expected_class) : std::string_view("filtered"))
        << ',' << e.alloc_us << ',';
    if (e.dealloc_us) out << *e.dealloc_us;
    out << ',' << (e.in_window ? 1 : 0) << ',';
    if (e.in_window) out << e.orch_alloc_us;
    out << ',';
    if (e.orch_free_us) out << *e.orch_free_us;
    out << '\n';
  }
  return out.str();
}

}  // namespace peakmem::synth
