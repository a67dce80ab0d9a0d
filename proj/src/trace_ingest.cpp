// Copyright 2026 The peakmem Authors
// SPDX-License-Identifier: Apache-2.0

#include "peakmem/trace_ingest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <thread>
#include <utility>

#include <json.hpp>

#include "peakmem/error.hpp"
#include "peakmem/text_io.hpp"

namespace peakmem::trace {

std::string_view to_string(Category category) {
  switch (category) {
    case Category::PythonFunction: return "python_function";
    case Category::UserAnnotation: return "user_annotation";
    case Category::CpuOp: return "cpu_op";
    case Category::CpuInstant: return "cpu_instant_event";
  }
  return "unknown";
}

namespace {

// (name, member) table shared by validation, loading and dumping.
struct MappingField {
  const char* name;
  std::string FieldMapping::*member;
};

constexpr MappingField kMappingFields[] = {
    {"key_phase", &FieldMapping::key_phase},
    {"key_category", &FieldMapping::key_category},
    {"key_name", &FieldMapping::key_name},
    {"key_timestamp", &FieldMapping::key_timestamp},
    {"key_duration", &FieldMapping::key_duration},
    {"key_thread", &FieldMapping::key_thread},
    {"key_args", &FieldMapping::key_args},
    {"key_seq_no", &FieldMapping::key_seq_no},
    {"key_address", &FieldMapping::key_address},
    {"key_bytes", &FieldMapping::key_bytes},
    {"key_device", &FieldMapping::key_device},
    {"key_total_allocated", &FieldMapping::key_total_allocated},
    {"cat_python_function", &FieldMapping::cat_python_function},
    {"cat_user_annotation", &FieldMapping::cat_user_annotation},
    {"cat_cpu_op", &FieldMapping::cat_cpu_op},
    {"cat_cpu_instant", &FieldMapping::cat_cpu_instant},
    {"label_iteration_prefix", &FieldMapping::label_iteration_prefix},
    {"label_zero_grad", &FieldMapping::label_zero_grad},
    {"label_dataloader", &FieldMapping::label_dataloader},
    {"label_optimizer_step", &FieldMapping::label_optimizer_step},
};

}  // namespace

void FieldMapping::validate() const {
  for (const auto& field : kMappingFields) {
    if ((this->*field.member).empty()) {
      throw Error(Stage::Ingest, ErrorKind::Validation,
                  std::string("field mapping '") + field.name + "' is empty");
    }
  }
  const std::set<std::string> labels{label_iteration_prefix, label_zero_grad, label_dataloader,
                                     label_optimizer_step};
  if (labels.size() != 4) {
    throw Error(Stage::Ingest, ErrorKind::Validation, "annotation labels must be pairwise distinct");
  }
  const std::set<std::string> categories{cat_python_function, cat_user_annotation, cat_cpu_op,
                                         cat_cpu_instant};
  if (categories.size() != 4) {
    throw Error(Stage::Ingest, ErrorKind::Validation, "category strings must be pairwise distinct");
  }
}

FieldMapping load_field_mapping(std::string_view key_value_text) {
  FieldMapping mapping;
  for (const auto& [key, value] : parse_key_values(key_value_text, Stage::Ingest)) {
    if (key == "target_device") {
      auto device = parse_int(value);
      if (!device) {
        throw Error(Stage::Ingest, ErrorKind::Validation, "target_device must be an integer");
      }
      mapping.target_device = *device;
      continue;
    }
    const auto* it = std::find_if(std::begin(kMappingFields), std::end(kMappingFields),
                                  [&](const MappingField& f) { return key == f.name; });
    if (it == std::end(kMappingFields)) {
      throw Error(Stage::Ingest, ErrorKind::Validation, "unknown field mapping key '" + key + "'");
    }
    mapping.*(it->member) = value;
  }
  mapping.validate();
  return mapping;
}

std::string dump_field_mapping(const FieldMapping& mapping) {
  std::ostringstream out;
  for (const auto& field : kMappingFields) {
    out << field.name << " = " << mapping.*(field.member) << '\n';
  }
  out << "target_device = " << mapping.target_device << '\n';
  return out.str();
}

namespace {

struct Num {
  enum class Kind : std::uint8_t { Absent, Int, UInt, Float, Bad };
  Kind kind = Kind::Absent;
  std::int64_t i = 0;
  std::uint64_t u = 0;
  double f = 0.0;

  static Num from_string(const std::string& s) {
    Num n;
    if (auto v = parse_int(s)) {
      n.kind = Kind::Int;
      n.i = *v;
    } else if (auto u = parse_uint(s)) {
      n.kind = Kind::UInt;
      n.u = *u;
    } else {
      char* end = nullptr;
      const double d = std::strtod(s.c_str(), &end);
      if (!s.empty() && end == s.c_str() + s.size()) {
        n.kind = Kind::Float;
        n.f = d;
      } else {
        n.kind = Kind::Bad;
      }
    }
    return n;
  }

  bool present() const { return kind != Kind::Absent; }

  std::optional<std::int64_t> as_int() const {
    switch (kind) {
      case Kind::Int: return i;
      case Kind::UInt:
        if (u > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) return {};
        return static_cast<std::int64_t>(u);
      case Kind::Float:
        if (!std::isfinite(f) || std::fabs(f) > 9.0e18) return {};
        return static_cast<std::int64_t>(std::llround(f));
      default: return {};
    }
  }

  std::optional<long double> as_real() const {
    switch (kind) {
      case Kind::Int: return static_cast<long double>(i);
      case Kind::UInt: return static_cast<long double>(u);
      case Kind::Float: return static_cast<long double>(f);
      default: return {};
    }
  }

  std::optional<std::uint64_t> as_uint() const {
    switch (kind) {
      case Kind::Int:
        if (i < 0) return {};
        return static_cast<std::uint64_t>(i);
      case Kind::UInt: return u;
      case Kind::Float:
        if (!std::isfinite(f) || f < 0 || f > 1.8e19 || f != std::floor(f)) return {};
        return static_cast<std::uint64_t>(f);
      default: return {};
    }
  }
};

struct RawRecord {
  std::string phase;
  std::string category;
  std::string name;
  bool has_category = false;
  Num ts, dur, tid;
  Num seq_no, address, bytes, device, total;
};

enum class RecordField : std::uint8_t { None, Phase, Category, Name, Ts, Dur, Tid, Args };
enum class ArgField : std::uint8_t { None, SeqNo, Address, Bytes, Device, Total };

using json = nlohmann::json;

class TraceSax {
 public:
  explicit TraceSax(const FieldMapping& mapping) : mapping_(mapping) {}

  std::vector<RawRecord> records;
  bool saw_events_array = false;
  std::optional<std::pair<std::size_t, std::string>> error;

  bool null() { return scalar(Num{Num::Kind::Bad}); }
  bool boolean(bool) { return scalar(Num{Num::Kind::Bad}); }
  bool number_integer(json::number_integer_t v) {
    Num n;
    n.kind = Num::Kind::Int;
    n.i = v;
    return scalar(n);
  }
  bool number_unsigned(json::number_unsigned_t v) {
    Num n;
    n.kind = Num::Kind::UInt;
    n.u = v;
    return scalar(n);
  }
  bool number_float(json::number_float_t v, const json::string_t&) {
    Num n;
    n.kind = Num::Kind::Float;
    n.f = v;
    return scalar(n);
  }
  bool string(json::string_t& s) {
    if (in_record_ && depth_ == record_depth_ + 1) {
      switch (field_) {
        case RecordField::Phase: current_.phase = std::move(s); return true;
        case RecordField::Category:
          current_.category = std::move(s);
          current_.has_category = true;
          return true;
        case RecordField::Name: current_.name = std::move(s); return true;
        default: break;
      }
    }
    if (!wants_number()) return true;
    return scalar(Num::from_string(s));
  }
  bool binary(json::binary_t&) { return true; }

  bool key(json::string_t& k) {
    if (!bare_ && depth_ == 1) {
      top_key_is_events_ = (k == "traceEvents");
    } else if (in_record_ && depth_ == record_depth_ + 1) {
      field_ = classify_record_key(k);
    } else if (in_args_ && depth_ == record_depth_ + 2) {
      arg_field_ = classify_arg_key(k);
    }
    return true;
  }

  bool start_object(std::size_t) {
    if (events_active_ && depth_ == record_depth_) {
      in_record_ = true;
      current_ = RawRecord{};
      field_ = RecordField::None;
    } else if (in_record_ && depth_ == record_depth_ + 1 && field_ == RecordField::Args) {
      in_args_ = true;
      arg_field_ = ArgField::None;
    }
    ++depth_;
    return true;
  }

  bool end_object() {
    --depth_;
    if (in_args_ && depth_ == record_depth_ + 1) {
      in_args_ = false;
      field_ = RecordField::None;
    } else if (in_record_ && depth_ == record_depth_) {
      in_record_ = false;
      records.push_back(std::move(current_));
    }
    return true;
  }

  bool start_array(std::size_t) {
    if (depth_ == 0) {
      bare_ = true;
      events_active_ = true;
      record_depth_ = 1;
    } else if (!bare_ && depth_ == 1 && top_key_is_events_) {
      events_active_ = true;
      record_depth_ = 2;
    }
    ++depth_;
    return true;
  }

  bool end_array() {
    --depth_;
    if (events_active_ && depth_ == record_depth_ - 1) {
      events_active_ = false;
      saw_events_array = true;
    }
    return true;
  }

  bool parse_error(std::size_t position, const std::string& last_token,
                   const nlohmann::detail::exception& ex) {
    std::string what = ex.what();
    if (!last_token.empty()) what += " (last token '" + last_token.substr(0, 32) + "')";
    error.emplace(position, std::move(what));
    return false;
  }

 private:
  bool wants_number() const {
    if (in_record_ && depth_ == record_depth_ + 1) {
      return field_ == RecordField::Ts || field_ == RecordField::Dur || field_ == RecordField::Tid;
    }
    return in_args_ && depth_ == record_depth_ + 2 && arg_field_ != ArgField::None;
  }

  bool scalar(const Num& n) {
    if (in_record_ && depth_ == record_depth_ + 1) {
      switch (field_) {
        case RecordField::Ts: current_.ts = n; break;
        case RecordField::Dur: current_.dur = n; break;
        case RecordField::Tid: current_.tid = n; break;
        default: break;
      }
    } else if (in_args_ && depth_ == record_depth_ + 2) {
      switch (arg_field_) {
        case ArgField::SeqNo: current_.seq_no = n; break;
        case ArgField::Address: current_.address = n; break;
        case ArgField::Bytes: current_.bytes = n; break;
        case ArgField::Device: current_.device = n; break;
        case ArgField::Total: current_.total = n; break;
        case ArgField::None: break;
      }
    }
    return true;
  }

  RecordField classify_record_key(const std::string& k) const {
    if (k == mapping_.key_phase) return RecordField::Phase;
    if (k == mapping_.key_category) return RecordField::Category;
    if (k == mapping_.key_name) return RecordField::Name;
    if (k == mapping_.key_timestamp) return RecordField::Ts;
    if (k == mapping_.key_duration) return RecordField::Dur;
    if (k == mapping_.key_thread) return RecordField::Tid;
    if (k == mapping_.key_args) return RecordField::Args;
    return RecordField::None;
  }

  ArgField classify_arg_key(const std::string& k) const {
    if (k == mapping_.key_seq_no) return ArgField::SeqNo;
    if (k == mapping_.key_address) return ArgField::Address;
    if (k == mapping_.key_bytes) return ArgField::Bytes;
    if (k == mapping_.key_device) return ArgField::Device;
    if (k == mapping_.key_total_allocated) return ArgField::Total;
    return ArgField::None;
  }

  const FieldMapping& mapping_;
  std::size_t depth_ = 0;
  std::size_t record_depth_ = 2;
  bool bare_ = false;
  bool top_key_is_events_ = false;
  bool events_active_ = false;
  bool in_record_ = false;
  bool in_args_ = false;
  RecordField field_ = RecordField::None;
  ArgField arg_field_ = ArgField::None;
  RawRecord current_;
};

enum class Outcome : std::uint8_t { Keep, Unrecognized, Invalid, OtherDevice };

struct Normalized {
  Outcome outcome = Outcome::Invalid;
  TraceEvent event;
};

Normalized normalize(RawRecord&& raw, std::size_t file_order, const FieldMapping& mapping) {
  Normalized out;
  if (!raw.has_category) {
    out.outcome = Outcome::Unrecognized;
    return out;
  }
  TraceEvent& ev = out.event;
  if (raw.category == mapping.cat_python_function) {
    ev.category = Category::PythonFunction;
  } else if (raw.category == mapping.cat_user_annotation) {
    ev.category = Category::UserAnnotation;
  } else if (raw.category == mapping.cat_cpu_op) {
    ev.category = Category::CpuOp;
  } else if (raw.category == mapping.cat_cpu_instant) {
    ev.category = Category::CpuInstant;
  } else {
    out.outcome = Outcome::Unrecognized;
    return out;
  }

  out.outcome = Outcome::Invalid;
  const auto ts = raw.ts.as_int();
  if (!ts || *ts < 0) return out;
  ev.start_us = *ts;
  ev.name = std::move(raw.name);
  ev.file_order = file_order;
  if (raw.tid.present()) {
    const auto tid = raw.tid.as_int();
    if (!tid) return out;
    ev.thread_id = *tid;
  }

  if (ev.category == Category::CpuInstant) {
    if (!raw.phase.empty() && raw.phase != "i" && raw.phase != "I") return out;
    const auto address = raw.address.as_uint();
    const auto bytes = raw.bytes.as_int();
    if (!address || *address == 0 || !bytes || *bytes == 0) return out;
    MemArgs mem;
    mem.address = *address;
    mem.bytes = *bytes;
    mem.device_id = mapping.target_device;
    if (raw.device.present()) {
      const auto device = raw.device.as_int();
      if (!device) return out;
      mem.device_id = *device;
    }
    if (raw.total.present()) mem.total_allocated = raw.total.as_uint();
    if (mem.device_id != mapping.target_device) {
      out.outcome = Outcome::OtherDevice;
      return out;
    }
    ev.mem = mem;
  } else {
    if (!raw.phase.empty() && raw.phase != "X") return out;
    const auto dur = raw.dur.as_int();
    if (!dur || *dur < 0) return out;
    ev.duration_us = *dur;
    if (raw.ts.kind == Num::Kind::Float || raw.dur.kind == Num::Kind::Float) {
      // Round the end point, not the duration, so that nesting survives.
      const long double end = *raw.ts.as_real() + *raw.dur.as_real();
      if (!std::isfinite(end) || std::fabs(end) > 9.0e18L) return out;
      ev.duration_us = std::max<std::int64_t>(0, std::llround(end) - ev.start_us);
    }
    if (raw.seq_no.present()) {
      const auto seq = raw.seq_no.as_int();
      if (seq) ev.seq_no = *seq;
    }
  }
  out.outcome = Outcome::Keep;
  return out;
}

}  // namespace

ParsedTrace parse_trace(std::string_view source, const FieldMapping& mapping,
                        const IngestOptions& options) {
  mapping.validate();
  TraceSax sax(mapping);
  const bool ok = json::sax_parse(source.begin(), source.end(), &sax);
  if (!ok) {
    // The reader counts the end-of-input marker as one byte.
    if (sax.error) throw ParseError(std::min(sax.error->first, source.size()), sax.error->second);
    throw ParseError(source.size(), "parse aborted");
  }
  if (!sax.saw_events_array) {
    throw Error(Stage::Ingest, ErrorKind::EmptyTrace, "document has no traceEvents array");
  }

  std::vector<RawRecord> raw = std::move(sax.records);
  std::vector<Normalized> normalized(raw.size());
  const std::size_t threads =
      std::clamp<std::size_t>(options.threads == 0 ? 1 : options.threads, 1, 64);
  const std::size_t chunk = (raw.size() + threads - 1) / threads;
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      normalized[i] = normalize(std::move(raw[i]), i, mapping);
    }
  };
  if (threads == 1 || raw.size() < 2 * threads) {
    work(0, raw.size());
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(raw.size(), begin + chunk);
      if (begin >= end) break;
      pool.emplace_back(work, begin, end);
    }
    for (auto& th : pool) th.join();
  }

  ParsedTrace parsed;
  parsed.stats.records_seen = raw.size();
  parsed.events.reserve(raw.size());
  for (auto& n : normalized) {
    switch (n.outcome) {
      case Outcome::Keep: parsed.events.push_back(std::move(n.event)); break;
      case Outcome::Unrecognized: ++parsed.stats.dropped_unrecognized; break;
      case Outcome::Invalid: ++parsed.stats.rejected_invalid; break;
      case Outcome::OtherDevice: ++parsed.stats.filtered_device; break;
    }
  }
  if (parsed.events.empty()) {
    throw Error(Stage::Ingest, ErrorKind::EmptyTrace,
                "no recognized events among " + std::to_string(raw.size()) + " records");
  }
  std::sort(parsed.events.begin(), parsed.events.end(),
            [](const TraceEvent& a, const TraceEvent& b) {
              if (a.start_us != b.start_us) return a.start_us < b.start_us;
              return a.file_order < b.file_order;
            });
  return parsed;
}

}  // namespace peakmem::trace
