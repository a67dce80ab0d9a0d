// Copyright 2026 The peakmem Authors
// SPDX-License-Identifier: Apache-2.0

#include "peakmem/error.hpp"

namespace peakmem {

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::Ingest: return "ingest";
    case Stage::Analyze: return "analyze";
    case Stage::Orchestrate: return "orchestrate";
    case Stage::Simulate: return "simulate";
    case Stage::Metrics: return "metrics";
    case Stage::Synth: return "synth";
    case Stage::Cli: return "cli";
  }
  return "unknown";
}

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io: return "io";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::EmptyTrace: return "empty-trace";
    case ErrorKind::StructuralTrace: return "structural-trace";
    case ErrorKind::InsufficientIterations: return "insufficient-iterations";
    case ErrorKind::EmptyAnalysis: return "empty-analysis";
    case ErrorKind::ContractViolation: return "contract-violation";
    case ErrorKind::NoData: return "no-data";
    case ErrorKind::UndefinedError: return "undefined-error";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::InvalidSpec: return "invalid-spec";
  }
  return "unknown";
}

namespace {
std::string format_message(Stage stage, ErrorKind kind, const std::string& message) {
  std::string out = "[";
  out += to_string(stage);
  out += '/';
  out += to_string(kind);
  out += "] ";
  out += message;
  return out;
}
}  // namespace

Error::Error(Stage stage, ErrorKind kind, const std::string& message)
    : std::runtime_error(format_message(stage, kind, message)),
      stage_(stage),
      kind_(kind),
      detail_(message) {}

ParseError::ParseError(std::size_t offset, const std::string& message)
    : Error(Stage::Ingest, ErrorKind::Parse,
            "at byte offset " + std::to_string(offset) + ": " + message),
      offset_(offset) {}

}  // namespace peakmem
