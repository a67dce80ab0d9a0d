// Copyright 2026 The peakmem Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace peakmem {

// Pipeline stage that raised an error. Carried on every Error so callers
// can label failures without parsing messages.
enum class Stage { Ingest, Analyze, Orchestrate, Simulate, Metrics, Synth, Cli };

enum class ErrorKind {
  Io,
  Parse,
  EmptyTrace,
  StructuralTrace,
  InsufficientIterations,
  EmptyAnalysis,
  ContractViolation,
  NoData,
  UndefinedError,
  Validation,
  InvalidSpec,
};

std::string_view to_string(Stage stage);
std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(Stage stage, ErrorKind kind, const std::string& message);

  Stage stage() const noexcept { return stage_; }
  ErrorKind kind() const noexcept { return kind_; }
  // Message without the "[stage/kind]" prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  Stage stage_;
  ErrorKind kind_;
  std::string detail_;
};

// Malformed input file. `offset` is the byte position of the failure.
class ParseError : public Error {
 public:
  ParseError(std::size_t offset, const std::string& message);
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace peakmem
