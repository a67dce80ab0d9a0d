// Copyright 2026 The peakmem Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "peakmem/error.hpp"

namespace peakmem {

// Reads a whole file. Gzip-compressed content (magic 1f 8b) is inflated
// transparently.
std::string read_file(const std::filesystem::path& path, Stage stage);
void write_file(const std::filesystem::path& path, std::string_view contents, Stage stage);

bool is_gzip(std::string_view bytes) noexcept;
std::string gunzip(std::string_view bytes);

// `key = value` lines, '#' starts a comment. Keys are kept in file order
// only through the map's ordering; duplicates are rejected.
std::map<std::string, std::string> parse_key_values(std::string_view text, Stage stage);

std::vector<std::string_view> split(std::string_view line, char delimiter);
std::string_view trim(std::string_view s) noexcept;

// Parses a byte quantity: plain integer bytes, binary suffixes
// (KiB, MiB, GiB, TiB) or decimal suffixes (KB, MB, GB, TB). Case-insensitive
// suffixes, optional whitespace between number and unit, fractional values
// allowed with a suffix (truncated to whole bytes).
std::optional<std::uint64_t> parse_byte_size(std::string_view text);

std::optional<std::int64_t> parse_int(std::string_view text);
std::optional<std::uint64_t> parse_uint(std::string_view text);

// Human-readable binary rendering, e.g. "2.00 MiB". Only for logs.
std::string format_bytes(std::uint64_t bytes);

}  // namespace peakmem
