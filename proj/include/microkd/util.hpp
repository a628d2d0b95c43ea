#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mkd {

/// Invalid or inconsistent configuration; message names the offending field.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Unknown symbol or id during encode/decode; carries the offending position.
struct TokenError : std::runtime_error {
  TokenError(const std::string& msg, std::size_t position)
      : std::runtime_error(msg + " (position " + std::to_string(position) + ")"),
        position(position) {}
  std::size_t position;
};

/// Numerical failure during training; carries the location in the schedule.
struct TrainError : std::runtime_error {
  TrainError(const std::string& msg, int stage, int epoch, int batch)
      : std::runtime_error(msg + " (stage " + std::to_string(stage) + ", epoch " +
                           std::to_string(epoch) + ", batch " + std::to_string(batch) + ")"),
        stage(stage), epoch(epoch), batch(batch) {}
  int stage;
  int epoch;
  int batch;
};

/// Broken internal invariant (programming error surfaced as an exception).
struct ContractError : std::logic_error {
  explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

uint64_t fnv1a64(std::string_view bytes);
std::string to_hex(uint64_t value);

/// Shortest round-trip decimal form of a double (printf %.17g trimmed).
std::string format_double(double value);

/// Fixed-point with `digits` decimals, ties rounded half to even.
std::string format_fixed(double value, int digits);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

/// Splits one CSV line on commas (no quoting; fields never contain commas here).
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace mkd
