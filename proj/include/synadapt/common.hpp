#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace synadapt {

// Fatal configuration or environment problem (missing grammar, unreadable root).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent data (bad JSONL line, version mismatch, truncated file).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Violated operation precondition (shape mismatch, empty corpus, zero counted positions).
struct InvalidArgument : std::runtime_error {
  explicit InvalidArgument(const std::string& msg) : std::runtime_error(msg) {}
};

// FNV-1a, 64-bit. Stable content ids for corpus samples.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string to_hex(std::uint64_t v);
std::uint64_t from_hex(std::string_view s);

// Strict UTF-8 validation (rejects overlongs, surrogates, > U+10FFFF).
bool is_valid_utf8(std::string_view bytes);

}  // namespace synadapt
