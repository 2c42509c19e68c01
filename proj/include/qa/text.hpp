#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace qa {

std::string_view trim(std::string_view text) noexcept;

std::string lower_ascii(std::string_view text);

/// Lowercase plus whitespace collapse, trimmed. This is the dedup key
/// normalization for stored pairs; no stemming or punctuation stripping.
std::string normalize_text(std::string_view text);

/// Lowercased maximal runs of ASCII alphanumerics (bytes >= 0x80 are kept
/// inside tokens so UTF-8 words survive intact).
std::vector<std::string> tokenize(std::string_view text);

/// 64-bit FNV-1a over `bytes`, seeded, finished with a splitmix64 avalanche.
/// Output is fixed across platforms and processes.
std::uint64_t stable_hash(std::string_view bytes, std::uint64_t seed) noexcept;

std::uint64_t mix64(std::uint64_t x) noexcept;

std::vector<std::string> split(std::string_view text, char delimiter);

}  // namespace qa
