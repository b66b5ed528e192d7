#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace inferqa {

/// 64-bit FNV-1a. Used wherever a platform-stable content hash is needed
/// (passage ids, replay keys, stage cache keys, hash embeddings).
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// Fixed-width lowercase hex, 16 characters.
std::string to_hex16(std::uint64_t value);

std::string trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);

/// Answer normalization shared by exact match, the lexical judge and the
/// verification highlight: lowercase, delete ASCII punctuation, drop the
/// articles a/an/the, collapse whitespace.
std::string normalize_answer(std::string_view s);

/// Lowercase and replace every ASCII punctuation character with a space,
/// then collapse runs of whitespace. Bytes >= 0x80 are kept as-is.
std::string normalize_for_match(std::string_view s);

/// Split text already passed through normalize_for_match on spaces.
std::vector<std::string> split_words(std::string_view normalized);

/// Analyzer used by the lexical index for both passages and queries:
/// ASCII letters/digits and any non-ASCII byte are word characters,
/// everything else separates; ASCII is lowercased.
std::vector<std::string> analyze(std::string_view text);

}  // namespace inferqa
