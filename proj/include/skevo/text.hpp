#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace skevo::text {

// 64-bit FNV-1a. Used for checksums, stable hashing of grams, and seeds.
std::uint64_t fnv1a64(std::string_view data);
std::string fnv1a64_hex(std::string_view data);

// Lowercased alphanumeric tokens; every other byte is a separator.
std::vector<std::string> words(std::string_view text);

// Set of 3-word shingles joined by single spaces. Texts with fewer than
// three tokens collapse to one shingle so short strings still compare.
std::set<std::string> word_trigrams(std::string_view text);

// |a ∩ b| / |a ∪ b|, with 0 when both sets are empty.
double jaccard(const std::set<std::string>& a, const std::set<std::string>& b);

std::string to_lower(std::string_view text);
std::string trim(std::string_view s);
std::string collapse_whitespace(std::string_view text);
bool contains(std::string_view haystack, std::string_view needle);

// Byte-limit truncation with a trailing ellipsis marker when cut.
std::string truncate_bytes(std::string_view s, std::size_t limit);

// Trim, collapse whitespace, strip list numbering/bullets, cut after the
// first sentence terminator.
std::string normalize_rule(std::string_view raw);

std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Fixed-point decimal formatting (replay-stable float encoding).
std::string format_fixed(double value, int places);

}  // namespace skevo::text
