#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace geoskill::text {

/// Decodes UTF-8; malformed sequences become U+FFFD.
std::u32string decode_utf8(std::string_view s);
std::string encode_utf8(std::u32string_view s);

/// Simple case folding for Latin, Greek and Cyrillic blocks.
char32_t fold_case(char32_t c);

/// Alphanumeric in the Unicode sense, approximated by block: ASCII
/// letters/digits plus every non-punctuation, non-space code point >= U+00C0.
bool is_word_char(char32_t c);

std::string to_lower(std::string_view s);

/// Trims and collapses runs of whitespace to a single ASCII space.
std::string collapse_whitespace(std::string_view s);

/// Lowercase + collapsed whitespace. The canonical form used for content ids.
std::string normalize(std::string_view s);

/// Lowercase word segmentation on Unicode-alphanumeric runs. No stemming.
std::vector<std::string> tokenize(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool is_iso2(std::string_view code);

}  // namespace geoskill::text
