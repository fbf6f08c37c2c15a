#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace malsum::text {

std::string_view trim(std::string_view s);

/// Replaces every run of ASCII whitespace with one space and trims the ends.
std::string collapse_whitespace(std::string_view s);

std::string to_lower_ascii(std::string_view s);

/// Sentence segmentation shared by summary post-processing and readability.
///
/// A sentence ends at '.', '!' or '?' when the next character is whitespace
/// or the end of the text. Abbreviations are not special-cased. Returned
/// sentences are trimmed and never empty; trailing text without terminal
/// punctuation forms a final sentence.
std::vector<std::string_view> split_sentences(std::string_view s);

/// Number of maximal non-whitespace runs.
std::size_t whitespace_token_count(std::string_view s);

}  // namespace malsum::text
