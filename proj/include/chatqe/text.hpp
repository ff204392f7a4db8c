// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace chatqe::text {

/// Splits UTF-8 text into code points, each returned as its byte sequence.
/// Invalid bytes are passed through one at a time.
std::vector<std::string> code_points(std::string_view s);

/// Decodes the code point starting at s[pos]; advances pos.
char32_t next_code_point(std::string_view s, std::size_t& pos);

/// Han, kana, and CJK/fullwidth punctuation blocks.
bool is_cjk(char32_t cp);

/// ASCII punctuation plus the CJK punctuation ranges.
bool is_punctuation(char32_t cp);

bool is_space(char32_t cp);

/// Whitespace-separated words; runs of whitespace collapse.
std::vector<std::string> split_whitespace(std::string_view s);

/// Lower-cases ASCII letters only.
std::string ascii_lower(std::string_view s);

}  // namespace chatqe::text
