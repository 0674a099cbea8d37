#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace charparse::utf8 {

/// Decodes UTF-8 into code points. Malformed sequences decode to U+FFFD,
/// one replacement per offending byte.
std::vector<char32_t> decode(std::string_view text);

std::string encode(char32_t cp);
std::string encode(const std::vector<char32_t>& cps);

/// Splits text into the byte strings of its code points.
std::vector<std::string> chars(std::string_view text);

std::size_t length(std::string_view text);

}  // namespace charparse::utf8
