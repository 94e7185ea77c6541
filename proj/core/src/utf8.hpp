#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace modpipe::detail {

// Byte ranges of code points; an invalid byte forms its own unit.
std::vector<std::string_view> code_points(std::string_view text);

bool is_unicode_space(char32_t cp) noexcept;

// Splits on Unicode whitespace; empty tokens are dropped.
std::vector<std::string_view> split_whitespace(std::string_view text);

std::string ascii_lower(std::string_view text);

}  // namespace modpipe::detail
