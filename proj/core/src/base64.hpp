#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace modpipe::detail {

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
// nullopt on characters outside the standard alphabet or bad padding.
std::optional<std::vector<std::uint8_t>> base64_decode(std::string_view text);

std::vector<std::uint8_t> floats_to_le_bytes(const std::vector<float>& values);
// nullopt unless the byte count is a multiple of four.
std::optional<std::vector<float>> floats_from_le_bytes(const std::vector<std::uint8_t>& bytes);

}  // namespace modpipe::detail
