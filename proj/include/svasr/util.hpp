#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace svasr {

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);
std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path);

/// 64-bit FNV-1a, rendered as 16 hex digits.
std::string content_digest(std::span<const std::uint8_t> bytes);
std::string content_digest(std::string_view text);

std::vector<std::string> split_whitespace(std::string_view line);

}  // namespace svasr
