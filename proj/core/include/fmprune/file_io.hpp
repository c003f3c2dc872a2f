#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace fmprune {

// All three throw IoError when the file cannot be opened or fully transferred.
[[nodiscard]] std::vector<std::uint8_t> read_file_bytes(
    const std::filesystem::path& path);
[[nodiscard]] std::string read_text_file(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path,
                      std::span<const std::uint8_t> bytes);

}  // namespace fmprune
