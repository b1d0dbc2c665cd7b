#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace lus {

using Digest = std::array<std::uint8_t, 32>;

/// SHA-256 of a byte string.
Digest sha256(std::string_view bytes);
/// SHA-256 of a file's contents; throws Error(Io) when unreadable.
Digest sha256_file(const std::filesystem::path& path);

std::string to_hex(const Digest& digest);

}  // namespace lus
