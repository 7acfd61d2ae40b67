#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace jrl {

// 64-bit FNV-1a; used to fingerprint checkpoints and dataset files.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t value);
std::string file_hash(const std::filesystem::path& path);

}  // namespace jrl
