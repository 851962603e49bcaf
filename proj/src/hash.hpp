#pragma once

#include <filesystem>
#include <string>

namespace embcurate::detail {

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace embcurate::detail
