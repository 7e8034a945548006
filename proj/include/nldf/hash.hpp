#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

namespace nldf::io {

/// Hex SHA-1 of "blob <size>\0<content>", matching `git hash-object`.
std::string git_blob_sha1(std::span<const std::uint8_t> content);
std::string git_blob_sha1(const std::string& content);
std::string git_blob_sha1_file(const std::filesystem::path& path);

}  // namespace nldf::io
