#pragma once

#include "pcmae/geometry.hpp"

#include <filesystem>
#include <stdexcept>
#include <string_view>

namespace pcmae::data {

/// Malformed or truncated cloud file. The message names the line (text) or
/// byte offset (binary).
struct CloudParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class CloudFormat { text, binary };

/// ".pcxy" and ".bin" are binary, everything else text.
CloudFormat format_for_path(const std::filesystem::path& path);

/// Binary if the file starts with "PCXY", otherwise text.
geometry::PointCloud read_cloud(const std::filesystem::path& path);
void write_cloud(const geometry::PointCloud& cloud, const std::filesystem::path& path, CloudFormat format);
void write_cloud(const geometry::PointCloud& cloud, const std::filesystem::path& path);

/// Text body: one "x y z" triple per line; blank lines and '#' comments skipped.
geometry::PointCloud parse_text_cloud(std::string_view text);
/// Binary body: "PCXY", u32 count, count little-endian f32 triples.
geometry::PointCloud parse_binary_cloud(std::string_view bytes);

}  // namespace pcmae::data
