// manifest.hpp
//
// JSONL dataset manifest, one object per line with the fields
//   id, image, caption, category, mask (optional), split ("train" | "eval").
// Relative paths resolve against the manifest's directory.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace agm::io
{

enum class Split
{
    Train,
    Eval,
};

std::string_view to_string(Split s);
Split parse_split(std::string_view s);

struct ManifestEntry
{
    std::string id;
    std::filesystem::path image_path;
    std::string caption;
    std::string category;
    std::optional<std::filesystem::path> mask_path;
    Split split = Split::Train;
};

/// Parses manifest text. base_dir resolves relative paths. When check_files is
/// set, every referenced file must exist. Throws ManifestError naming the line
/// (1-based) or the duplicate id.
std::vector<ManifestEntry> parse_manifest(std::string_view text, const std::filesystem::path& base_dir,
                                          bool check_files = true);

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);

/// One manifest line; paths are written as given.
nlohmann::json manifest_line(const ManifestEntry& entry);

}  // namespace agm::io
