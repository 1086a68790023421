// manifest.cpp

#include "agm/io/manifest.hpp"

#include <set>
#include <sstream>

#include "agm/error.hpp"
#include "agm/io/netpbm.hpp"

namespace agm::io
{

std::string_view to_string(Split s)
{
    return s == Split::Train ? "train" : "eval";
}

Split parse_split(std::string_view s)
{
    if (s == "train")
        return Split::Train;
    if (s == "eval")
        return Split::Eval;
    throw ManifestError("unknown split '" + std::string(s) + "'");
}

std::vector<ManifestEntry> parse_manifest(std::string_view text, const std::filesystem::path& base_dir,
                                          bool check_files)
{
    std::vector<ManifestEntry> entries;
    std::set<std::string> seen;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;

    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    };

    while (std::getline(in, line))
    {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        const std::string where = "manifest line " + std::to_string(lineno) + ": ";
        ManifestEntry e;
        try
        {
            const auto j = nlohmann::json::parse(line);
            e.id = j.at("id").get<std::string>();
            e.image_path = resolve(j.at("image").get<std::string>());
            e.caption = j.at("caption").get<std::string>();
            e.category = j.value("category", std::string{});
            if (j.contains("mask") && !j.at("mask").is_null())
                e.mask_path = resolve(j.at("mask").get<std::string>());
            e.split = parse_split(j.value("split", std::string("train")));
        }
        catch (const nlohmann::json::exception& ex)
        {
            throw ManifestError(where + ex.what());
        }
        catch (const ManifestError& ex)
        {
            throw ManifestError(where + ex.what());
        }
        if (e.id.empty())
            throw ManifestError(where + "empty id");
        if (e.caption.find_first_not_of(" \t\r\n") == std::string::npos)
            throw ManifestError(where + "empty caption for id '" + e.id + "'");
        if (!seen.insert(e.id).second)
            throw ManifestError(where + "duplicate id '" + e.id + "'");
        if (check_files)
        {
            if (!std::filesystem::exists(e.image_path))
                throw ManifestError(where + "missing image file " + e.image_path.string());
            if (e.mask_path && !std::filesystem::exists(*e.mask_path))
                throw ManifestError(where + "missing mask file " + e.mask_path->string());
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path)
{
    std::string text;
    try
    {
        text = read_file(path);
    }
    catch (const IoError& e)
    {
        throw ManifestError(e.what());
    }
    return parse_manifest(text, path.parent_path());
}

nlohmann::json manifest_line(const ManifestEntry& entry)
{
    nlohmann::json j;
    j["id"] = entry.id;
    j["image"] = entry.image_path.generic_string();
    j["caption"] = entry.caption;
    j["category"] = entry.category;
    j["mask"] = entry.mask_path ? nlohmann::json(entry.mask_path->generic_string()) : nlohmann::json(nullptr);
    j["split"] = to_string(entry.split);
    return j;
}

}  // namespace agm::io
