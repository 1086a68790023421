// weights.hpp
//
// AGMW1 weights container:
//
//   "AGMW1\n"
//   one line of UTF-8 JSON: {"meta": {...}, "params": [{"name": ..., "shape": [...]}, ...]}
//   raw little-endian float64 values, parameters in header order
//
// The writer is deterministic: identical parameters and metadata produce
// identical bytes.

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "agm/nn/tensor.hpp"

namespace agm::nn
{

inline constexpr std::string_view kWeightsMagic = "AGMW1\n";

struct NamedTensor
{
    std::string name;
    Tensor value;
};

struct WeightsFile
{
    std::vector<NamedTensor> params;
    nlohmann::json meta = nlohmann::json::object();

    /// Throws Error when the name is absent.
    const Tensor& get(std::string_view name) const;
};

std::string encode_weights(const WeightsFile& file);
WeightsFile decode_weights(std::string_view bytes);

void save_weights(const WeightsFile& file, const std::filesystem::path& path);
WeightsFile load_weights(const std::filesystem::path& path);

}  // namespace agm::nn
