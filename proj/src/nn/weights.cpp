// weights.cpp

#include "agm/nn/weights.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "agm/error.hpp"

namespace agm::nn
{

const Tensor& WeightsFile::get(std::string_view name) const
{
    for (const auto& p : params)
        if (p.name == name)
            return p.value;
    throw Error("weights: no parameter named '" + std::string(name) + "'");
}

std::string encode_weights(const WeightsFile& file)
{
    nlohmann::json header;
    header["meta"] = file.meta;
    header["params"] = nlohmann::json::array();
    for (const auto& p : file.params)
        header["params"].push_back({{"name", p.name}, {"shape", p.value.shape()}});

    std::string out(kWeightsMagic);
    out += header.dump();
    out += '\n';
    for (const auto& p : file.params)
    {
        for (double v : p.value.data())
        {
            const auto bits = std::bit_cast<std::uint64_t>(v);
            for (int b = 0; b < 8; ++b)
                out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
        }
    }
    return out;
}

WeightsFile decode_weights(std::string_view bytes)
{
    if (bytes.substr(0, kWeightsMagic.size()) != kWeightsMagic)
        throw UnsupportedFormatError("weights: missing AGMW1 magic");
    bytes.remove_prefix(kWeightsMagic.size());
    const auto eol = bytes.find('\n');
    if (eol == std::string_view::npos)
        throw TruncatedError("weights: header line not terminated");

    nlohmann::json header;
    try
    {
        header = nlohmann::json::parse(bytes.substr(0, eol));
    }
    catch (const nlohmann::json::exception& e)
    {
        throw FormatError(std::string("weights: bad header: ") + e.what());
    }
    bytes.remove_prefix(eol + 1);

    WeightsFile file;
    file.meta = header.value("meta", nlohmann::json::object());
    std::size_t offset = 0;
    try
    {
        for (const auto& entry : header.at("params"))
        {
            NamedTensor p;
            p.name = entry.at("name").get<std::string>();
            const Shape shape = entry.at("shape").get<Shape>();
            const std::size_t n = shape_size(shape);
            if (bytes.size() < offset + 8 * n)
                throw TruncatedError("weights: payload ends inside '" + p.name + "'");
            std::vector<double> data(n);
            for (std::size_t i = 0; i < n; ++i)
            {
                std::uint64_t bits = 0;
                for (int b = 0; b < 8; ++b)
                    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[offset + 8 * i + b])) << (8 * b);
                data[i] = std::bit_cast<double>(bits);
            }
            offset += 8 * n;
            p.value = Tensor(shape, std::move(data));
            file.params.push_back(std::move(p));
        }
    }
    catch (const nlohmann::json::exception& e)
    {
        throw FormatError(std::string("weights: bad header: ") + e.what());
    }
    if (offset != bytes.size())
        throw FormatError("weights: " + std::to_string(bytes.size() - offset) + " trailing bytes");
    return file;
}

void save_weights(const WeightsFile& file, const std::filesystem::path& path)
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw IoError("cannot write " + path.string());
    const std::string bytes = encode_weights(file);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os)
        throw IoError("write failed: " + path.string());
}

WeightsFile load_weights(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return decode_weights(ss.str());
}

}  // namespace agm::nn
