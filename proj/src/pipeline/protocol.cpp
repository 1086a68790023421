// protocol.cpp

#include "agm/pipeline/protocol.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <set>

#include "agm/error.hpp"

namespace agm::protocol
{

namespace
{

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

constexpr std::array<int, 256> decode_table()
{
    std::array<int, 256> t{};
    for (int& v : t)
        v = -1;
    for (int i = 0; i < 64; ++i)
        t[static_cast<unsigned char>(kAlphabet[i])] = i;
    return t;
}

constexpr auto kDecode = decode_table();

static_assert(std::endian::native == std::endian::little, "wire tensors are little-endian; big-endian hosts unsupported");

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes)
{
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= bytes.size(); i += 3)
    {
        const std::uint32_t n = (std::uint32_t{bytes[i]} << 16) | (std::uint32_t{bytes[i + 1]} << 8) | bytes[i + 2];
        out += kAlphabet[(n >> 18) & 63];
        out += kAlphabet[(n >> 12) & 63];
        out += kAlphabet[(n >> 6) & 63];
        out += kAlphabet[n & 63];
    }
    const std::size_t rest = bytes.size() - i;
    if (rest == 1)
    {
        const std::uint32_t n = std::uint32_t{bytes[i]} << 16;
        out += kAlphabet[(n >> 18) & 63];
        out += kAlphabet[(n >> 12) & 63];
        out += "==";
    }
    else if (rest == 2)
    {
        const std::uint32_t n = (std::uint32_t{bytes[i]} << 16) | (std::uint32_t{bytes[i + 1]} << 8);
        out += kAlphabet[(n >> 18) & 63];
        out += kAlphabet[(n >> 12) & 63];
        out += kAlphabet[(n >> 6) & 63];
        out += '=';
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text)
{
    if (text.size() % 4 != 0)
        throw Base64Error("base64: length " + std::to_string(text.size()) + " is not a multiple of 4");
    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4)
    {
        const bool last = i + 4 == text.size();
        int pad = 0;
        std::uint32_t n = 0;
        for (std::size_t j = 0; j < 4; ++j)
        {
            const char c = text[i + j];
            if (c == '=')
            {
                if (!last || j < 2)
                    throw Base64Error("base64: misplaced padding");
                ++pad;
                n <<= 6;
                continue;
            }
            if (pad > 0)
                throw Base64Error("base64: data after padding");
            const int v = kDecode[static_cast<unsigned char>(c)];
            if (v < 0)
                throw Base64Error("base64: invalid character");
            n = (n << 6) | static_cast<std::uint32_t>(v);
        }
        // Non-canonical encodings carry stray bits in the padding slots.
        if ((pad == 1 && (n & 0xFF)) || (pad == 2 && (n & 0xFFFF)))
            throw Base64Error("base64: non-zero padding bits");
        out.push_back(static_cast<std::uint8_t>(n >> 16));
        if (pad < 2)
            out.push_back(static_cast<std::uint8_t>(n >> 8));
        if (pad < 1)
            out.push_back(static_cast<std::uint8_t>(n));
    }
    return out;
}

std::string_view to_string(Dtype d)
{
    return d == Dtype::F32 ? "f32" : "u8";
}

std::size_t element_size(Dtype d)
{
    return d == Dtype::F32 ? 4 : 1;
}

WireTensor from_tensor(const nn::Tensor& t)
{
    WireTensor w{t.shape(), Dtype::F32, std::vector<std::uint8_t>(t.size() * 4)};
    for (std::size_t i = 0; i < t.size(); ++i)
    {
        const float f = static_cast<float>(t[i]);
        std::memcpy(w.bytes.data() + i * 4, &f, 4);
    }
    return w;
}

nn::Tensor to_tensor(const WireTensor& w)
{
    const std::size_t n = nn::shape_size(w.shape);
    if (w.bytes.size() != n * element_size(w.dtype))
        throw PayloadLengthError("tensor payload has " + std::to_string(w.bytes.size()) + " bytes for shape " +
                                 nn::shape_string(w.shape));
    nn::Tensor t(w.shape);
    for (std::size_t i = 0; i < n; ++i)
    {
        if (w.dtype == Dtype::U8)
        {
            t[i] = w.bytes[i];
            continue;
        }
        float f;
        std::memcpy(&f, w.bytes.data() + i * 4, 4);
        if (!std::isfinite(f))
            throw ProtocolError("tensor contains a non-finite value");
        t[i] = f;
    }
    return t;
}

WireTensor from_image(const Image& image)
{
    const auto b = image.bytes();
    return {{static_cast<std::size_t>(image.height()), static_cast<std::size_t>(image.width()), 3}, Dtype::U8,
            std::vector<std::uint8_t>(b.begin(), b.end())};
}

Image to_image(const WireTensor& w)
{
    if (w.dtype != Dtype::U8 || w.shape.size() != 3 || w.shape[2] != 3)
        throw ProtocolError("image tensor must be u8 [H, W, 3]");
    if (w.bytes.size() != nn::shape_size(w.shape))
        throw PayloadLengthError("image payload length does not match its shape");
    return Image(static_cast<int>(w.shape[1]), static_cast<int>(w.shape[0]), w.bytes);
}

WireTensor from_mask(const Mask& mask)
{
    WireTensor w{{static_cast<std::size_t>(mask.height()), static_cast<std::size_t>(mask.width())}, Dtype::U8, {}};
    w.bytes.reserve(static_cast<std::size_t>(mask.width()) * static_cast<std::size_t>(mask.height()));
    for (int y = 0; y < mask.height(); ++y)
        for (int x = 0; x < mask.width(); ++x)
            w.bytes.push_back(mask.get(x, y) ? 1 : 0);
    return w;
}

Mask to_mask(const WireTensor& w)
{
    if (w.dtype != Dtype::U8 || w.shape.size() != 2)
        throw ProtocolError("mask tensor must be u8 [H, W]");
    if (w.bytes.size() != nn::shape_size(w.shape))
        throw PayloadLengthError("mask payload length does not match its shape");
    Mask m(static_cast<int>(w.shape[1]), static_cast<int>(w.shape[0]));
    std::size_t i = 0;
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
            if (w.bytes[i++])
                m.set(x, y);
    return m;
}

nlohmann::json tensor_to_json(const WireTensor& t)
{
    return {{"shape", t.shape}, {"dtype", to_string(t.dtype)}, {"data", base64_encode(t.bytes)}};
}

WireTensor tensor_from_json(const nlohmann::json& j)
{
    if (!j.is_object())
        throw ProtocolError("tensor field must be an object");
    for (const char* key : {"shape", "dtype", "data"})
        if (!j.contains(key))
            throw ProtocolError(std::string("tensor missing '") + key + "'");
    WireTensor t;
    const auto& shape = j["shape"];
    if (!shape.is_array())
        throw ProtocolError("tensor shape must be an array");
    for (const auto& d : shape)
    {
        if (!d.is_number_unsigned())
            throw ProtocolError("tensor shape entries must be non-negative integers");
        t.shape.push_back(d.get<std::size_t>());
    }
    if (!j["dtype"].is_string())
        throw ProtocolError("tensor dtype must be a string");
    const std::string dtype = j["dtype"].get<std::string>();
    if (dtype == "f32")
        t.dtype = Dtype::F32;
    else if (dtype == "u8")
        t.dtype = Dtype::U8;
    else
        throw ProtocolError("unsupported dtype '" + dtype + "'");
    if (!j["data"].is_string())
        throw ProtocolError("tensor data must be a base64 string");
    t.bytes = base64_decode(j["data"].get<std::string>());
    const std::size_t want = nn::shape_size(t.shape) * element_size(t.dtype);
    if (t.bytes.size() != want)
        throw PayloadLengthError("tensor payload is " + std::to_string(t.bytes.size()) + " bytes, shape " +
                                 nn::shape_string(t.shape) + " x " + std::string(to_string(t.dtype)) + " needs " +
                                 std::to_string(want));
    return t;
}

std::string_view to_string(Op op)
{
    switch (op)
    {
    case Op::EncodeImage:
        return "encode_image";
    case Op::EncodeText:
        return "encode_text";
    case Op::FeatureGradients:
        return "feature_gradients";
    case Op::Segment:
        return "segment";
    }
    return "?";
}

Op parse_op(std::string_view s)
{
    for (Op op : {Op::EncodeImage, Op::EncodeText, Op::FeatureGradients, Op::Segment})
        if (to_string(op) == s)
            return op;
    throw UnknownOpError("unknown op '" + std::string(s) + "'");
}

namespace
{

nlohmann::json parse_line(std::string_view line)
{
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
        throw ProtocolError("malformed JSON line");
    if (!j.is_object())
        throw ProtocolError("message must be a JSON object");
    if (!j.contains("v") || !j["v"].is_number_integer())
        throw ProtocolError("missing integer field 'v'");
    if (j["v"].get<long long>() != kVersion)
        throw VersionError("unsupported protocol version " + j["v"].dump() + " (expected 1)");
    if (!j.contains("id") || !j["id"].is_string())
        throw ProtocolError("missing string field 'id'");
    return j;
}

std::map<std::string, WireTensor> tensors_of(const nlohmann::json& j, const std::set<std::string>& reserved)
{
    std::map<std::string, WireTensor> out;
    for (const auto& [key, value] : j.items())
        if (!reserved.count(key))
            out.emplace(key, tensor_from_json(value));
    return out;
}

}  // namespace

std::string encode_request(const Request& r)
{
    nlohmann::json j;
    j["v"] = kVersion;
    j["op"] = to_string(r.op);
    j["id"] = r.id;
    for (const auto& [name, t] : r.tensors)
        j[name] = tensor_to_json(t);
    if (r.caption)
        j["caption"] = *r.caption;
    if (r.prompts)
        j["prompts"] = *r.prompts;
    return j.dump();
}

std::string encode_response(const Response& r)
{
    nlohmann::json j;
    j["v"] = kVersion;
    j["id"] = r.id;
    j["ok"] = r.ok;
    if (!r.ok)
        j["error"] = r.error;
    for (const auto& [name, t] : r.tensors)
        j[name] = tensor_to_json(t);
    return j.dump();
}

Request decode_request(std::string_view line)
{
    const nlohmann::json j = parse_line(line);
    if (!j.contains("op") || !j["op"].is_string())
        throw ProtocolError("missing string field 'op'");
    Request r;
    r.op = parse_op(j["op"].get<std::string>());
    r.id = j["id"].get<std::string>();
    if (j.contains("caption"))
    {
        if (!j["caption"].is_string())
            throw ProtocolError("caption must be a string");
        r.caption = j["caption"].get<std::string>();
    }
    if (j.contains("prompts"))
    {
        if (!j["prompts"].is_object())
            throw ProtocolError("prompts must be an object");
        r.prompts = j["prompts"];
    }
    r.tensors = tensors_of(j, {"v", "op", "id", "caption", "prompts"});
    return r;
}

Response decode_response(std::string_view line)
{
    const nlohmann::json j = parse_line(line);
    if (!j.contains("ok") || !j["ok"].is_boolean())
        throw ProtocolError("missing boolean field 'ok'");
    Response r;
    r.id = j["id"].get<std::string>();
    r.ok = j["ok"].get<bool>();
    if (!r.ok)
    {
        if (!j.contains("error") || !j["error"].is_string())
            throw ProtocolError("failed response without an error string");
        r.error = j["error"].get<std::string>();
    }
    r.tensors = tensors_of(j, {"v", "id", "ok", "error"});
    return r;
}

}  // namespace agm::protocol
