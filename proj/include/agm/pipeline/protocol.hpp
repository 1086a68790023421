// protocol.hpp
//
// Adapter wire format: one JSON object per line over the adapter's
// stdin/stdout.
//
//   request   {"v":1, "op":..., "id":..., <tensor fields>, "caption"?, "prompts"?}
//   response  {"v":1, "id":<echo>, "ok":true, <tensor fields>}
//             {"v":1, "id":<echo>, "ok":false, "error":"..."}
//   tensor    {"shape":[...], "dtype":"f32"|"u8", "data":<base64, little-endian>}
//
// ops: encode_image, encode_text, feature_gradients, segment.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "agm/image.hpp"
#include "agm/nn/tensor.hpp"
#include "json.hpp"

namespace agm::protocol
{

inline constexpr int kVersion = 1;

/// RFC 4648 with padding. Decoding rejects anything else with Base64Error.
std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

enum class Dtype
{
    F32,
    U8,
};

std::string_view to_string(Dtype d);
std::size_t element_size(Dtype d);

struct WireTensor
{
    nn::Shape shape;
    Dtype dtype = Dtype::F32;
    std::vector<std::uint8_t> bytes;  ///< little-endian payload

    friend bool operator==(const WireTensor&, const WireTensor&) = default;
};

WireTensor from_tensor(const nn::Tensor& t);  ///< narrows to f32
nn::Tensor to_tensor(const WireTensor& w);     ///< f32 or u8, widened to double
WireTensor from_image(const Image& image);    ///< u8, shape [H, W, 3]
Image to_image(const WireTensor& w);
WireTensor from_mask(const Mask& mask);       ///< u8 0/1, shape [H, W]
Mask to_mask(const WireTensor& w);            ///< nonzero = object

nlohmann::json tensor_to_json(const WireTensor& t);
/// Throws Base64Error, PayloadLengthError or ProtocolError.
WireTensor tensor_from_json(const nlohmann::json& j);

enum class Op
{
    EncodeImage,
    EncodeText,
    FeatureGradients,
    Segment,
};

std::string_view to_string(Op op);
/// Throws UnknownOpError.
Op parse_op(std::string_view s);

struct Request
{
    Op op = Op::Segment;
    std::string id;
    std::map<std::string, WireTensor> tensors;
    std::optional<std::string> caption;
    std::optional<nlohmann::json> prompts;

    friend bool operator==(const Request&, const Request&) = default;
};

struct Response
{
    std::string id;
    bool ok = true;
    std::string error;
    std::map<std::string, WireTensor> tensors;

    friend bool operator==(const Response&, const Response&) = default;
};

/// Single line, no trailing newline.
std::string encode_request(const Request& r);
std::string encode_response(const Response& r);

/// Throw VersionError, UnknownOpError, Base64Error, PayloadLengthError or
/// ProtocolError (malformed JSON, missing or mistyped fields).
Request decode_request(std::string_view line);
Response decode_response(std::string_view line);

}  // namespace agm::protocol
