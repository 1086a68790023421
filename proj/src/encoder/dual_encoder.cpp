// dual_encoder.cpp

#include "agm/encoder/dual_encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "agm/error.hpp"
#include "agm/nn/ops.hpp"

namespace agm::encoder
{

Embedding normalize(const Embedding& e)
{
    return {nn::l2_normalize(e.values), true};
}

SimilarityScore similarity(const Embedding& image, const Embedding& text)
{
    if (image.dim() != text.dim())
        throw DimensionError("similarity: embedding dims " + std::to_string(image.dim()) + " and " +
                             std::to_string(text.dim()));
    for (const Embedding* e : {&image, &text})
    {
        if (!e->normalized)
            throw ValueError("similarity: embeddings must be normalized");
        double n2 = 0.0;
        for (double v : e->values.data())
            n2 += v * v;
        if (std::abs(std::sqrt(n2) - 1.0) > 1e-9)
            throw ValueError("similarity: embedding flagged normalized has norm " + std::to_string(std::sqrt(n2)));
    }
    return {nn::dot(image.values, text.values)[0]};
}

nn::Tensor image_to_tensor(const Image& image)
{
    const auto h = static_cast<std::size_t>(image.height());
    const auto w = static_cast<std::size_t>(image.width());
    nn::Tensor t({3, h, w});
    const auto bytes = image.bytes();
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                t.at(c, y, x) = bytes[(y * w + x) * 3 + c] / 127.5 - 1.0;
    return t;
}

namespace
{

void fill_normal(nn::Tensor& t, SplitMix64& rng, double stddev)
{
    for (double& v : t.data())
        v = stddev * rng.normal();
}

}  // namespace

// ---------------------------------------------------------------------------
// ImageEncoder
// ---------------------------------------------------------------------------

ImageEncoder::ImageEncoder(const ImageEncoderConfig& cfg)
    : conv1_weight({cfg.hidden_channels, cfg.in_channels, 3, 3}),
      conv1_bias({cfg.hidden_channels}),
      conv2_weight({cfg.feature_channels, cfg.hidden_channels, 3, 3}),
      conv2_bias({cfg.feature_channels}),
      proj_weight({cfg.embed_dim, cfg.feature_channels}),
      proj_bias({cfg.embed_dim}),
      cfg_(cfg)
{
    if (cfg.in_channels == 0 || cfg.hidden_channels == 0 || cfg.feature_channels == 0 || cfg.embed_dim == 0 ||
        cfg.conv1_stride == 0)
        throw ValueError("ImageEncoder: all dimensions and the stride must be positive");
}

ImageEncoder ImageEncoder::random(const ImageEncoderConfig& cfg, SplitMix64& rng)
{
    ImageEncoder enc(cfg);
    // He initialization for the ReLU convs, 1/sqrt(fan_in) for the projection.
    fill_normal(enc.conv1_weight, rng, std::sqrt(2.0 / static_cast<double>(cfg.in_channels * 9)));
    fill_normal(enc.conv2_weight, rng, std::sqrt(2.0 / static_cast<double>(cfg.hidden_channels * 9)));
    fill_normal(enc.proj_weight, rng, std::sqrt(1.0 / static_cast<double>(cfg.feature_channels)));
    for (double& b : enc.conv2_bias.data())
        b = 0.01;
    return enc;
}

void ImageEncoder::check_input(const nn::Tensor& pixels) const
{
    if (pixels.rank() != 3 || pixels.dim(0) != cfg_.in_channels)
        throw DimensionError("ImageEncoder: expected " + std::to_string(cfg_.in_channels) + " channels, got tensor " +
                             nn::shape_string(pixels.shape()));
    if (pixels.dim(1) < 5 || pixels.dim(2) < 5)
        throw DimensionError("ImageEncoder: image must be at least 5x5");
}

ImageEncoder::Output ImageEncoder::encode(const Image& image) const
{
    if (cfg_.in_channels != 3)
        throw DimensionError("ImageEncoder: RGB input given to a " + std::to_string(cfg_.in_channels) +
                             "-channel encoder");
    return encode(image_to_tensor(image));
}

ImageEncoder::Output ImageEncoder::encode(const nn::Tensor& pixels) const
{
    check_input(pixels);
    nn::Tensor h = nn::relu(nn::conv2d(pixels, conv1_weight, conv1_bias, conv1_geom()));
    nn::Tensor f = nn::relu(nn::conv2d(h, conv2_weight, conv2_bias, conv2_geom()));
    Output out;
    out.embedding = {embed_features(f), false};
    out.features = std::move(f);
    return out;
}

ImageEncoder::Recorded ImageEncoder::forward(nn::Tape& tape, const nn::Tensor& pixels) const
{
    check_input(pixels);
    Recorded r;
    const nn::Var x = tape.leaf(pixels, false);
    for (const auto& [name, t] : parameters())
        r.params.push_back(tape.leaf(*t));
    const nn::Var h = tape.relu(tape.conv2d(x, r.params[0], r.params[1], conv1_geom()));
    r.features = tape.relu(tape.conv2d(h, r.params[2], r.params[3], conv2_geom()));
    r.embedding = tape.linear(r.params[4], r.params[5], tape.global_avg_pool(r.features));
    return r;
}

nn::Tensor ImageEncoder::embed_features(const nn::Tensor& features) const
{
    return nn::linear(proj_weight, proj_bias, nn::global_avg_pool(features));
}

std::pair<std::size_t, std::size_t> ImageEncoder::feature_size(std::size_t height, std::size_t width) const
{
    // conv1: 3x3, padding 1, stride s; conv2 preserves size.
    const std::size_t s = cfg_.conv1_stride;
    return {(height + 2 - 3) / s + 1, (width + 2 - 3) / s + 1};
}

std::vector<std::pair<std::string, nn::Tensor*>> ImageEncoder::parameters()
{
    return {{"image.conv1.weight", &conv1_weight}, {"image.conv1.bias", &conv1_bias},
            {"image.conv2.weight", &conv2_weight}, {"image.conv2.bias", &conv2_bias},
            {"image.proj.weight", &proj_weight},   {"image.proj.bias", &proj_bias}};
}

std::vector<std::pair<std::string, const nn::Tensor*>> ImageEncoder::parameters() const
{
    return {{"image.conv1.weight", &conv1_weight}, {"image.conv1.bias", &conv1_bias},
            {"image.conv2.weight", &conv2_weight}, {"image.conv2.bias", &conv2_bias},
            {"image.proj.weight", &proj_weight},   {"image.proj.bias", &proj_bias}};
}

// ---------------------------------------------------------------------------
// Tokenizer / vocabulary
// ---------------------------------------------------------------------------

std::vector<std::string> tokenize(std::string_view caption)
{
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : caption)
    {
        if (std::isspace(static_cast<unsigned char>(c)))
        {
            if (!cur.empty())
                tokens.push_back(std::move(cur));
            cur.clear();
        }
        else
        {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    if (!cur.empty())
        tokens.push_back(std::move(cur));
    return tokens;
}

Vocabulary::Vocabulary()
    : tokens_{std::string(kUnkToken)}
{
    lookup_[tokens_[0]] = kUnk;
}

Vocabulary::Vocabulary(const std::vector<std::string>& captions)
    : Vocabulary()
{
    std::set<std::string> unique;
    for (const auto& c : captions)
        for (auto& t : tokenize(c))
            unique.insert(std::move(t));
    unique.erase(std::string(kUnkToken));
    for (const auto& t : unique)
    {
        lookup_[t] = tokens_.size();
        tokens_.push_back(t);
    }
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens)
{
    if (tokens.empty() || tokens[0] != kUnkToken)
        throw FormatError("vocabulary: first token must be <unk>");
    Vocabulary v;
    v.tokens_ = std::move(tokens);
    v.lookup_.clear();
    for (std::size_t i = 0; i < v.tokens_.size(); ++i)
        if (!v.lookup_.emplace(v.tokens_[i], i).second)
            throw FormatError("vocabulary: duplicate token '" + v.tokens_[i] + "'");
    return v;
}

std::size_t Vocabulary::index(const std::string& token) const
{
    const auto it = lookup_.find(token);
    return it == lookup_.end() ? kUnk : it->second;
}

// ---------------------------------------------------------------------------
// TextEncoder
// ---------------------------------------------------------------------------

TextEncoder::TextEncoder(Vocabulary vocab, const TextEncoderConfig& cfg)
    : token_table({vocab.size(), cfg.token_dim}),
      proj_weight({cfg.embed_dim, cfg.token_dim}),
      proj_bias({cfg.embed_dim}),
      vocab_(std::move(vocab)),
      cfg_(cfg)
{
    if (cfg.token_dim == 0 || cfg.embed_dim == 0)
        throw ValueError("TextEncoder: dimensions must be positive");
}

TextEncoder TextEncoder::random(Vocabulary vocab, const TextEncoderConfig& cfg, SplitMix64& rng)
{
    TextEncoder enc(std::move(vocab), cfg);
    fill_normal(enc.token_table, rng, 1.0);
    fill_normal(enc.proj_weight, rng, std::sqrt(1.0 / static_cast<double>(cfg.token_dim)));
    return enc;
}

std::vector<std::size_t> TextEncoder::token_ids(std::string_view caption) const
{
    const auto tokens = tokenize(caption);
    if (tokens.empty())
        throw ValueError("TextEncoder: empty caption");
    std::vector<std::size_t> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens)
        ids.push_back(vocab_.index(t));
    return ids;
}

Embedding TextEncoder::encode(std::string_view caption) const
{
    const auto ids = token_ids(caption);
    return {nn::linear(proj_weight, proj_bias, nn::embedding_mean(token_table, ids)), false};
}

TextEncoder::Recorded TextEncoder::forward(nn::Tape& tape, std::string_view caption) const
{
    Recorded r;
    auto ids = token_ids(caption);
    for (const auto& [name, t] : parameters())
        r.params.push_back(tape.leaf(*t));
    const nn::Var pooled = tape.embedding_mean(r.params[0], std::move(ids));
    r.embedding = tape.linear(r.params[1], r.params[2], pooled);
    return r;
}

std::vector<std::pair<std::string, nn::Tensor*>> TextEncoder::parameters()
{
    return {{"text.token_embedding", &token_table}, {"text.proj.weight", &proj_weight}, {"text.proj.bias", &proj_bias}};
}

std::vector<std::pair<std::string, const nn::Tensor*>> TextEncoder::parameters() const
{
    return {{"text.token_embedding", &token_table}, {"text.proj.weight", &proj_weight}, {"text.proj.bias", &proj_bias}};
}

// ---------------------------------------------------------------------------
// DualEncoder
// ---------------------------------------------------------------------------

DualEncoder::DualEncoder(ImageEncoder image, TextEncoder text, double temperature, std::uint64_t seed)
    : image_(std::move(image)), text_(std::move(text)), temperature_(temperature), seed_(seed)
{
    if (image_.config().embed_dim != text_.config().embed_dim)
        throw DimensionError("DualEncoder: image and text embedding dims differ");
    if (!(temperature > 0.0))
        throw ValueError("DualEncoder: temperature must be positive");
}

DualEncoder DualEncoder::random(const ImageEncoderConfig& image_cfg, const TextEncoderConfig& text_cfg,
                                Vocabulary vocab, std::uint64_t seed, double temperature)
{
    SplitMix64 rng(seed);
    ImageEncoder image = ImageEncoder::random(image_cfg, rng);
    TextEncoder text = TextEncoder::random(std::move(vocab), text_cfg, rng);
    return DualEncoder(std::move(image), std::move(text), temperature, seed);
}

SimilarityScore DualEncoder::score(const Image& image, std::string_view caption) const
{
    const Embedding ev = normalize(image_.encode(image).embedding);
    const Embedding et = normalize(text_.encode(caption));
    return similarity(ev, et);
}

FeatureGradients DualEncoder::feature_gradients(const Image& image, std::string_view caption) const
{
    const Embedding et = normalize(text_.encode(caption));
    if (image_.config().in_channels != 3)
        throw DimensionError("feature_gradients: RGB input given to a non-RGB encoder");

    nn::Tape tape;
    const ImageEncoder::Recorded rec = image_.forward(tape, image_to_tensor(image));
    const nn::Var text = tape.leaf(et.values, false);
    const nn::Var s = tape.dot(tape.normalize(rec.embedding), text);
    tape.backward(s, nn::Tensor::scalar(1.0));
    return {tape.value(rec.features), tape.grad(rec.features), tape.value(s)[0]};
}

nn::WeightsFile DualEncoder::to_weights() const
{
    nn::WeightsFile f;
    for (const auto& [name, t] : image_.parameters())
        f.params.push_back({name, *t});
    for (const auto& [name, t] : text_.parameters())
        f.params.push_back({name, *t});
    const auto& ic = image_.config();
    f.meta = {
        {"format", "agm-dual-encoder"},
        {"image",
         {{"in_channels", ic.in_channels},
          {"hidden_channels", ic.hidden_channels},
          {"feature_channels", ic.feature_channels},
          {"embed_dim", ic.embed_dim},
          {"conv1_stride", ic.conv1_stride}}},
        {"text", {{"token_dim", text_.config().token_dim}, {"embed_dim", text_.config().embed_dim}}},
        {"vocab", text_.vocabulary().tokens()},
        {"temperature", temperature_},
        {"seed", seed_},
    };
    return f;
}

DualEncoder DualEncoder::from_weights(const nn::WeightsFile& file)
{
    try
    {
        const auto& m = file.meta;
        if (m.value("format", "") != "agm-dual-encoder")
            throw FormatError("checkpoint: not a dual-encoder weights file");
        ImageEncoderConfig ic;
        ic.in_channels = m.at("image").at("in_channels").get<std::size_t>();
        ic.hidden_channels = m.at("image").at("hidden_channels").get<std::size_t>();
        ic.feature_channels = m.at("image").at("feature_channels").get<std::size_t>();
        ic.embed_dim = m.at("image").at("embed_dim").get<std::size_t>();
        ic.conv1_stride = m.at("image").at("conv1_stride").get<std::size_t>();
        TextEncoderConfig tc;
        tc.token_dim = m.at("text").at("token_dim").get<std::size_t>();
        tc.embed_dim = m.at("text").at("embed_dim").get<std::size_t>();

        ImageEncoder image(ic);
        TextEncoder text(Vocabulary::from_tokens(m.at("vocab").get<std::vector<std::string>>()), tc);
        auto assign = [&](const auto& params) {
            for (const auto& [name, t] : params)
            {
                const nn::Tensor& stored = file.get(name);
                if (stored.shape() != t->shape())
                    throw FormatError("checkpoint: '" + name + "' has shape " + nn::shape_string(stored.shape()) +
                                      ", expected " + nn::shape_string(t->shape()));
                *t = stored;
            }
        };
        assign(image.parameters());
        assign(text.parameters());
        return DualEncoder(std::move(image), std::move(text), m.at("temperature").get<double>(),
                           m.at("seed").get<std::uint64_t>());
    }
    catch (const nlohmann::json::exception& e)
    {
        throw FormatError(std::string("checkpoint: bad metadata: ") + e.what());
    }
}

void DualEncoder::save(const std::filesystem::path& path) const
{
    nn::save_weights(to_weights(), path);
}

DualEncoder DualEncoder::load(const std::filesystem::path& path)
{
    return from_weights(nn::load_weights(path));
}

}  // namespace agm::encoder
