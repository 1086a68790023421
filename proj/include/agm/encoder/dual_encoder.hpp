// dual_encoder.hpp
//
// Toy vision-language dual encoder.
//
//   image:  conv3x3(Cin->hidden, stride s) -> ReLU -> conv3x3(hidden->K) -> ReLU   [target layer f_k]
//           -> global average pool -> linear(K->D)                                  [V]
//   text:   lowercase + whitespace tokens -> mean of token rows -> linear(Dt->D)    [T]
//   score:  S = (V/|V|) . (T/|T|)
//
// The post-ReLU output of the second convolution is the layer Grad-CAM reads.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "agm/image.hpp"
#include "agm/nn/tape.hpp"
#include "agm/nn/tensor.hpp"
#include "agm/nn/weights.hpp"
#include "agm/rng.hpp"

namespace agm::encoder
{

struct Embedding
{
    nn::Tensor values;
    bool normalized = false;

    std::size_t dim() const { return values.size(); }
};

struct SimilarityScore
{
    double value = 0.0;
};

/// Unit-norm copy. Throws DegenerateEmbeddingError when |e| <= 1e-12.
Embedding normalize(const Embedding& e);

/// Dot product of two normalized embeddings. Throws DimensionError on a
/// length mismatch and ValueError when either input is not normalized.
SimilarityScore similarity(const Embedding& image, const Embedding& text);

/// RGB bytes -> 3xHxW tensor scaled to [-1, 1]; mid-gray maps to ~0.
nn::Tensor image_to_tensor(const Image& image);

// ---------------------------------------------------------------------------
// Image encoder
// ---------------------------------------------------------------------------

struct ImageEncoderConfig
{
    std::size_t in_channels = 3;
    std::size_t hidden_channels = 8;
    std::size_t feature_channels = 8;  ///< K
    std::size_t embed_dim = 16;        ///< D
    std::size_t conv1_stride = 2;
};

class ImageEncoder
{
public:
    struct Output
    {
        Embedding embedding;  ///< unnormalized V
        nn::Tensor features;  ///< K x Hf x Wf
    };

    /// Handles into a tape after forward().
    struct Recorded
    {
        nn::Var features;
        nn::Var embedding;
        std::vector<nn::Var> params;  ///< same order as parameters()
    };

    ImageEncoder() = default;
    explicit ImageEncoder(const ImageEncoderConfig& cfg);  ///< all-zero parameters

    static ImageEncoder random(const ImageEncoderConfig& cfg, SplitMix64& rng);

    const ImageEncoderConfig& config() const { return cfg_; }

    /// Throws DimensionError for a channel-count mismatch or images smaller than 5x5.
    Output encode(const Image& image) const;
    Output encode(const nn::Tensor& pixels) const;

    Recorded forward(nn::Tape& tape, const nn::Tensor& pixels) const;

    /// Target layer -> V (global average pool then projection).
    nn::Tensor embed_features(const nn::Tensor& features) const;

    /// Spatial size of the target layer for an HxW input.
    std::pair<std::size_t, std::size_t> feature_size(std::size_t height, std::size_t width) const;

    std::vector<std::pair<std::string, nn::Tensor*>> parameters();
    std::vector<std::pair<std::string, const nn::Tensor*>> parameters() const;

    nn::Tensor conv1_weight, conv1_bias;
    nn::Tensor conv2_weight, conv2_bias;
    nn::Tensor proj_weight, proj_bias;

private:
    void check_input(const nn::Tensor& pixels) const;
    nn::ConvGeometry conv1_geom() const { return {cfg_.conv1_stride, 1}; }
    static constexpr nn::ConvGeometry conv2_geom() { return {1, 1}; }

    ImageEncoderConfig cfg_;
};

// ---------------------------------------------------------------------------
// Text encoder
// ---------------------------------------------------------------------------

/// Lowercase, split on ASCII whitespace.
std::vector<std::string> tokenize(std::string_view caption);

class Vocabulary
{
public:
    static constexpr std::size_t kUnk = 0;
    static constexpr std::string_view kUnkToken = "<unk>";

    Vocabulary();  ///< only <unk>
    explicit Vocabulary(const std::vector<std::string>& captions);  ///< sorted unique tokens after <unk>
    static Vocabulary from_tokens(std::vector<std::string> tokens);  ///< tokens[0] must be <unk>

    std::size_t index(const std::string& token) const;
    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::map<std::string, std::size_t> lookup_;
};

struct TextEncoderConfig
{
    std::size_t token_dim = 16;  ///< Dt
    std::size_t embed_dim = 16;  ///< D
};

class TextEncoder
{
public:
    struct Recorded
    {
        nn::Var embedding;
        std::vector<nn::Var> params;
    };

    TextEncoder() = default;
    TextEncoder(Vocabulary vocab, const TextEncoderConfig& cfg);  ///< all-zero parameters

    static TextEncoder random(Vocabulary vocab, const TextEncoderConfig& cfg, SplitMix64& rng);

    const Vocabulary& vocabulary() const { return vocab_; }
    const TextEncoderConfig& config() const { return cfg_; }

    /// Token indices; throws ValueError for a caption with no tokens.
    std::vector<std::size_t> token_ids(std::string_view caption) const;

    /// Unnormalized T.
    Embedding encode(std::string_view caption) const;
    Recorded forward(nn::Tape& tape, std::string_view caption) const;

    std::vector<std::pair<std::string, nn::Tensor*>> parameters();
    std::vector<std::pair<std::string, const nn::Tensor*>> parameters() const;

    nn::Tensor token_table;  ///< |V| x Dt
    nn::Tensor proj_weight;  ///< D x Dt
    nn::Tensor proj_bias;    ///< D

private:
    Vocabulary vocab_;
    TextEncoderConfig cfg_;
};

// ---------------------------------------------------------------------------
// Paired model
// ---------------------------------------------------------------------------

struct FeatureGradients
{
    nn::Tensor features;   ///< f_k, K x Hf x Wf
    nn::Tensor gradients;  ///< dS/df_k, same shape
    double similarity = 0.0;
};

class DualEncoder
{
public:
    DualEncoder() = default;
    DualEncoder(ImageEncoder image, TextEncoder text, double temperature = 0.07, std::uint64_t seed = 0);

    /// Fresh model with seeded random weights.
    static DualEncoder random(const ImageEncoderConfig& image_cfg, const TextEncoderConfig& text_cfg, Vocabulary vocab,
                              std::uint64_t seed, double temperature = 0.07);

    const ImageEncoder& image() const { return image_; }
    const TextEncoder& text() const { return text_; }
    ImageEncoder& image() { return image_; }
    TextEncoder& text() { return text_; }
    double temperature() const { return temperature_; }
    std::uint64_t seed() const { return seed_; }

    SimilarityScore score(const Image& image, std::string_view caption) const;

    /// dS/df_k at the target layer, through pooling, projection and
    /// normalization. Throws DegenerateEmbeddingError for a zero-norm V or T.
    FeatureGradients feature_gradients(const Image& image, std::string_view caption) const;

    nn::WeightsFile to_weights() const;
    static DualEncoder from_weights(const nn::WeightsFile& file);

    void save(const std::filesystem::path& path) const;
    static DualEncoder load(const std::filesystem::path& path);

private:
    ImageEncoder image_;
    TextEncoder text_;
    double temperature_ = 0.07;
    std::uint64_t seed_ = 0;
};

}  // namespace agm::encoder
