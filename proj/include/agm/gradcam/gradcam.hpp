// gradcam.hpp
//
// A(x, y) = ReLU(sum_k alpha_k f_k(x, y)), alpha_k = spatial mean of dS/df_k.
// The raw map lives at feature resolution; the normalized map is scaled to a
// peak of 1 and upsampled (corner-aligned bilinear) to the image size.

#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "agm/encoder/dual_encoder.hpp"
#include "agm/image.hpp"
#include "agm/io/netpbm.hpp"
#include "agm/nn/tensor.hpp"

namespace agm::gradcam
{

struct Pixel
{
    int row = 0;
    int col = 0;

    friend bool operator==(const Pixel&, const Pixel&) = default;
};

struct AttentionMap
{
    nn::Tensor raw;         ///< Hf x Wf, >= 0
    nn::Tensor normalized;  ///< H x W in [0, 1]
    Pixel peak;             ///< argmax of normalized, image frame
    bool empty = false;     ///< raw map identically zero
    double similarity = 0.0;

    int width() const { return static_cast<int>(normalized.shape()[1]); }
    int height() const { return static_cast<int>(normalized.shape()[0]); }
    double at(int row, int col) const
    {
        return normalized[static_cast<std::size_t>(row) * normalized.shape()[1] + static_cast<std::size_t>(col)];
    }
};

/// alpha_k. Throws DimensionError unless grads is K x H x W with H, W >= 1.
std::vector<double> channel_weights(const nn::Tensor& grads);

/// ReLU(sum_k alpha_k f_k). Throws DimensionError when K != alpha.size().
nn::Tensor raw_attention(const nn::Tensor& features, const std::vector<double>& alpha);

/// raw / max(raw), or zeros when the max is 0. Throws ValueError for negative input.
nn::Tensor normalize_map(const nn::Tensor& raw);

/// Corner-aligned bilinear resampling of an H0 x W0 map to height x width.
/// Throws DimensionError when the target is smaller than the source.
nn::Tensor upsample_bilinear(const nn::Tensor& map, std::size_t height, std::size_t width);

/// First maximum in row-major order (smallest row, then smallest col).
Pixel argmax(const nn::Tensor& map);

/// Full chain from features and gradients to an image-resolution map.
AttentionMap attention_from(const nn::Tensor& features, const nn::Tensor& grads, std::size_t height,
                            std::size_t width);

AttentionMap attention_for(const Image& image, std::string_view caption, const encoder::DualEncoder& model);

/// 8-bit render, value round(255 * normalized).
io::GrayImage to_gray(const AttentionMap& map);

}  // namespace agm::gradcam
