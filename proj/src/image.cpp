// image.cpp

#include "agm/image.hpp"

#include <bit>
#include <string>

#include "agm/error.hpp"

namespace agm
{

Image::Image(int width, int height, Rgb fill)
    : width_(width), height_(height)
{
    if (width < 0 || height < 0)
        throw DimensionError("Image: negative dimensions");
    bytes_.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3);
    for (std::size_t i = 0; i < bytes_.size(); i += 3)
    {
        bytes_[i] = fill.r;
        bytes_[i + 1] = fill.g;
        bytes_[i + 2] = fill.b;
    }
}

Image::Image(int width, int height, std::vector<std::uint8_t> interleaved)
    : width_(width), height_(height), bytes_(std::move(interleaved))
{
    if (width < 0 || height < 0)
        throw DimensionError("Image: negative dimensions");
    if (bytes_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3)
        throw DimensionError("Image: expected " + std::to_string(width * height * 3) + " bytes, got " +
                             std::to_string(bytes_.size()));
}

Mask::Mask(int width, int height)
    : width_(width), height_(height)
{
    if (width < 0 || height < 0)
        throw DimensionError("Mask: negative dimensions");
    const std::size_t bits = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    words_.assign((bits + 63) / 64, 0);
}

std::size_t Mask::popcount() const
{
    std::size_t n = 0;
    for (std::uint64_t w : words_)
        n += static_cast<std::size_t>(std::popcount(w));
    return n;
}

Mask& Mask::operator|=(const Mask& other)
{
    if (other.width_ != width_ || other.height_ != height_)
        throw DimensionError("Mask union: dimension mismatch");
    for (std::size_t i = 0; i < words_.size(); ++i)
        words_[i] |= other.words_[i];
    return *this;
}

}  // namespace agm
