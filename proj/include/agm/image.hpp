// image.hpp
//
// Raster types flowing through the pipeline: the RGB input image and the
// binary object mask.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace agm
{

struct Rgb
{
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;

    friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// 8-bit RGB raster, row-major, channels interleaved.
class Image
{
public:
    Image() = default;
    Image(int width, int height, Rgb fill = {});
    Image(int width, int height, std::vector<std::uint8_t> interleaved);

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return width_ == 0 || height_ == 0; }

    Rgb at(int x, int y) const
    {
        const std::size_t i = index(x, y);
        return {bytes_[i], bytes_[i + 1], bytes_[i + 2]};
    }

    void set(int x, int y, Rgb c)
    {
        const std::size_t i = index(x, y);
        bytes_[i] = c.r;
        bytes_[i + 1] = c.g;
        bytes_[i + 2] = c.b;
    }

    bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

    std::span<const std::uint8_t> bytes() const { return bytes_; }
    std::span<std::uint8_t> bytes() { return bytes_; }

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t index(int x, int y) const
    {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * 3;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> bytes_;
};

/// Binary raster packed 64 pixels per word (row-major bit order); 1 = object.
class Mask
{
public:
    Mask() = default;
    Mask(int width, int height);

    int width() const { return width_; }
    int height() const { return height_; }

    bool get(int x, int y) const
    {
        const std::size_t i = bit(x, y);
        return (words_[i >> 6] >> (i & 63)) & 1u;
    }

    void set(int x, int y, bool on = true)
    {
        const std::size_t i = bit(x, y);
        const std::uint64_t m = std::uint64_t{1} << (i & 63);
        if (on)
            words_[i >> 6] |= m;
        else
            words_[i >> 6] &= ~m;
    }

    bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

    std::size_t popcount() const;
    bool none() const { return popcount() == 0; }

    /// Bits past width*height in the last word are always zero.
    std::span<const std::uint64_t> words() const { return words_; }

    Mask& operator|=(const Mask& other);

    friend bool operator==(const Mask&, const Mask&) = default;

private:
    std::size_t bit(int x, int y) const
    {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint64_t> words_;
};

}  // namespace agm
