// netpbm.cpp

#include "agm/io/netpbm.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "agm/error.hpp"

namespace agm::io
{

namespace
{

struct Header
{
    int width = 0;
    int height = 0;
    std::size_t payload_offset = 0;
};

class HeaderReader
{
public:
    explicit HeaderReader(std::string_view bytes) : bytes_(bytes) {}

    void skip_space_and_comments()
    {
        while (pos_ < bytes_.size())
        {
            const char c = bytes_[pos_];
            if (c == '#')
            {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n')
                    ++pos_;
            }
            else if (std::isspace(static_cast<unsigned char>(c)))
            {
                ++pos_;
            }
            else
            {
                return;
            }
        }
    }

    int number(const char* what)
    {
        skip_space_and_comments();
        if (pos_ >= bytes_.size())
            throw TruncatedError(std::string("netpbm: header ends before ") + what);
        if (!std::isdigit(static_cast<unsigned char>(bytes_[pos_])))
            throw FormatError(std::string("netpbm: expected ") + what);
        long v = 0;
        while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_])))
        {
            v = v * 10 + (bytes_[pos_] - '0');
            if (v > 1'000'000)
                throw FormatError(std::string("netpbm: ") + what + " too large");
            ++pos_;
        }
        return static_cast<int>(v);
    }

    std::size_t single_whitespace()
    {
        if (pos_ >= bytes_.size())
            throw TruncatedError("netpbm: header not terminated");
        if (!std::isspace(static_cast<unsigned char>(bytes_[pos_])))
            throw FormatError("netpbm: expected whitespace after maxval");
        return pos_ + 1;
    }

private:
    std::string_view bytes_;
    std::size_t pos_ = 2;
};

Header parse_header(std::string_view bytes, std::string_view magic)
{
    if (bytes.size() < 2)
        throw TruncatedError("netpbm: file too short");
    if (bytes.substr(0, 2) != magic)
        throw UnsupportedFormatError("netpbm: unsupported format '" + std::string(bytes.substr(0, 2)) + "', expected " +
                                     std::string(magic));
    HeaderReader r(bytes);
    Header h;
    h.width = r.number("width");
    h.height = r.number("height");
    const int maxval = r.number("maxval");
    if (maxval != 255)
        throw UnsupportedFormatError("netpbm: maxval " + std::to_string(maxval) + " unsupported (need 255)");
    h.payload_offset = r.single_whitespace();
    return h;
}

std::string header(std::string_view magic, int width, int height)
{
    return std::string(magic) + "\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
}

}  // namespace

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes)
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw IoError("cannot write " + path.string());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os)
        throw IoError("write failed: " + path.string());
}

std::string encode_ppm(const Image& image)
{
    std::string out = header("P6", image.width(), image.height());
    const auto b = image.bytes();
    out.append(reinterpret_cast<const char*>(b.data()), b.size());
    return out;
}

Image decode_ppm(std::string_view bytes)
{
    const Header h = parse_header(bytes, "P6");
    const std::size_t need = static_cast<std::size_t>(h.width) * static_cast<std::size_t>(h.height) * 3;
    if (bytes.size() - h.payload_offset < need)
        throw TruncatedError("ppm: payload has " + std::to_string(bytes.size() - h.payload_offset) + " bytes, need " +
                             std::to_string(need));
    const auto* p = reinterpret_cast<const std::uint8_t*>(bytes.data() + h.payload_offset);
    return Image(h.width, h.height, std::vector<std::uint8_t>(p, p + need));
}

void save_ppm(const Image& image, const std::filesystem::path& path)
{
    write_file(path, encode_ppm(image));
}

Image load_ppm(const std::filesystem::path& path)
{
    return decode_ppm(read_file(path));
}

std::string encode_pgm(const GrayImage& image)
{
    if (image.pixels.size() != static_cast<std::size_t>(image.width) * static_cast<std::size_t>(image.height))
        throw DimensionError("pgm: pixel count does not match dimensions");
    std::string out = header("P5", image.width, image.height);
    out.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
    return out;
}

GrayImage decode_pgm(std::string_view bytes)
{
    const Header h = parse_header(bytes, "P5");
    const std::size_t need = static_cast<std::size_t>(h.width) * static_cast<std::size_t>(h.height);
    if (bytes.size() - h.payload_offset < need)
        throw TruncatedError("pgm: payload has " + std::to_string(bytes.size() - h.payload_offset) + " bytes, need " +
                             std::to_string(need));
    const auto* p = reinterpret_cast<const std::uint8_t*>(bytes.data() + h.payload_offset);
    return {h.width, h.height, std::vector<std::uint8_t>(p, p + need)};
}

void save_pgm(const GrayImage& image, const std::filesystem::path& path)
{
    write_file(path, encode_pgm(image));
}

GrayImage load_pgm(const std::filesystem::path& path)
{
    return decode_pgm(read_file(path));
}

GrayImage mask_to_gray(const Mask& mask)
{
    GrayImage g{mask.width(), mask.height(), {}};
    g.pixels.reserve(static_cast<std::size_t>(mask.width()) * static_cast<std::size_t>(mask.height()));
    for (int y = 0; y < mask.height(); ++y)
        for (int x = 0; x < mask.width(); ++x)
            g.pixels.push_back(mask.get(x, y) ? 255 : 0);
    return g;
}

Mask gray_to_mask(const GrayImage& gray)
{
    Mask m(gray.width, gray.height);
    for (int y = 0; y < gray.height; ++y)
        for (int x = 0; x < gray.width; ++x)
            if (gray.pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(gray.width) + static_cast<std::size_t>(x)] >= 128)
                m.set(x, y);
    return m;
}

void save_mask(const Mask& mask, const std::filesystem::path& path)
{
    save_pgm(mask_to_gray(mask), path);
}

Mask load_mask(const std::filesystem::path& path)
{
    return gray_to_mask(load_pgm(path));
}

}  // namespace agm::io
