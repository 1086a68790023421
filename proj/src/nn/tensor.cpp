// tensor.cpp

#include "agm/nn/tensor.hpp"

#include <cmath>
#include <sstream>

#include "agm/error.hpp"

namespace agm::nn
{

std::size_t shape_size(const Shape& shape)
{
    std::size_t n = 1;
    for (std::size_t d : shape)
        n *= d;
    return n;
}

std::string shape_string(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i)
        os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape)
    : shape_(std::move(shape)), data_(shape_size(shape_), 0.0)
{}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data))
{
    if (data_.size() != shape_size(shape_))
        throw DimensionError("Tensor: shape " + shape_string(shape_) + " needs " +
                             std::to_string(shape_size(shape_)) + " values, got " + std::to_string(data_.size()));
    for (double v : data_)
        if (!std::isfinite(v))
            throw ValueError("Tensor: non-finite value");
}

Tensor Tensor::filled(Shape shape, double v)
{
    Tensor t(std::move(shape));
    for (double& x : t.data_)
        x = v;
    return t;
}

Tensor Tensor::reshaped(Shape shape) const
{
    if (shape_size(shape) != data_.size())
        throw DimensionError("reshape: " + shape_string(shape_) + " -> " + shape_string(shape));
    Tensor out;
    out.shape_ = std::move(shape);
    out.data_ = data_;
    return out;
}

}  // namespace agm::nn
