// tape.cpp

#include "agm/nn/tape.hpp"

#include <string>

#include "agm/error.hpp"

namespace agm::nn
{

std::size_t Tape::check(Var v) const
{
    if (v.owner_ != this || v.index_ >= nodes_.size())
        throw Error("tape: node " + std::to_string(v.index_) + " was not recorded on this tape");
    return v.index_;
}

Var Tape::push(Node node)
{
    for (std::size_t in : node.inputs)
        node.requires_grad = node.requires_grad || nodes_[in].requires_grad;
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor value, bool requires_grad)
{
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Tape::conv2d(Var input, Var weights, Var bias, ConvGeometry geom)
{
    Node n;
    n.op = Op::Conv2d;
    n.inputs = {check(input), check(weights), check(bias)};
    n.geom = geom;
    n.requires_grad = false;
    n.value = nn::conv2d(value(input), value(weights), value(bias), geom);
    return push(std::move(n));
}

Var Tape::relu(Var input)
{
    Node n;
    n.op = Op::Relu;
    n.inputs = {check(input)};
    n.requires_grad = false;
    n.value = nn::relu(value(input));
    return push(std::move(n));
}

Var Tape::global_avg_pool(Var input)
{
    Node n;
    n.op = Op::GlobalAvgPool;
    n.inputs = {check(input)};
    n.requires_grad = false;
    n.value = nn::global_avg_pool(value(input));
    return push(std::move(n));
}

Var Tape::linear(Var weights, Var bias, Var input)
{
    Node n;
    n.op = Op::Linear;
    n.inputs = {check(weights), check(bias), check(input)};
    n.requires_grad = false;
    n.value = nn::linear(value(weights), value(bias), value(input));
    return push(std::move(n));
}

Var Tape::normalize(Var input)
{
    Node n;
    n.op = Op::Normalize;
    n.inputs = {check(input)};
    n.requires_grad = false;
    n.value = nn::l2_normalize(value(input));
    return push(std::move(n));
}

Var Tape::dot(Var a, Var b)
{
    Node n;
    n.op = Op::Dot;
    n.inputs = {check(a), check(b)};
    n.requires_grad = false;
    n.value = nn::dot(value(a), value(b));
    return push(std::move(n));
}

Var Tape::embedding_mean(Var table, std::vector<std::size_t> rows)
{
    Node n;
    n.op = Op::EmbeddingMean;
    n.inputs = {check(table)};
    n.requires_grad = false;
    n.value = nn::embedding_mean(value(table), rows);
    n.rows = std::move(rows);
    return push(std::move(n));
}

const Tensor& Tape::value(Var v) const
{
    return nodes_[check(v)].value;
}

void Tape::accumulate(std::size_t index, const Tensor& g)
{
    Node& n = nodes_[index];
    if (!n.requires_grad)
        return;
    if (!n.grad)
    {
        n.grad = g;
        return;
    }
    auto dst = n.grad->data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i)
        dst[i] += src[i];
}

void Tape::backward(Var output, const Tensor& seed)
{
    const std::size_t out = check(output);
    if (seed.shape() != nodes_[out].value.shape())
        throw DimensionError("backward: seed shape " + shape_string(seed.shape()) + " does not match output " +
                             shape_string(nodes_[out].value.shape()));

    for (Node& n : nodes_)
        n.grad.reset();
    for (Node& n : nodes_)
        if (n.requires_grad)
            n.grad = Tensor(n.value.shape());
    accumulate(out, seed);

    for (std::size_t i = out + 1; i-- > 0;)
    {
        Node& n = nodes_[i];
        if (!n.requires_grad || n.op == Op::Leaf)
            continue;
        const Tensor& g = *n.grad;
        const auto& in = n.inputs;
        switch (n.op)
        {
        case Op::Conv2d:
        {
            const bool want_input = nodes_[in[0]].requires_grad;
            Conv2dGrads cg = conv2d_backward(nodes_[in[0]].value, nodes_[in[1]].value, g, n.geom, want_input);
            if (want_input)
                accumulate(in[0], cg.input);
            accumulate(in[1], cg.weights);
            accumulate(in[2], cg.bias);
            break;
        }
        case Op::Relu:
            accumulate(in[0], relu_backward(nodes_[in[0]].value, g));
            break;
        case Op::GlobalAvgPool:
            accumulate(in[0], global_avg_pool_backward(nodes_[in[0]].value.shape(), g));
            break;
        case Op::Linear:
        {
            LinearGrads lg = linear_backward(nodes_[in[0]].value, nodes_[in[2]].value, g);
            accumulate(in[0], lg.weights);
            accumulate(in[1], lg.bias);
            accumulate(in[2], lg.input);
            break;
        }
        case Op::Normalize:
            accumulate(in[0], l2_normalize_backward(nodes_[in[0]].value, g));
            break;
        case Op::Dot:
        {
            const Tensor& a = nodes_[in[0]].value;
            const Tensor& b = nodes_[in[1]].value;
            Tensor ga(a.shape()), gb(b.shape());
            for (std::size_t j = 0; j < a.size(); ++j)
            {
                ga[j] = g[0] * b[j];
                gb[j] = g[0] * a[j];
            }
            accumulate(in[0], ga);
            accumulate(in[1], gb);
            break;
        }
        case Op::EmbeddingMean:
            accumulate(in[0], embedding_mean_backward(nodes_[in[0]].value.shape(), n.rows, g));
            break;
        case Op::Leaf:
            break;
        }
    }
}

const Tensor& Tape::grad(Var v) const
{
    const Node& n = nodes_[check(v)];
    if (!n.grad)
        throw Error("tape: node " + std::to_string(v.index_) + " has no gradient (backward not run or not differentiable)");
    return *n.grad;
}

}  // namespace agm::nn
