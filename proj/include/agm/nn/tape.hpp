// tape.hpp
//
// Reverse-mode recorder for the handful of ops the encoders use. Nodes are
// appended in execution order, so reverse insertion order is a valid
// topological order for backward(). One tape serves one forward pass.

#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "agm/nn/ops.hpp"
#include "agm/nn/tensor.hpp"

namespace agm::nn
{

class Tape;

/// Handle to a recorded node. Only meaningful for the tape that issued it.
class Var
{
public:
    Var() = default;
    std::size_t index() const { return index_; }

private:
    friend class Tape;
    Var(const Tape* owner, std::size_t index) : owner_(owner), index_(index) {}

    const Tape* owner_ = nullptr;
    std::size_t index_ = 0;
};

class Tape
{
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = delete;
    Tape& operator=(Tape&&) = delete;

    /// Parameters and inputs. Leaves with requires_grad=false get no gradient
    /// buffer and stop propagation (e.g. the raw image).
    Var leaf(Tensor value, bool requires_grad = true);

    Var conv2d(Var input, Var weights, Var bias, ConvGeometry geom);
    Var relu(Var input);
    Var global_avg_pool(Var input);
    Var linear(Var weights, Var bias, Var input);
    Var normalize(Var input);
    Var dot(Var a, Var b);
    Var embedding_mean(Var table, std::vector<std::size_t> rows);

    const Tensor& value(Var v) const;

    /// Accumulate d(output)/d(node) for every node, seeded with `seed`
    /// (same shape as the output). Clears gradients from any earlier call.
    void backward(Var output, const Tensor& seed);

    /// Gradient after backward(). Throws if the node is not on this tape or
    /// does not carry a gradient.
    const Tensor& grad(Var v) const;

    std::size_t size() const { return nodes_.size(); }

private:
    enum class Op
    {
        Leaf,
        Conv2d,
        Relu,
        GlobalAvgPool,
        Linear,
        Normalize,
        Dot,
        EmbeddingMean,
    };

    struct Node
    {
        Op op = Op::Leaf;
        Tensor value;
        std::vector<std::size_t> inputs;
        ConvGeometry geom{};
        std::vector<std::size_t> rows;
        bool requires_grad = true;
        std::optional<Tensor> grad;
    };

    std::size_t check(Var v) const;
    Var push(Node node);
    void accumulate(std::size_t index, const Tensor& g);

    std::vector<Node> nodes_;
};

}  // namespace agm::nn
