#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gapl/tensor.hpp"

namespace gapl {

namespace layer {
struct Dense {
    std::size_t in = 0, out = 0;
};
struct ReLU {};
// Stride 1, zero padding 1: spatial shape is preserved.
struct Conv3x3 {
    std::size_t in_channels = 0, out_channels = 0;
};
// Stride 2, odd trailing rows/columns are dropped.
struct MaxPool2x2 {};
struct Flatten {};
}  // namespace layer

using Layer = std::variant<layer::Dense, layer::ReLU, layer::Conv3x3, layer::MaxPool2x2, layer::Flatten>;

using SpecDigest = std::array<std::uint8_t, 32>;

std::string digest_hex(const SpecDigest& d);
SpecDigest sha256_digest(const std::string& text);

// Immutable, validated network description. Construction checks that every
// layer accepts the shape produced by its predecessor and that the network
// ends in a flat [n_classes] output.
class ModelSpec {
public:
    ModelSpec(std::vector<Layer> layers, Shape input_shape, std::size_t n_classes);

    // Dense/ReLU stack: widths = {in, hidden..., n_classes}.
    static ModelSpec mlp(const std::vector<std::size_t>& widths);
    // [Conv3x3 -> ReLU -> MaxPool2x2] per entry of `channels`, Flatten, then
    // Dense/ReLU over `hidden`, then a Dense head to n_classes.
    static ModelSpec small_cnn(const Shape& input_chw, const std::vector<std::size_t>& channels,
                               const std::vector<std::size_t>& hidden, std::size_t n_classes);

    const std::vector<Layer>& layers() const { return layers_; }
    const Shape& input_shape() const { return input_shape_; }
    std::size_t input_size() const { return shape_size(input_shape_); }
    std::size_t n_classes() const { return n_classes_; }
    // Per-sample shapes: shapes()[i] is the input of layer i, back() the output.
    const std::vector<Shape>& shapes() const { return shapes_; }
    std::size_t param_count() const { return param_count_; }
    // Offset of layer i's parameters inside the flat vector.
    std::size_t param_offset(std::size_t i) const { return offsets_[i]; }

    // Textual form hashed into the digest, e.g.
    // "input=[32];dense(32,128);relu;dense(128,8);classes=8".
    const std::string& canonical() const { return canonical_; }
    const SpecDigest& digest() const { return digest_; }

    bool operator==(const ModelSpec& other) const { return digest_ == other.digest_; }

private:
    std::vector<Layer> layers_;
    Shape input_shape_;
    std::size_t n_classes_;
    std::vector<Shape> shapes_;
    std::vector<std::size_t> offsets_;
    std::size_t param_count_ = 0;
    std::string canonical_;
    SpecDigest digest_{};
};

// Flat parameter vector in canonical order: layer order, and within a layer
// weights row-major followed by biases. Dense weights are [out][in], conv
// weights [out_ch][in_ch][3][3].
struct ParamVector {
    std::vector<double> values;
    SpecDigest spec_digest{};

    ParamVector() = default;
    ParamVector(std::vector<double> v, const SpecDigest& d) : values(std::move(v)), spec_digest(d) {}
    static ParamVector zeros(const ModelSpec& spec);

    std::size_t size() const { return values.size(); }
    bool operator==(const ParamVector&) const = default;
};

// Throws SpecMismatchError unless a and b share a digest and length.
void require_combinable(const ParamVector& a, const ParamVector& b);
// Throws SpecMismatchError unless p is bound to spec.
void require_bound(const ModelSpec& spec, const ParamVector& p);

// Per-layer views into a ParamVector.
struct LayerParams {
    std::span<const double> weights;
    std::span<const double> bias;
};
LayerParams layer_params(const ModelSpec& spec, std::span<const double> flat, std::size_t layer_index);
std::vector<std::vector<double>> unflatten(const ModelSpec& spec, const ParamVector& p);
ParamVector flatten(const ModelSpec& spec, const std::vector<std::vector<double>>& per_layer);

// Glorot-uniform weights, zero biases. Deterministic in seed.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

Tensor forward(const ModelSpec& spec, const ParamVector& params, const Tensor& batch);

struct LossAndGrad {
    double loss = 0.0;
    Tensor dlogits;
};
// Mean softmax cross-entropy over the batch with its gradient.
LossAndGrad softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);
// Loss only, no gradient allocation.
double cross_entropy_sum(const Tensor& logits, std::span<const int> labels);

struct BackwardResult {
    double loss = 0.0;
    ParamVector grads;
    Tensor logits;
};
BackwardResult backward(const ModelSpec& spec, const ParamVector& params, const Tensor& batch,
                        std::span<const int> labels);

// Index of the largest entry, lowest index on ties.
std::size_t argmax(std::span<const double> row);
std::size_t count_correct(const Tensor& logits, std::span<const int> labels);
double accuracy(const Tensor& logits, std::span<const int> labels);

}  // namespace gapl
