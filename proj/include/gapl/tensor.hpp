#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace gapl {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array of doubles.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s);
    Tensor(Shape s, std::vector<double> values);

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    // Leading dimension, i.e. the batch size for activations.
    std::size_t rows() const { return shape.empty() ? 0 : shape.front(); }
    // Elements per leading index.
    std::size_t row_size() const { return rows() == 0 ? 0 : data.size() / rows(); }

    std::span<double> row(std::size_t i) { return {data.data() + i * row_size(), row_size()}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * row_size(), row_size()}; }

    bool all_finite() const;
};

}  // namespace gapl
