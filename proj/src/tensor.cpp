#include "gapl/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "gapl/error.hpp"

namespace gapl {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor(Shape s) : shape(std::move(s)), data(shape_size(shape), 0.0) {}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != shape_size(shape))
        throw ShapeError("tensor of shape " + shape_str(shape) + " given " + std::to_string(data.size()) +
                         " values");
}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

const char* error_name(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::Argument: return "ArgumentError";
        case ErrorCode::Shape: return "ShapeError";
        case ErrorCode::Divergence: return "DivergenceError";
        case ErrorCode::LabelRange: return "LabelRangeError";
        case ErrorCode::Format: return "FormatError";
        case ErrorCode::SpecMismatch: return "SpecMismatchError";
        case ErrorCode::InsufficientTrace: return "InsufficientTraceError";
        case ErrorCode::MissingCheckpoint: return "MissingCheckpointError";
        case ErrorCode::Config: return "ConfigError";
        case ErrorCode::Io: return "IoError";
    }
    return "Error";
}

}  // namespace gapl
