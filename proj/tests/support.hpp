#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>
#include <variant>

#include "gapl/data.hpp"
#include "gapl/instrumentation.hpp"
#include "gapl/model.hpp"
#include "gapl/rng.hpp"

namespace gapl::testing {

// Scratch directory removed on scope exit.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() / ("gapl-" + tag + "-" + std::to_string(::getpid()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Tensor random_batch(const Shape& sample, std::size_t rows, Rng& rng, double scale = 1.0) {
    Shape s{rows};
    s.insert(s.end(), sample.begin(), sample.end());
    Tensor t(s);
    for (auto& v : t.data) v = scale * rng.normal();
    return t;
}

inline std::vector<int> random_labels(std::size_t rows, std::size_t classes, Rng& rng) {
    std::vector<int> y(rows);
    for (auto& v : y) v = static_cast<int>(rng.below(classes));
    return y;
}

inline double mean_loss(const ModelSpec& spec, const ParamVector& p, const Tensor& x, const std::vector<int>& y) {
    return softmax_cross_entropy(forward(spec, p, x), y).loss;
}

// Largest |analytic - numeric| / max(|analytic|, |numeric|, floor) over all
// parameters, numeric from central differences with step h. The floor keeps
// entries whose true gradient is ~0 from dividing round-off by round-off.
inline double gradient_rel_error(const ModelSpec& spec, const ParamVector& params, const Tensor& x,
                                 const std::vector<int>& y, double h = 1e-5, double floor = 1e-6) {
    const ParamVector g = backward(spec, params, x, y).grads;
    ParamVector p = params;
    double worst = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        const double orig = p.values[k];
        p.values[k] = orig + h;
        const double up = mean_loss(spec, p, x, y);
        p.values[k] = orig - h;
        const double down = mean_loss(spec, p, x, y);
        p.values[k] = orig;
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(g.values[k]), std::abs(numeric), floor});
        worst = std::max(worst, std::abs(g.values[k] - numeric) / denom);
    }
    return worst;
}

// Small model per layer type; each stays under 500 parameters.
struct GradCase {
    std::string name;
    ModelSpec spec;
};

inline std::vector<GradCase> gradient_cases() {
    using namespace layer;
    return {
        {"dense", ModelSpec({Dense{6, 4}}, {6}, 4)},
        {"relu", ModelSpec({Dense{5, 8}, ReLU{}, Dense{8, 3}}, {5}, 3)},
        {"flatten", ModelSpec({Flatten{}, Dense{12, 3}}, {3, 2, 2}, 3)},
        {"conv3x3", ModelSpec({Conv3x3{2, 3}, Flatten{}, Dense{48, 3}}, {2, 4, 4}, 3)},
        {"maxpool2x2", ModelSpec({Conv3x3{1, 2}, ReLU{}, MaxPool2x2{}, Flatten{}, Dense{18, 4}}, {1, 6, 6}, 4)},
    };
}

// Smallest distance of any ReLU input from 0, or of any max-pool winner from
// its runner-up, over the batch. Central differences are only meaningful when
// this stays well above the step size; inside that band the loss has a kink.
inline double kink_margin(const ModelSpec& spec, const ParamVector& params, const Tensor& x) {
    double margin = INFINITY;
    const auto& layers = spec.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const bool relu = std::holds_alternative<layer::ReLU>(layers[i]);
        const bool pool = std::holds_alternative<layer::MaxPool2x2>(layers[i]);
        if (!relu && !pool) continue;
        // Prefix network ending at the input of layer i.
        std::vector<Layer> prefix(layers.begin(), layers.begin() + static_cast<std::ptrdiff_t>(i));
        const Shape in = spec.shapes()[i];
        if (!prefix.empty() && in.size() > 1) prefix.push_back(layer::Flatten{});
        const ModelSpec head = prefix.empty() ? spec : ModelSpec(prefix, spec.input_shape(), shape_size(in));
        const std::vector<double> sub(params.values.begin(),
                                      params.values.begin() + static_cast<std::ptrdiff_t>(head.param_count()));
        const Tensor a = prefix.empty() ? x : forward(head, ParamVector(sub, head.digest()), x);
        if (relu) {
            for (double v : a.data) margin = std::min(margin, std::abs(v));
            continue;
        }
        const bool after_relu = i > 0 && std::holds_alternative<layer::ReLU>(layers[i - 1]);
        const std::size_t c = in[0], h = in[1], w = in[2], rows = a.shape[0];
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t py = 0; py + 1 < h; py += 2)
                    for (std::size_t px = 0; px + 1 < w; px += 2) {
                        double v[4];
                        for (int k = 0; k < 4; ++k)
                            v[k] = a.data[((r * c + ch) * h + py + k / 2) * w + px + k % 2];
                        std::sort(v, v + 4);
                        // Clamped zeros tie harmlessly: none of them moves.
                        if (after_relu && v[3] == 0.0) continue;
                        margin = std::min(margin, v[3] - v[2]);
                    }
    }
    return margin;
}

// Random batch whose kink margin is at least 100 h, redrawn from the same
// stream until it is; `redraws` counts the rejected batches.
struct GradSample {
    Tensor x;
    std::vector<int> y;
    int redraws = 0;
};

inline GradSample smooth_sample(const ModelSpec& spec, const ParamVector& params, std::size_t rows, Rng& rng,
                                double h = 1e-5) {
    GradSample s;
    for (;; ++s.redraws) {
        s.x = random_batch(spec.input_shape(), rows, rng);
        s.y = random_labels(rows, spec.n_classes(), rng);
        if (kink_margin(spec, params, s.x) >= 100.0 * h) return s;
    }
}

inline TraceRecord eval_record(std::uint64_t it, int task, double acc) {
    TraceRecord r;
    r.iteration = it;
    r.task = task;
    r.test_acc = acc;
    r.test_loss = 1.0 - acc;
    return r;
}

// Pre-boundary evals at iterations 1..pre.size(), boundary = pre.size(),
// post-boundary evals at the following iterations.
inline TrainTrace synthetic_trace(const std::vector<double>& pre, const std::vector<double>& post) {
    TrainTrace t;
    std::uint64_t it = 0;
    for (double a : pre) t.push_back(eval_record(++it, 0, a));
    for (double a : post) t.push_back(eval_record(++it, 1, a));
    return t;
}

}  // namespace gapl::testing
