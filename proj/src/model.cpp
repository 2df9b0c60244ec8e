#include "gapl/model.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "gapl/error.hpp"
#include "gapl/rng.hpp"

namespace gapl {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

std::size_t layer_param_count(const Layer& l) {
    return std::visit(overloaded{
                          [](const layer::Dense& d) { return d.out * d.in + d.out; },
                          [](const layer::Conv3x3& c) { return c.out_channels * c.in_channels * 9 + c.out_channels; },
                          [](const auto&) { return std::size_t{0}; },
                      },
                      l);
}

std::size_t layer_weight_count(const Layer& l) {
    return std::visit(overloaded{
                          [](const layer::Dense& d) { return d.out * d.in; },
                          [](const layer::Conv3x3& c) { return c.out_channels * c.in_channels * 9; },
                          [](const auto&) { return std::size_t{0}; },
                      },
                      l);
}

std::string layer_str(const Layer& l) {
    return std::visit(overloaded{
                          [](const layer::Dense& d) {
                              return "dense(" + std::to_string(d.in) + "," + std::to_string(d.out) + ")";
                          },
                          [](const layer::ReLU&) { return std::string("relu"); },
                          [](const layer::Conv3x3& c) {
                              return "conv3x3(" + std::to_string(c.in_channels) + "," +
                                     std::to_string(c.out_channels) + ")";
                          },
                          [](const layer::MaxPool2x2&) { return std::string("maxpool2x2"); },
                          [](const layer::Flatten&) { return std::string("flatten"); },
                      },
                      l);
}

Shape output_shape(const Layer& l, const Shape& in, std::size_t index) {
    auto fail = [&](const std::string& why) -> Shape {
        throw ShapeError("layer " + std::to_string(index) + " (" + layer_str(l) + ") " + why + ", input " +
                         shape_str(in));
    };
    return std::visit(overloaded{
                          [&](const layer::Dense& d) -> Shape {
                              if (d.in == 0 || d.out == 0) return fail("has a zero dimension");
                              if (in.size() != 1 || in[0] != d.in) return fail("expects [" + std::to_string(d.in) + "]");
                              return {d.out};
                          },
                          [&](const layer::ReLU&) -> Shape { return in; },
                          [&](const layer::Conv3x3& c) -> Shape {
                              if (c.in_channels == 0 || c.out_channels == 0) return fail("has a zero dimension");
                              if (in.size() != 3 || in[0] != c.in_channels) return fail("channel mismatch");
                              return {c.out_channels, in[1], in[2]};
                          },
                          [&](const layer::MaxPool2x2&) -> Shape {
                              if (in.size() != 3 || in[1] < 2 || in[2] < 2) return fail("needs [C,H>=2,W>=2]");
                              return {in[0], in[1] / 2, in[2] / 2};
                          },
                          [&](const layer::Flatten&) -> Shape { return {shape_size(in)}; },
                      },
                      l);
}

}  // namespace

SpecDigest sha256_digest(const std::string& text) {
    SpecDigest out{};
    unsigned int len = 0;
    if (EVP_Digest(text.data(), text.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size())
        throw Error(ErrorCode::Io, "sha256 digest failed");
    return out;
}

std::string digest_hex(const SpecDigest& d) {
    std::string s;
    char buf[3];
    for (auto b : d) {
        std::snprintf(buf, sizeof buf, "%02x", b);
        s += buf;
    }
    return s;
}

ModelSpec::ModelSpec(std::vector<Layer> layers, Shape input_shape, std::size_t n_classes)
    : layers_(std::move(layers)), input_shape_(std::move(input_shape)), n_classes_(n_classes) {
    if (input_shape_.empty() || shape_size(input_shape_) == 0)
        throw ShapeError("input shape must be non-empty with positive dimensions");
    if (n_classes_ < 2) throw ShapeError("n_classes must be at least 2");
    if (layers_.empty()) throw ShapeError("model has no layers");

    shapes_.push_back(input_shape_);
    canonical_ = "input=" + shape_str(input_shape_);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        shapes_.push_back(output_shape(layers_[i], shapes_.back(), i));
        offsets_.push_back(param_count_);
        param_count_ += layer_param_count(layers_[i]);
        canonical_ += ";" + layer_str(layers_[i]);
    }
    offsets_.push_back(param_count_);
    if (shapes_.back() != Shape{n_classes_})
        throw ShapeError("network output " + shape_str(shapes_.back()) + " does not match n_classes " +
                         std::to_string(n_classes_));
    canonical_ += ";classes=" + std::to_string(n_classes_);
    digest_ = sha256_digest(canonical_);
}

ModelSpec ModelSpec::mlp(const std::vector<std::size_t>& widths) {
    if (widths.size() < 2) throw ShapeError("mlp needs at least input and output widths");
    std::vector<Layer> layers;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        layers.emplace_back(layer::Dense{widths[i], widths[i + 1]});
        if (i + 2 < widths.size()) layers.emplace_back(layer::ReLU{});
    }
    return ModelSpec(std::move(layers), {widths.front()}, widths.back());
}

ModelSpec ModelSpec::small_cnn(const Shape& input_chw, const std::vector<std::size_t>& channels,
                               const std::vector<std::size_t>& hidden, std::size_t n_classes) {
    if (input_chw.size() != 3) throw ShapeError("small_cnn input must be [C,H,W]");
    std::vector<Layer> layers;
    Shape cur = input_chw;
    for (std::size_t c : channels) {
        layers.emplace_back(layer::Conv3x3{cur[0], c});
        layers.emplace_back(layer::ReLU{});
        layers.emplace_back(layer::MaxPool2x2{});
        cur = {c, cur[1] / 2, cur[2] / 2};
    }
    layers.emplace_back(layer::Flatten{});
    std::size_t width = shape_size(cur);
    for (std::size_t h : hidden) {
        layers.emplace_back(layer::Dense{width, h});
        layers.emplace_back(layer::ReLU{});
        width = h;
    }
    layers.emplace_back(layer::Dense{width, n_classes});
    return ModelSpec(std::move(layers), input_chw, n_classes);
}

ParamVector ParamVector::zeros(const ModelSpec& spec) {
    return ParamVector(std::vector<double>(spec.param_count(), 0.0), spec.digest());
}

void require_combinable(const ParamVector& a, const ParamVector& b) {
    if (a.spec_digest != b.spec_digest)
        throw SpecMismatchError("parameter vectors belong to different models (" + digest_hex(a.spec_digest) +
                                " vs " + digest_hex(b.spec_digest) + ")");
    if (a.size() != b.size())
        throw SpecMismatchError("parameter vectors differ in length (" + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
}

void require_bound(const ModelSpec& spec, const ParamVector& p) {
    if (p.spec_digest != spec.digest())
        throw SpecMismatchError("parameters bound to " + digest_hex(p.spec_digest) + ", model is " +
                                digest_hex(spec.digest()));
    if (p.size() != spec.param_count())
        throw SpecMismatchError("parameter count " + std::to_string(p.size()) + " != model's " +
                                std::to_string(spec.param_count()));
}

LayerParams layer_params(const ModelSpec& spec, std::span<const double> flat, std::size_t i) {
    const std::size_t off = spec.param_offset(i);
    const std::size_t nw = layer_weight_count(spec.layers()[i]);
    const std::size_t n = spec.param_offset(i + 1) - off;
    return {flat.subspan(off, nw), flat.subspan(off + nw, n - nw)};
}

std::vector<std::vector<double>> unflatten(const ModelSpec& spec, const ParamVector& p) {
    require_bound(spec, p);
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < spec.layers().size(); ++i) {
        auto first = p.values.begin() + static_cast<std::ptrdiff_t>(spec.param_offset(i));
        auto last = p.values.begin() + static_cast<std::ptrdiff_t>(spec.param_offset(i + 1));
        out.emplace_back(first, last);
    }
    return out;
}

ParamVector flatten(const ModelSpec& spec, const std::vector<std::vector<double>>& per_layer) {
    if (per_layer.size() != spec.layers().size()) throw ShapeError("layer count mismatch in flatten");
    ParamVector p = ParamVector::zeros(spec);
    for (std::size_t i = 0; i < per_layer.size(); ++i) {
        if (per_layer[i].size() != spec.param_offset(i + 1) - spec.param_offset(i))
            throw ShapeError("layer " + std::to_string(i) + " parameter block has wrong size");
        std::copy(per_layer[i].begin(), per_layer[i].end(),
                  p.values.begin() + static_cast<std::ptrdiff_t>(spec.param_offset(i)));
    }
    return p;
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
    ParamVector p = ParamVector::zeros(spec);
    Rng rng(seed);
    for (std::size_t i = 0; i < spec.layers().size(); ++i) {
        const Layer& l = spec.layers()[i];
        std::size_t fan_in = 0, fan_out = 0;
        if (auto* d = std::get_if<layer::Dense>(&l)) {
            fan_in = d->in;
            fan_out = d->out;
        } else if (auto* c = std::get_if<layer::Conv3x3>(&l)) {
            fan_in = c->in_channels * 9;
            fan_out = c->out_channels * 9;
        } else {
            continue;
        }
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        const std::size_t off = spec.param_offset(i);
        const std::size_t nw = layer_weight_count(l);
        for (std::size_t k = 0; k < nw; ++k) p.values[off + k] = rng.uniform(-bound, bound);
    }
    return p;
}

// ---------------------------------------------------------------------------
// Layer kernels. Activations are flat [B x per-sample] buffers.

namespace {

struct Tape {
    // inputs[i] is the input to layer i; inputs.back() is the network output.
    std::vector<std::vector<double>> values;
    // Flat input index selected by each MaxPool2x2 output element.
    std::vector<std::vector<std::uint32_t>> pool_index;
};

void dense_forward(const layer::Dense& d, LayerParams p, std::size_t batch, const std::vector<double>& x,
                   std::vector<double>& y) {
    // Transposed copy so the inner loop runs over contiguous outputs.
    std::vector<double> wt(d.in * d.out);
    for (std::size_t o = 0; o < d.out; ++o)
        for (std::size_t i = 0; i < d.in; ++i) wt[i * d.out + o] = p.weights[o * d.in + i];
    y.assign(batch * d.out, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        double* yb = y.data() + b * d.out;
        const double* xb = x.data() + b * d.in;
        std::copy(p.bias.begin(), p.bias.end(), yb);
        for (std::size_t i = 0; i < d.in; ++i) {
            const double xi = xb[i];
            const double* wrow = wt.data() + i * d.out;
            for (std::size_t o = 0; o < d.out; ++o) yb[o] += xi * wrow[o];
        }
    }
}

void dense_backward(const layer::Dense& d, LayerParams p, std::size_t batch, const std::vector<double>& x,
                    const std::vector<double>& dy, std::span<double> dw, std::span<double> db,
                    std::vector<double>* dx) {
    for (std::size_t b = 0; b < batch; ++b) {
        const double* xb = x.data() + b * d.in;
        const double* dyb = dy.data() + b * d.out;
        for (std::size_t o = 0; o < d.out; ++o) {
            const double g = dyb[o];
            db[o] += g;
            double* dwrow = dw.data() + o * d.in;
            for (std::size_t i = 0; i < d.in; ++i) dwrow[i] += g * xb[i];
        }
    }
    if (!dx) return;
    dx->assign(batch * d.in, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        double* dxb = dx->data() + b * d.in;
        const double* dyb = dy.data() + b * d.out;
        for (std::size_t o = 0; o < d.out; ++o) {
            const double g = dyb[o];
            const double* wrow = p.weights.data() + o * d.in;
            for (std::size_t i = 0; i < d.in; ++i) dxb[i] += g * wrow[i];
        }
    }
}

void conv_forward(const layer::Conv3x3& c, LayerParams p, std::size_t batch, std::size_t h, std::size_t w,
                  const std::vector<double>& x, std::vector<double>& y) {
    const std::size_t ic_n = c.in_channels, oc_n = c.out_channels, hw = h * w;
    y.assign(batch * oc_n * hw, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t oc = 0; oc < oc_n; ++oc) {
            double* yo = y.data() + (b * oc_n + oc) * hw;
            std::fill(yo, yo + hw, p.bias[oc]);
            for (std::size_t ic = 0; ic < ic_n; ++ic) {
                const double* xi = x.data() + (b * ic_n + ic) * hw;
                const double* k = p.weights.data() + (oc * ic_n + ic) * 9;
                for (std::size_t kh = 0; kh < 3; ++kh) {
                    for (std::size_t kw = 0; kw < 3; ++kw) {
                        const double wv = k[kh * 3 + kw];
                        // Output rows/cols whose shifted input lies inside the image.
                        const std::size_t r0 = kh == 0 ? 1 : 0, r1 = kh == 2 ? h - 1 : h;
                        const std::size_t c0 = kw == 0 ? 1 : 0, c1 = kw == 2 ? w - 1 : w;
                        for (std::size_t r = r0; r < r1; ++r) {
                            double* yr = yo + r * w;
                            const double* xr = xi + (r + kh - 1) * w + (kw - 1);
                            for (std::size_t col = c0; col < c1; ++col) yr[col] += wv * xr[col];
                        }
                    }
                }
            }
        }
    }
}

void conv_backward(const layer::Conv3x3& c, LayerParams p, std::size_t batch, std::size_t h, std::size_t w,
                   const std::vector<double>& x, const std::vector<double>& dy, std::span<double> dw,
                   std::span<double> db, std::vector<double>* dx) {
    const std::size_t ic_n = c.in_channels, oc_n = c.out_channels, hw = h * w;
    if (dx) dx->assign(batch * ic_n * hw, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t oc = 0; oc < oc_n; ++oc) {
            const double* dyo = dy.data() + (b * oc_n + oc) * hw;
            for (std::size_t k = 0; k < hw; ++k) db[oc] += dyo[k];
            for (std::size_t ic = 0; ic < ic_n; ++ic) {
                const double* xi = x.data() + (b * ic_n + ic) * hw;
                double* dxi = dx ? dx->data() + (b * ic_n + ic) * hw : nullptr;
                const double* k = p.weights.data() + (oc * ic_n + ic) * 9;
                double* dk = dw.data() + (oc * ic_n + ic) * 9;
                for (std::size_t kh = 0; kh < 3; ++kh) {
                    for (std::size_t kw = 0; kw < 3; ++kw) {
                        const double wv = k[kh * 3 + kw];
                        const std::size_t r0 = kh == 0 ? 1 : 0, r1 = kh == 2 ? h - 1 : h;
                        const std::size_t c0 = kw == 0 ? 1 : 0, c1 = kw == 2 ? w - 1 : w;
                        double acc = 0.0;
                        for (std::size_t r = r0; r < r1; ++r) {
                            const double* dyr = dyo + r * w;
                            const std::size_t shift = (r + kh - 1) * w + (kw - 1);
                            const double* xr = xi + shift;
                            for (std::size_t col = c0; col < c1; ++col) acc += dyr[col] * xr[col];
                            if (dxi) {
                                double* dxr = dxi + shift;
                                for (std::size_t col = c0; col < c1; ++col) dxr[col] += wv * dyr[col];
                            }
                        }
                        dk[kh * 3 + kw] += acc;
                    }
                }
            }
        }
    }
}

void pool_forward(const Shape& in, std::size_t batch, const std::vector<double>& x, std::vector<double>& y,
                  std::vector<std::uint32_t>& index) {
    const std::size_t ch = in[0], h = in[1], w = in[2], oh = h / 2, ow = w / 2;
    y.assign(batch * ch * oh * ow, 0.0);
    index.assign(y.size(), 0);
    std::size_t o = 0;
    for (std::size_t bc = 0; bc < batch * ch; ++bc) {
        const std::size_t base = bc * h * w;
        for (std::size_t r = 0; r < oh; ++r) {
            for (std::size_t col = 0; col < ow; ++col, ++o) {
                std::size_t best = base + (2 * r) * w + 2 * col;
                for (std::size_t dr = 0; dr < 2; ++dr)
                    for (std::size_t dc = 0; dc < 2; ++dc) {
                        const std::size_t k = base + (2 * r + dr) * w + 2 * col + dc;
                        if (x[k] > x[best]) best = k;
                    }
                y[o] = x[best];
                index[o] = static_cast<std::uint32_t>(best);
            }
        }
    }
}

void check_batch(const ModelSpec& spec, const Tensor& batch) {
    if (batch.rank() != spec.input_shape().size() + 1 || batch.rows() == 0 ||
        !std::equal(spec.input_shape().begin(), spec.input_shape().end(), batch.shape.begin() + 1))
        throw ShapeError("batch shape " + shape_str(batch.shape) + " does not match [B]++" +
                         shape_str(spec.input_shape()));
}

void check_labels(std::span<const int> labels, std::size_t rows, std::size_t classes) {
    if (labels.size() != rows)
        throw ShapeError(std::to_string(labels.size()) + " labels for " + std::to_string(rows) + " rows");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= classes)
            throw LabelRangeError("label " + std::to_string(y) + " outside [0," + std::to_string(classes) + ")");
}

Tensor run_forward(const ModelSpec& spec, const ParamVector& params, const Tensor& batch, Tape* tape) {
    require_bound(spec, params);
    check_batch(spec, batch);
    const std::size_t B = batch.rows();
    std::vector<double> cur = batch.data, next;
    std::vector<std::uint32_t> pool_idx;
    if (tape) {
        tape->values.clear();
        tape->pool_index.assign(spec.layers().size(), {});
    }
    for (std::size_t i = 0; i < spec.layers().size(); ++i) {
        const Layer& l = spec.layers()[i];
        const Shape& in = spec.shapes()[i];
        const LayerParams p = layer_params(spec, params.values, i);
        if (auto* d = std::get_if<layer::Dense>(&l)) {
            dense_forward(*d, p, B, cur, next);
        } else if (auto* c = std::get_if<layer::Conv3x3>(&l)) {
            conv_forward(*c, p, B, in[1], in[2], cur, next);
        } else if (std::holds_alternative<layer::ReLU>(l)) {
            next.resize(cur.size());
            for (std::size_t k = 0; k < cur.size(); ++k) next[k] = cur[k] > 0.0 ? cur[k] : 0.0;
        } else if (std::holds_alternative<layer::MaxPool2x2>(l)) {
            pool_forward(in, B, cur, next, pool_idx);
            if (tape) tape->pool_index[i] = std::move(pool_idx);
        } else {
            next = cur;  // Flatten: layout is already contiguous
        }
        if (tape) tape->values.push_back(std::move(cur));
        cur = std::move(next);
        next = {};
    }
    Tensor logits({B, spec.n_classes()}, std::move(cur));
    if (!logits.all_finite()) throw DivergenceError("non-finite logits");
    if (tape) tape->values.push_back(logits.data);
    return logits;
}

}  // namespace

Tensor forward(const ModelSpec& spec, const ParamVector& params, const Tensor& batch) {
    return run_forward(spec, params, batch, nullptr);
}

LossAndGrad softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
    if (logits.rank() != 2 || logits.rows() == 0) throw ShapeError("logits must be [B,C] with B >= 1");
    const std::size_t B = logits.rows(), C = logits.shape[1];
    check_labels(labels, B, C);
    LossAndGrad out{0.0, Tensor(logits.shape)};
    const double inv_b = 1.0 / static_cast<double>(B);
    for (std::size_t b = 0; b < B; ++b) {
        auto z = logits.row(b);
        auto g = out.dlogits.row(b);
        const double m = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            g[c] = std::exp(z[c] - m);
            sum += g[c];
        }
        const double log_sum = std::log(sum);
        out.loss += (log_sum - (z[labels[b]] - m));
        for (std::size_t c = 0; c < C; ++c) g[c] = g[c] / sum * inv_b;
        g[labels[b]] -= inv_b;
    }
    out.loss *= inv_b;
    if (!std::isfinite(out.loss)) throw DivergenceError("non-finite loss");
    return out;
}

double cross_entropy_sum(const Tensor& logits, std::span<const int> labels) {
    if (logits.rank() != 2 || logits.rows() == 0) throw ShapeError("logits must be [B,C] with B >= 1");
    const std::size_t B = logits.rows(), C = logits.shape[1];
    check_labels(labels, B, C);
    double total = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        auto z = logits.row(b);
        const double m = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double v : z) sum += std::exp(v - m);
        total += std::log(sum) - (z[labels[b]] - m);
    }
    if (!std::isfinite(total)) throw DivergenceError("non-finite loss");
    return total;
}

BackwardResult backward(const ModelSpec& spec, const ParamVector& params, const Tensor& batch,
                        std::span<const int> labels) {
    Tape tape;
    Tensor logits = run_forward(spec, params, batch, &tape);
    LossAndGrad lg = softmax_cross_entropy(logits, labels);

    const std::size_t B = batch.rows();
    ParamVector grads = ParamVector::zeros(spec);
    std::vector<double> dy = std::move(lg.dlogits.data), dx;
    for (std::size_t i = spec.layers().size(); i-- > 0;) {
        const Layer& l = spec.layers()[i];
        const Shape& in = spec.shapes()[i];
        const std::vector<double>& x = tape.values[i];
        // Input gradients are not needed below the first layer.
        std::vector<double>* dx_out = i > 0 ? &dx : nullptr;
        const LayerParams p = layer_params(spec, params.values, i);
        std::span<double> gflat(grads.values);
        const std::size_t off = spec.param_offset(i);
        const std::size_t nw = p.weights.size();
        auto dw = gflat.subspan(off, nw);
        auto db = gflat.subspan(off + nw, p.bias.size());
        if (auto* d = std::get_if<layer::Dense>(&l)) {
            dense_backward(*d, p, B, x, dy, dw, db, dx_out);
        } else if (auto* c = std::get_if<layer::Conv3x3>(&l)) {
            conv_backward(*c, p, B, in[1], in[2], x, dy, dw, db, dx_out);
        } else if (std::holds_alternative<layer::ReLU>(l)) {
            if (dx_out) {
                dx.resize(dy.size());
                for (std::size_t k = 0; k < dy.size(); ++k) dx[k] = x[k] > 0.0 ? dy[k] : 0.0;
            }
        } else if (std::holds_alternative<layer::MaxPool2x2>(l)) {
            if (dx_out) {
                dx.assign(x.size(), 0.0);
                const auto& idx = tape.pool_index[i];
                for (std::size_t k = 0; k < dy.size(); ++k) dx[idx[k]] += dy[k];
            }
        } else if (dx_out) {
            dx = dy;
        }
        if (dx_out) std::swap(dx, dy);
    }
    for (double g : grads.values)
        if (!std::isfinite(g)) throw DivergenceError("non-finite gradient");
    return {lg.loss, std::move(grads), std::move(logits)};
}

std::size_t argmax(std::span<const double> row) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
        if (row[c] > row[best]) best = c;
    return best;
}

std::size_t count_correct(const Tensor& logits, std::span<const int> labels) {
    if (logits.rank() != 2) throw ShapeError("logits must be [B,C]");
    check_labels(labels, logits.rows(), logits.shape[1]);
    std::size_t correct = 0;
    for (std::size_t b = 0; b < logits.rows(); ++b)
        if (argmax(logits.row(b)) == static_cast<std::size_t>(labels[b])) ++correct;
    return correct;
}

double accuracy(const Tensor& logits, std::span<const int> labels) {
    if (logits.rows() == 0) throw ShapeError("accuracy of an empty batch");
    return static_cast<double>(count_correct(logits, labels)) / static_cast<double>(logits.rows());
}

}  // namespace gapl
