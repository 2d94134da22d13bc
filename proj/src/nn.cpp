// SPDX-License-Identifier: Apache-2.0

#include "csiloc/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Core>

#include "csiloc/errors.hpp"

namespace csiloc::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using ConstMapVec = Eigen::Map<const Eigen::VectorXd>;
using MapVec = Eigen::Map<Eigen::VectorXd>;

bool has_params(LayerKind k)
{
    return k == LayerKind::fully_connected || k == LayerKind::linear_output || k == LayerKind::conv2d;
}

// Spatial geometry of a conv layer for one sample.
struct ConvGeom {
    std::size_t cin, h, w, cout, k, pad, ho, wo;
};

ConvGeom conv_geom(const Layer& l)
{
    ConvGeom g{};
    g.cin = l.in_shape[0];
    g.h = l.in_shape[1];
    g.w = l.in_shape[2];
    g.cout = l.out_shape[0];
    g.k = l.spec.kernel;
    g.pad = l.spec.padding;
    g.ho = l.out_shape[1];
    g.wo = l.out_shape[2];
    return g;
}

void im2col(const ConvGeom& g, const double* in, RowMat& cols)
{
    cols.resize(static_cast<Eigen::Index>(g.cin * g.k * g.k), static_cast<Eigen::Index>(g.ho * g.wo));
    double* out = cols.data();
    for (std::size_t c = 0; c < g.cin; ++c) {
        const double* plane = in + c * g.h * g.w;
        for (std::size_t ki = 0; ki < g.k; ++ki) {
            for (std::size_t kj = 0; kj < g.k; ++kj) {
                for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy + ki) - static_cast<std::ptrdiff_t>(g.pad);
                    const bool row_ok = iy >= 0 && iy < static_cast<std::ptrdiff_t>(g.h);
                    for (std::size_t ox = 0; ox < g.wo; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox + kj) - static_cast<std::ptrdiff_t>(g.pad);
                        *out++ = (row_ok && ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w))
                                     ? plane[static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)]
                                     : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_add(const ConvGeom& g, const RowMat& cols, double* din)
{
    const double* src = cols.data();
    for (std::size_t c = 0; c < g.cin; ++c) {
        double* plane = din + c * g.h * g.w;
        for (std::size_t ki = 0; ki < g.k; ++ki) {
            for (std::size_t kj = 0; kj < g.k; ++kj) {
                for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy + ki) - static_cast<std::ptrdiff_t>(g.pad);
                    const bool row_ok = iy >= 0 && iy < static_cast<std::ptrdiff_t>(g.h);
                    for (std::size_t ox = 0; ox < g.wo; ++ox, ++src) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox + kj) - static_cast<std::ptrdiff_t>(g.pad);
                        if (row_ok && ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) {
                            plane[static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)] += *src;
                        }
                    }
                }
            }
        }
    }
}

// Index (within the sample's input) of the maximum of pooling window (c, oy, ox). First max wins.
std::size_t pool_argmax(const double* in, std::size_t h, std::size_t w, std::size_t c, std::size_t oy, std::size_t ox)
{
    std::size_t best = (c * h + 2 * oy) * w + 2 * ox;
    for (std::size_t dy = 0; dy < 2; ++dy) {
        for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (c * h + 2 * oy + dy) * w + 2 * ox + dx;
            if (in[idx] > in[best]) {
                best = idx;
            }
        }
    }
    return best;
}

void softmax_rows(const double* in, double* out, std::size_t rows, std::size_t k)
{
    for (std::size_t b = 0; b < rows; ++b) {
        const double* x = in + b * k;
        double* y = out + b * k;
        const double m = *std::max_element(x, x + k);
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            y[j] = std::exp(x[j] - m);
            sum += y[j];
        }
        for (std::size_t j = 0; j < k; ++j) {
            y[j] /= sum;
        }
    }
}

Tensor layer_forward(const Layer& l, const Tensor& in, std::size_t batch, Mode mode, Rng* rng,
                     std::vector<double>* dropout_scale)
{
    std::vector<std::size_t> shape{batch};
    shape.insert(shape.end(), l.out_shape.begin(), l.out_shape.end());
    Tensor out(std::move(shape));
    const std::size_t in_size = shape_size(l.in_shape);
    const std::size_t out_size = shape_size(l.out_shape);

    switch (l.spec.kind) {
    case LayerKind::fully_connected:
    case LayerKind::linear_output: {
        ConstMapMat x(in.values.data(), static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(in_size));
        ConstMapMat wt(l.weights.data(), static_cast<Eigen::Index>(out_size), static_cast<Eigen::Index>(in_size));
        ConstMapVec b(l.bias.data(), static_cast<Eigen::Index>(out_size));
        MapMat y(out.values.data(), static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(out_size));
        y.noalias() = x * wt.transpose();
        y.rowwise() += b.transpose();
        break;
    }
    case LayerKind::conv2d: {
        const auto g = conv_geom(l);
        ConstMapMat wt(l.weights.data(), static_cast<Eigen::Index>(g.cout), static_cast<Eigen::Index>(g.cin * g.k * g.k));
        ConstMapVec b(l.bias.data(), static_cast<Eigen::Index>(g.cout));
        RowMat cols;
        for (std::size_t s = 0; s < batch; ++s) {
            im2col(g, in.values.data() + s * in_size, cols);
            MapMat y(out.values.data() + s * out_size, static_cast<Eigen::Index>(g.cout),
                     static_cast<Eigen::Index>(g.ho * g.wo));
            y.noalias() = wt * cols;
            y.colwise() += b;
        }
        break;
    }
    case LayerKind::max_pool: {
        const std::size_t c = l.in_shape[0], h = l.in_shape[1], w = l.in_shape[2];
        const std::size_t ho = l.out_shape[1], wo = l.out_shape[2];
        for (std::size_t s = 0; s < batch; ++s) {
            const double* x = in.values.data() + s * in_size;
            double* y = out.values.data() + s * out_size;
            for (std::size_t ch = 0; ch < c; ++ch) {
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        y[(ch * ho + oy) * wo + ox] = x[pool_argmax(x, h, w, ch, oy, ox)];
                    }
                }
            }
        }
        break;
    }
    case LayerKind::relu:
        std::transform(in.values.begin(), in.values.end(), out.values.begin(),
                       [](double v) { return v > 0.0 ? v : 0.0; });
        break;
    case LayerKind::dropout:
        if (mode == Mode::eval || l.spec.rate == 0.0) {
            out.values = in.values;
            if (dropout_scale) {
                dropout_scale->assign(in.values.size(), 1.0);
            }
            break;
        }
        if (!rng) {
            throw StateError("dropout in train mode needs a random source");
        }
        {
            const double keep_scale = 1.0 / (1.0 - l.spec.rate);
            std::vector<double> local;
            auto& scale = dropout_scale ? *dropout_scale : local;
            scale.resize(in.values.size());
            for (std::size_t i = 0; i < in.values.size(); ++i) {
                scale[i] = rng->uniform() < l.spec.rate ? 0.0 : keep_scale;
                out.values[i] = in.values[i] * scale[i];
            }
        }
        break;
    case LayerKind::softmax_output:
        softmax_rows(in.values.data(), out.values.data(), batch, in_size);
        break;
    }
    return out;
}

Tensor layer_backward(const Layer& l, const Tensor& in, const Tensor& grad_out, const std::vector<double>& dropout_scale,
                      const Tensor& layer_out, std::vector<double>& gw, std::vector<double>& gb)
{
    const std::size_t batch = in.shape[0];
    const std::size_t in_size = shape_size(l.in_shape);
    const std::size_t out_size = shape_size(l.out_shape);
    Tensor grad_in(in.shape);

    switch (l.spec.kind) {
    case LayerKind::fully_connected:
    case LayerKind::linear_output: {
        ConstMapMat x(in.values.data(), static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(in_size));
        ConstMapMat dy(grad_out.values.data(), static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(out_size));
        ConstMapMat wt(l.weights.data(), static_cast<Eigen::Index>(out_size), static_cast<Eigen::Index>(in_size));
        MapMat dw(gw.data(), static_cast<Eigen::Index>(out_size), static_cast<Eigen::Index>(in_size));
        MapVec db(gb.data(), static_cast<Eigen::Index>(out_size));
        MapMat dx(grad_in.values.data(), static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(in_size));
        dw.noalias() += dy.transpose() * x;
        db += dy.colwise().sum().transpose();
        dx.noalias() = dy * wt;
        break;
    }
    case LayerKind::conv2d: {
        const auto g = conv_geom(l);
        const auto kk = static_cast<Eigen::Index>(g.cin * g.k * g.k);
        ConstMapMat wt(l.weights.data(), static_cast<Eigen::Index>(g.cout), kk);
        MapMat dw(gw.data(), static_cast<Eigen::Index>(g.cout), kk);
        MapVec db(gb.data(), static_cast<Eigen::Index>(g.cout));
        RowMat cols;
        RowMat dcols;
        for (std::size_t s = 0; s < batch; ++s) {
            im2col(g, in.values.data() + s * in_size, cols);
            ConstMapMat dy(grad_out.values.data() + s * out_size, static_cast<Eigen::Index>(g.cout),
                           static_cast<Eigen::Index>(g.ho * g.wo));
            dw.noalias() += dy * cols.transpose();
            db += dy.rowwise().sum();
            dcols.noalias() = wt.transpose() * dy;
            col2im_add(g, dcols, grad_in.values.data() + s * in_size);
        }
        break;
    }
    case LayerKind::max_pool: {
        const std::size_t c = l.in_shape[0], h = l.in_shape[1], w = l.in_shape[2];
        const std::size_t ho = l.out_shape[1], wo = l.out_shape[2];
        for (std::size_t s = 0; s < batch; ++s) {
            const double* x = in.values.data() + s * in_size;
            const double* dy = grad_out.values.data() + s * out_size;
            double* dx = grad_in.values.data() + s * in_size;
            for (std::size_t ch = 0; ch < c; ++ch) {
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        dx[pool_argmax(x, h, w, ch, oy, ox)] += dy[(ch * ho + oy) * wo + ox];
                    }
                }
            }
        }
        break;
    }
    case LayerKind::relu:
        for (std::size_t i = 0; i < in.values.size(); ++i) {
            grad_in.values[i] = in.values[i] > 0.0 ? grad_out.values[i] : 0.0;
        }
        break;
    case LayerKind::dropout:
        for (std::size_t i = 0; i < in.values.size(); ++i) {
            grad_in.values[i] = grad_out.values[i] * dropout_scale[i];
        }
        break;
    case LayerKind::softmax_output:
        for (std::size_t b = 0; b < batch; ++b) {
            const double* y = layer_out.values.data() + b * out_size;
            const double* dy = grad_out.values.data() + b * out_size;
            double dot = 0.0;
            for (std::size_t j = 0; j < out_size; ++j) {
                dot += y[j] * dy[j];
            }
            for (std::size_t j = 0; j < out_size; ++j) {
                grad_in.values[b * out_size + j] = y[j] * (dy[j] - dot);
            }
        }
        break;
    }
    return grad_in;
}

} // namespace

// --- Tensor ----------------------------------------------------------------------------------

Tensor::Tensor(std::vector<std::size_t> s) : shape(std::move(s)), values(shape_size(shape), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> v) : shape(std::move(s)), values(std::move(v))
{
    if (values.size() != shape_size(shape)) {
        throw DomainError("tensor value count " + std::to_string(values.size()) + " does not match shape " +
                          shape_string(shape));
    }
}

std::size_t shape_size(std::span<const std::size_t> shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(std::span<const std::size_t> shape)
{
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        s += (i ? "x" : "") + std::to_string(shape[i]);
    }
    return s + "]";
}

std::string to_string(LayerKind kind)
{
    switch (kind) {
    case LayerKind::fully_connected: return "fully_connected";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::max_pool: return "max_pool";
    case LayerKind::relu: return "relu";
    case LayerKind::dropout: return "dropout";
    case LayerKind::linear_output: return "linear_output";
    case LayerKind::softmax_output: return "softmax_output";
    }
    return "unknown";
}

// --- LayerSpec -------------------------------------------------------------------------------

LayerSpec LayerSpec::fully_connected(std::size_t in, std::size_t out)
{
    LayerSpec s;
    s.kind = LayerKind::fully_connected;
    s.fan_in = in;
    s.fan_out = out;
    return s;
}

LayerSpec LayerSpec::linear_output(std::size_t in, std::size_t out)
{
    auto s = fully_connected(in, out);
    s.kind = LayerKind::linear_output;
    return s;
}

LayerSpec LayerSpec::conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel)
{
    LayerSpec s;
    s.kind = LayerKind::conv2d;
    s.in_channels = in_channels;
    s.out_channels = out_channels;
    s.kernel = kernel;
    s.padding = (kernel - 1) / 2;
    return s;
}

LayerSpec LayerSpec::max_pool()
{
    LayerSpec s;
    s.kind = LayerKind::max_pool;
    return s;
}

LayerSpec LayerSpec::relu()
{
    return LayerSpec{};
}

LayerSpec LayerSpec::dropout(double rate)
{
    LayerSpec s;
    s.kind = LayerKind::dropout;
    s.rate = rate;
    return s;
}

LayerSpec LayerSpec::softmax_output()
{
    LayerSpec s;
    s.kind = LayerKind::softmax_output;
    return s;
}

// --- Network ---------------------------------------------------------------------------------

Network::Network(std::vector<std::size_t> input_shape, std::vector<LayerSpec> specs)
    : input_shape_(std::move(input_shape))
{
    if (input_shape_.empty() || shape_size(input_shape_) == 0) {
        throw DomainError("network input shape must be non-empty");
    }
    std::vector<std::size_t> shape = input_shape_;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& spec = specs[i];
        Layer l;
        l.spec = spec;
        l.in_shape = shape;
        const std::string where = "layer " + std::to_string(i) + " (" + to_string(spec.kind) + "): ";
        switch (spec.kind) {
        case LayerKind::fully_connected:
        case LayerKind::linear_output:
            if (shape_size(shape) != spec.fan_in || spec.fan_out == 0) {
                throw DomainError(where + "fan_in " + std::to_string(spec.fan_in) + " does not match input " +
                                  shape_string(shape));
            }
            l.out_shape = {spec.fan_out};
            l.weights.assign(spec.fan_in * spec.fan_out, 0.0);
            l.bias.assign(spec.fan_out, 0.0);
            break;
        case LayerKind::conv2d: {
            if (shape.size() != 3 || shape[0] != spec.in_channels || spec.out_channels == 0 || spec.kernel == 0) {
                throw DomainError(where + "expects [" + std::to_string(spec.in_channels) + " x H x W] input, got " +
                                  shape_string(shape));
            }
            if (shape[1] + 2 * spec.padding < spec.kernel || shape[2] + 2 * spec.padding < spec.kernel) {
                throw DomainError(where + "kernel larger than padded input");
            }
            l.out_shape = {spec.out_channels, shape[1] + 2 * spec.padding - spec.kernel + 1,
                           shape[2] + 2 * spec.padding - spec.kernel + 1};
            l.weights.assign(spec.out_channels * spec.in_channels * spec.kernel * spec.kernel, 0.0);
            l.bias.assign(spec.out_channels, 0.0);
            break;
        }
        case LayerKind::max_pool:
            if (shape.size() != 3 || shape[1] < 2 || shape[2] < 2) {
                throw DomainError(where + "expects [C x H x W] input with H, W >= 2, got " + shape_string(shape));
            }
            l.out_shape = {shape[0], shape[1] / 2, shape[2] / 2};
            break;
        case LayerKind::dropout:
            if (!(spec.rate >= 0.0 && spec.rate < 1.0)) {
                throw DomainError(where + "rate must lie in [0, 1)");
            }
            l.out_shape = shape;
            break;
        case LayerKind::relu:
            l.out_shape = shape;
            break;
        case LayerKind::softmax_output:
            if (shape.size() != 1 || shape[0] < 2) {
                throw DomainError(where + "expects a vector of at least 2 logits, got " + shape_string(shape));
            }
            l.out_shape = shape;
            break;
        }
        shape = l.out_shape;
        layers_.push_back(std::move(l));
    }
}

void Network::initialize(std::uint64_t seed)
{
    Rng rng(derive_seed(seed, std::uint64_t{0x696e6974}));
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        auto& l = layers_[i];
        if (!has_params(l.spec.kind)) {
            continue;
        }
        std::size_t fan_in = l.spec.fan_in;
        std::size_t fan_out = l.spec.fan_out;
        if (l.spec.kind == LayerKind::conv2d) {
            fan_in = l.spec.in_channels * l.spec.kernel * l.spec.kernel;
            fan_out = l.spec.out_channels * l.spec.kernel * l.spec.kernel;
        }
        const bool feeds_relu = i + 1 < layers_.size() && layers_[i + 1].spec.kind == LayerKind::relu;
        const double limit = feeds_relu ? std::sqrt(6.0 / static_cast<double>(fan_in))
                                        : std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (auto& w : l.weights) {
            w = rng.uniform(-limit, limit);
        }
        std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
}

std::vector<std::size_t> Network::output_shape() const
{
    return layers_.empty() ? input_shape_ : layers_.back().out_shape;
}

std::size_t Network::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& l : layers_) {
        n += l.weights.size() + l.bias.size();
    }
    return n;
}

Tensor Network::forward(const Tensor& input, Mode mode, Rng* rng) const
{
    const bool single = input.shape == input_shape_;
    Tensor batch = input;
    if (single) {
        batch.shape.insert(batch.shape.begin(), 1);
    }
    const bool batched_ok = batch.shape.size() == input_shape_.size() + 1 &&
                            std::equal(input_shape_.begin(), input_shape_.end(), batch.shape.begin() + 1);
    if (!batched_ok || batch.values.size() != shape_size(batch.shape)) {
        throw DomainError("network input shape " + shape_string(input.shape) + " does not match declared " +
                          shape_string(input_shape_));
    }
    const std::size_t b = batch.shape[0];
    for (const auto& l : layers_) {
        batch = layer_forward(l, batch, b, mode, rng, nullptr);
    }
    if (single) {
        batch.shape.erase(batch.shape.begin());
    }
    return batch;
}

void Network::forward_traced(const Tensor& batch, Mode mode, Rng* rng, std::size_t layer_end, ForwardTrace& trace) const
{
    if (batch.shape.size() != input_shape_.size() + 1 ||
        !std::equal(input_shape_.begin(), input_shape_.end(), batch.shape.begin() + 1)) {
        throw DomainError("batch shape " + shape_string(batch.shape) + " does not match declared input " +
                          shape_string(input_shape_));
    }
    layer_end = std::min(layer_end, layers_.size());
    const std::size_t b = batch.shape[0];
    trace.inputs.assign(layer_end, Tensor{});
    trace.dropout_scale.assign(layer_end, {});
    Tensor x = batch;
    for (std::size_t i = 0; i < layer_end; ++i) {
        auto* scale = layers_[i].spec.kind == LayerKind::dropout ? &trace.dropout_scale[i] : nullptr;
        Tensor y = layer_forward(layers_[i], x, b, mode, rng, scale);
        trace.inputs[i] = std::move(x);
        x = std::move(y);
    }
    trace.output = std::move(x);
}

Tensor Network::backward(const ForwardTrace& trace, const Tensor& grad_output, Gradients& grads) const
{
    Tensor grad = grad_output;
    const std::size_t n = trace.inputs.size();
    for (std::size_t i = n; i-- > 0;) {
        const Tensor& out = i + 1 < n ? trace.inputs[i + 1] : trace.output;
        grad = layer_backward(layers_[i], trace.inputs[i], grad, trace.dropout_scale[i], out, grads.weights[i], grads.bias[i]);
    }
    return grad;
}

Gradients Network::zero_gradients() const
{
    Gradients g;
    for (const auto& l : layers_) {
        g.weights.emplace_back(l.weights.size(), 0.0);
        g.bias.emplace_back(l.bias.size(), 0.0);
    }
    return g;
}

void Network::save(ByteWriter& w) const
{
    w.put(static_cast<std::uint32_t>(input_shape_.size()));
    for (auto d : input_shape_) {
        w.put(static_cast<std::uint32_t>(d));
    }
    w.put(static_cast<std::uint32_t>(layers_.size()));
    for (const auto& l : layers_) {
        w.put(static_cast<std::uint8_t>(l.spec.kind));
        w.put(static_cast<std::uint32_t>(l.spec.fan_in));
        w.put(static_cast<std::uint32_t>(l.spec.fan_out));
        w.put(static_cast<std::uint32_t>(l.spec.in_channels));
        w.put(static_cast<std::uint32_t>(l.spec.out_channels));
        w.put(static_cast<std::uint32_t>(l.spec.kernel));
        w.put(static_cast<std::uint32_t>(l.spec.padding));
        w.put(l.spec.rate);
        w.put(static_cast<std::uint32_t>(l.weights.size()));
        for (double v : l.weights) {
            w.put(v);
        }
        w.put(static_cast<std::uint32_t>(l.bias.size()));
        for (double v : l.bias) {
            w.put(v);
        }
    }
}

Network Network::load(ByteReader& r)
{
    const auto rank = r.get<std::uint32_t>("input rank");
    std::vector<std::size_t> input_shape;
    for (std::uint32_t i = 0; i < rank; ++i) {
        input_shape.push_back(r.get<std::uint32_t>("input dimension"));
    }
    const auto n_layers = r.get<std::uint32_t>("layer count");
    std::vector<LayerSpec> specs;
    std::vector<std::pair<std::vector<double>, std::vector<double>>> params;
    std::vector<std::size_t> offsets;
    for (std::uint32_t i = 0; i < n_layers; ++i) {
        LayerSpec s;
        const std::size_t kind_at = r.offset();
        const auto kind = r.get<std::uint8_t>("layer kind");
        if (kind > static_cast<std::uint8_t>(LayerKind::softmax_output)) {
            throw ParseError("unknown layer kind " + std::to_string(kind), kind_at);
        }
        s.kind = static_cast<LayerKind>(kind);
        s.fan_in = r.get<std::uint32_t>("fan_in");
        s.fan_out = r.get<std::uint32_t>("fan_out");
        s.in_channels = r.get<std::uint32_t>("in_channels");
        s.out_channels = r.get<std::uint32_t>("out_channels");
        s.kernel = r.get<std::uint32_t>("kernel");
        s.padding = r.get<std::uint32_t>("padding");
        s.rate = r.get<double>("dropout rate");
        std::vector<double> weights(r.get<std::uint32_t>("weight count"));
        for (auto& v : weights) {
            v = r.get<double>("weight");
        }
        std::vector<double> bias(r.get<std::uint32_t>("bias count"));
        for (auto& v : bias) {
            v = r.get<double>("bias");
        }
        specs.push_back(s);
        params.emplace_back(std::move(weights), std::move(bias));
        offsets.push_back(kind_at);
    }

    Network net;
    if (input_shape.empty() && specs.empty()) {
        return net;
    }
    try {
        net = Network(std::move(input_shape), std::move(specs));
    } catch (const DomainError& e) {
        throw ParseError(std::string("inconsistent network description: ") + e.what(), offsets.empty() ? 0 : offsets[0]);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& l = net.layers_[i];
        if (params[i].first.size() != l.weights.size() || params[i].second.size() != l.bias.size()) {
            throw ParseError("parameter count mismatch in layer " + std::to_string(i), offsets[i]);
        }
        l.weights = std::move(params[i].first);
        l.bias = std::move(params[i].second);
    }
    return net;
}

bool operator==(const Network& a, const Network& b)
{
    if (a.input_shape_ != b.input_shape_ || a.layers_.size() != b.layers_.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.layers_.size(); ++i) {
        const auto& x = a.layers_[i];
        const auto& y = b.layers_[i];
        if (!(x.spec == y.spec) || x.weights != y.weights || x.bias != y.bias) {
            return false;
        }
    }
    return true;
}

// --- losses ----------------------------------------------------------------------------------

LossResult mde_loss(const Tensor& predictions, const Tensor& labels)
{
    if (predictions.shape.size() != 2 || predictions.shape != labels.shape || predictions.shape[0] == 0) {
        throw DomainError("mde_loss: predictions " + shape_string(predictions.shape) + " and labels " +
                          shape_string(labels.shape) + " must both be [B x D] with B >= 1");
    }
    const std::size_t batch = predictions.shape[0];
    const std::size_t dim = predictions.shape[1];
    LossResult r;
    r.gradient = Tensor(predictions.shape);
    for (std::size_t b = 0; b < batch; ++b) {
        double sq = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            const double diff = predictions[b * dim + d] - labels[b * dim + d];
            sq += diff * diff;
        }
        const double dist = std::sqrt(sq);
        r.loss += dist;
        if (dist >= 1e-12) {
            for (std::size_t d = 0; d < dim; ++d) {
                r.gradient[b * dim + d] =
                    (predictions[b * dim + d] - labels[b * dim + d]) / (static_cast<double>(batch) * dist);
            }
        }
    }
    r.loss /= static_cast<double>(batch);
    return r;
}

Tensor softmax(const Tensor& logits)
{
    if (logits.shape.empty()) {
        throw DomainError("softmax: empty shape");
    }
    const std::size_t k = logits.shape.back();
    Tensor out(logits.shape);
    softmax_rows(logits.values.data(), out.values.data(), logits.size() / k, k);
    return out;
}

LossResult cross_entropy_loss(const Tensor& logits, std::span<const std::size_t> class_index)
{
    if (logits.shape.size() != 2 || logits.shape[1] < 2 || logits.shape[0] != class_index.size() || logits.shape[0] == 0) {
        throw DomainError("cross_entropy_loss: logits " + shape_string(logits.shape) + " with " +
                          std::to_string(class_index.size()) + " class indices");
    }
    const std::size_t batch = logits.shape[0];
    const std::size_t k = logits.shape[1];
    LossResult r;
    r.gradient = softmax(logits);
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t c = class_index[b];
        if (c >= k) {
            throw DomainError("cross_entropy_loss: class index " + std::to_string(c) + " out of range for " +
                              std::to_string(k) + " classes");
        }
        // log-sum-exp form keeps the loss finite for extreme logits
        const double* x = logits.values.data() + b * k;
        const double m = *std::max_element(x, x + k);
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            sum += std::exp(x[j] - m);
        }
        r.loss += m + std::log(sum) - x[c];
        r.gradient[b * k + c] -= 1.0;
    }
    const double inv = 1.0 / static_cast<double>(batch);
    r.loss *= inv;
    for (auto& g : r.gradient.values) {
        g *= inv;
    }
    return r;
}

// --- training --------------------------------------------------------------------------------

std::string to_string(Optimizer o)
{
    return o == Optimizer::adam ? "adam" : "sgd_momentum";
}

Optimizer parse_optimizer(const std::string& s)
{
    if (s == "adam") return Optimizer::adam;
    if (s == "sgd_momentum") return Optimizer::sgd_momentum;
    throw ConfigError("unknown optimizer '" + s + "'");
}

void TrainConfig::validate() const
{
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning_rate must be finite and non-negative");
    }
    if (batch_size < 1) {
        throw ConfigError("batch_size must be >= 1");
    }
    if (!(alpha >= -1.0 && alpha <= 1.0)) {
        throw ConfigError("alpha must lie in [-1, 1]");
    }
}

std::size_t TrainingSet::count() const
{
    const std::size_t n = shape_size(sample_shape);
    return n == 0 ? 0 : inputs.size() / n;
}

namespace {

class OptimizerState {
public:
    OptimizerState(const Network& net, const TrainConfig& cfg) : cfg_(cfg), m_(net.zero_gradients()), v_(net.zero_gradients()) {}

    void step(Network& net, const Gradients& g)
    {
        ++t_;
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
        auto update = [&](std::vector<double>& p, const std::vector<double>& grad, std::vector<double>& m, std::vector<double>& v) {
            if (cfg_.optimizer == Optimizer::adam) {
                for (std::size_t i = 0; i < p.size(); ++i) {
                    m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
                    v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
                    p[i] -= cfg_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
                }
            } else {
                for (std::size_t i = 0; i < p.size(); ++i) {
                    m[i] = cfg_.momentum * m[i] + grad[i];
                    p[i] -= cfg_.learning_rate * m[i];
                }
            }
        };
        for (std::size_t l = 0; l < net.layer_count(); ++l) {
            auto& layer = net.layer(l);
            update(layer.weights, g.weights[l], m_.weights[l], v_.weights[l]);
            update(layer.bias, g.bias[l], m_.bias[l], v_.bias[l]);
        }
    }

private:
    const TrainConfig& cfg_;
    Gradients m_;
    Gradients v_;
    std::uint64_t t_ = 0;
};

} // namespace

TrainResult train(Network& network, const TrainingSet& data, LossKind loss, const TrainConfig& config)
{
    config.validate();
    if (data.sample_shape != network.input_shape()) {
        throw DomainError("training samples " + shape_string(data.sample_shape) + " do not match network input " +
                          shape_string(network.input_shape()));
    }
    const std::size_t n = data.count();
    const std::size_t sample_size = shape_size(data.sample_shape);
    if (n == 0 || data.inputs.size() != n * sample_size) {
        throw DomainError("training set is empty or ragged");
    }

    std::size_t layer_end = network.layer_count();
    const auto out_shape = network.output_shape();
    if (loss == LossKind::cross_entropy) {
        if (data.classes.size() != n) {
            throw DomainError("cross-entropy training needs one class index per sample");
        }
        if (layer_end > 0 && network.layer(layer_end - 1).spec.kind == LayerKind::softmax_output) {
            --layer_end;
        }
    } else {
        if (out_shape.size() != 1 || data.target_dim != out_shape[0] || data.targets.size() != n * data.target_dim) {
            throw DomainError("regression targets do not match network output " + shape_string(out_shape));
        }
        if (loss == LossKind::augmented_mde && !data.perturbation_norms.empty() && data.perturbation_norms.size() != n) {
            throw DomainError("perturbation norms must be empty or one per sample");
        }
    }

    Rng shuffle_rng(derive_seed(config.seed, std::uint64_t{1}));
    Rng dropout_rng(derive_seed(config.seed, std::uint64_t{2}));
    const Mode mode = config.dropout_active ? Mode::train : Mode::eval;
    OptimizerState opt(network, config);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult result;
    ForwardTrace trace;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(std::span(order));
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t b = std::min(config.batch_size, n - start);
            std::vector<std::size_t> shape{b};
            shape.insert(shape.end(), data.sample_shape.begin(), data.sample_shape.end());
            Tensor x(std::move(shape));
            for (std::size_t i = 0; i < b; ++i) {
                const auto src = data.inputs.begin() + static_cast<std::ptrdiff_t>(order[start + i] * sample_size);
                std::copy(src, src + static_cast<std::ptrdiff_t>(sample_size), x.values.begin() + static_cast<std::ptrdiff_t>(i * sample_size));
            }
            network.forward_traced(x, mode, &dropout_rng, layer_end, trace);

            LossResult lr;
            if (loss == LossKind::cross_entropy) {
                std::vector<std::size_t> cls(b);
                for (std::size_t i = 0; i < b; ++i) {
                    cls[i] = data.classes[order[start + i]];
                }
                lr = cross_entropy_loss(trace.output, cls);
            } else {
                Tensor y({b, data.target_dim});
                double pert = 0.0;
                for (std::size_t i = 0; i < b; ++i) {
                    const std::size_t idx = order[start + i];
                    std::copy_n(data.targets.begin() + static_cast<std::ptrdiff_t>(idx * data.target_dim), data.target_dim,
                                y.values.begin() + static_cast<std::ptrdiff_t>(i * data.target_dim));
                    if (!data.perturbation_norms.empty()) {
                        pert += data.perturbation_norms[idx];
                    }
                }
                lr = mde_loss(trace.output, y);
                if (loss == LossKind::augmented_mde) {
                    lr.loss += config.alpha * pert / static_cast<double>(b);
                }
            }
            if (!std::isfinite(lr.loss)) {
                throw TrainingError(epoch, batches, "loss is not finite");
            }
            auto grads = network.zero_gradients();
            network.backward(trace, lr.gradient, grads);
            opt.step(network, grads);
            loss_sum += lr.loss;
            ++batches;
        }
        result.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
    }
    return result;
}

// --- checkpoints -----------------------------------------------------------------------------

void save_network(const Network& network, const std::filesystem::path& path)
{
    ByteWriter w;
    w.put_bytes("NNM1");
    w.put(kCheckpointVersion);
    network.save(w);
    write_file_atomic(path, w.bytes());
}

Network load_network(const std::filesystem::path& path)
{
    const auto bytes = read_file_bytes(path);
    ByteReader r(bytes);
    r.expect_magic("NNM1");
    const std::size_t at = r.offset();
    if (const auto v = r.get<std::uint16_t>("version"); v != kCheckpointVersion) {
        throw ParseError("unsupported checkpoint version " + std::to_string(v), at);
    }
    auto net = Network::load(r);
    if (r.remaining() != 0) {
        throw ParseError("trailing bytes after network", r.offset());
    }
    return net;
}

} // namespace csiloc::nn
