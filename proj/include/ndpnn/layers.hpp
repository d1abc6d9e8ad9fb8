#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <variant>
#include <vector>

#include "ndpnn/errors.hpp"
#include "ndpnn/tensor.hpp"

namespace ndpnn {

enum class Activation { identity, relu, softmax };

inline const char* activation_name(Activation a) {
    switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::softmax: return "softmax";
    }
    return "?";
}

inline Activation parse_activation(const std::string& name) {
    if (name == "identity") return Activation::identity;
    if (name == "relu") return Activation::relu;
    if (name == "softmax") return Activation::softmax;
    throw std::invalid_argument("unknown activation: " + name);
}

/// Numerically-stable softmax over a rank-1 tensor.
template <typename Scalar>
void softmax_inplace(Tensor<Scalar>& v) {
    Scalar mx = v[0];
    for (std::size_t i = 1; i < v.size(); ++i) mx = std::max(mx, v[i]);
    Scalar sum = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = std::exp(v[i] - mx);
        sum += v[i];
    }
    for (std::size_t i = 0; i < v.size(); ++i) v[i] /= sum;
}

template <typename Scalar>
void apply_activation(Tensor<Scalar>& t, Activation act) {
    switch (act) {
    case Activation::identity: return;
    case Activation::relu:
        for (std::size_t i = 0; i < t.size(); ++i)
            if (t[i] < Scalar(0)) t[i] = Scalar(0);
        return;
    case Activation::softmax:
        if (t.rank() != 1) throw shape_error("softmax is reserved for the rank-1 head output");
        softmax_inplace(t);
        return;
    }
}

/// Convolution layer whose output is f(sum_d W_d * Y^d + b): one kernel bank
/// per Hadamard power of the input up to `degree`. degree == 1 is a plain
/// convolution layer.
template <typename Scalar>
struct PolyConvLayer {
    int spatial_rank = 2;
    int degree = 1;
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::vector<std::size_t> kernel_extents;   // spatial_rank entries
    std::vector<Tensor<Scalar>> weights;       // [degree] banks, each (out, in, K...)
    std::vector<Scalar> bias;                  // [out]
    Activation activation = Activation::relu;

    std::vector<std::size_t> bank_shape() const {
        std::vector<std::size_t> s{out_channels, in_channels};
        s.insert(s.end(), kernel_extents.begin(), kernel_extents.end());
        return s;
    }

    void validate() const {
        if (degree < 1) throw std::invalid_argument("poly conv: degree must be >= 1");
        if (spatial_rank < 1 || spatial_rank > 3)
            throw std::invalid_argument("poly conv: spatial rank must be 1, 2 or 3");
        if (kernel_extents.size() != static_cast<std::size_t>(spatial_rank))
            throw shape_error("poly conv: kernel extent count != spatial rank");
        if (weights.size() != static_cast<std::size_t>(degree))
            throw shape_error("poly conv: expected one kernel bank per degree");
        const auto want = bank_shape();
        for (const auto& w : weights)
            if (w.shape() != want)
                throw shape_error("poly conv: kernel bank shape " + shape_string(w.shape()) +
                                  " != " + shape_string(want));
        if (bias.size() != out_channels) throw shape_error("poly conv: bias size != out channels");
        if (activation == Activation::softmax)
            throw std::invalid_argument("poly conv: softmax is reserved for the head");
    }
};

template <typename Scalar>
struct PolyConvTrace {
    std::vector<Tensor<Scalar>> powers;     // Y^d, d = 1..degree
    std::vector<RowMat<Scalar>> patches;    // im2col of each power
    Tensor<Scalar> preact;
    std::vector<std::size_t> input_shape;
};

/// y = f(sum_d W_d * Y^d + b). Each Hadamard power and its patch matrix is
/// built once and shared by all output channels.
template <typename Scalar>
Tensor<Scalar> poly_conv_forward(const PolyConvLayer<Scalar>& layer, const Tensor<Scalar>& input,
                                 PolyConvTrace<Scalar>* trace = nullptr) {
    layer.validate();
    const auto dims = detail::ConvDims::check(input.shape(), layer.bank_shape(), layer.spatial_rank);
    Tensor<Scalar> preact(dims.output_shape());
    Eigen::Map<RowMat<Scalar>> out(preact.data(), dims.out_channels, dims.n_pos);

    if (trace) {
        trace->powers.clear();
        trace->patches.clear();
        trace->input_shape = input.shape();
    }
    Tensor<Scalar> power = input;
    for (int d = 1; d <= layer.degree; ++d) {
        if (d > 1) power = hadamard_product(power, input);
        RowMat<Scalar> patches = detail::im2col(power, dims);
        Eigen::Map<const RowMat<Scalar>> w(layer.weights[static_cast<std::size_t>(d - 1)].data(),
                                           dims.out_channels, dims.col_width);
        if (d == 1)
            out.noalias() = w * patches.transpose();
        else
            out.noalias() += w * patches.transpose();
        if (trace) {
            trace->powers.push_back(power);
            trace->patches.push_back(std::move(patches));
        }
    }
    for (std::size_t i = 0; i < dims.out_channels; ++i)
        out.row(static_cast<Eigen::Index>(i)).array() += layer.bias[i];

    if (trace) trace->preact = preact;
    Tensor<Scalar> activated = std::move(preact);
    apply_activation(activated, layer.activation);
    return activated;
}

template <typename Scalar>
struct PolyConvBackward {
    std::vector<Tensor<Scalar>> grad_weights; // one bank per degree
    std::vector<Scalar> grad_bias;
    Tensor<Scalar> grad_input;
};

/// Exact gradients. dW_d routes through Y^d; dY accumulates the correlation
/// adjoint of each bank times d*Y^(d-1).
template <typename Scalar>
PolyConvBackward<Scalar> poly_conv_backward(const PolyConvLayer<Scalar>& layer,
                                            const PolyConvTrace<Scalar>& trace,
                                            const Tensor<Scalar>& grad_output) {
    const auto dims =
        detail::ConvDims::check(trace.input_shape, layer.bank_shape(), layer.spatial_rank);
    if (grad_output.shape() != dims.output_shape())
        throw shape_error("poly_conv_backward: upstream gradient shape mismatch");

    // Through the activation.
    Tensor<Scalar> gx = grad_output;
    if (layer.activation == Activation::relu) {
        for (std::size_t i = 0; i < gx.size(); ++i)
            if (trace.preact[i] <= Scalar(0)) gx[i] = Scalar(0);
    }

    PolyConvBackward<Scalar> out;
    out.grad_bias.assign(layer.out_channels, Scalar(0));
    Eigen::Map<const RowMat<Scalar>> g(gx.data(), dims.out_channels, dims.n_pos);
    for (std::size_t i = 0; i < dims.out_channels; ++i)
        out.grad_bias[i] = g.row(static_cast<Eigen::Index>(i)).sum();

    out.grad_input = Tensor<Scalar>(trace.input_shape);
    const auto col = dims.column_offsets();
    const auto base = dims.position_offsets();

    for (int d = 1; d <= layer.degree; ++d) {
        const auto di = static_cast<std::size_t>(d - 1);
        Tensor<Scalar> gw(layer.bank_shape());
        Eigen::Map<RowMat<Scalar>> gw_map(gw.data(), dims.out_channels, dims.col_width);
        gw_map.noalias() = g * trace.patches[di];
        out.grad_weights.push_back(std::move(gw));

        Eigen::Map<const RowMat<Scalar>> w(layer.weights[di].data(), dims.out_channels,
                                           dims.col_width);
        RowMat<Scalar> grad_patches = g.transpose() * w; // (n_pos, col_width)

        // Scatter back to input coordinates, then chain through the power.
        Tensor<Scalar> gpow(trace.input_shape);
        Scalar* gp = gpow.data();
        for (std::size_t p = 0; p < dims.n_pos; ++p) {
            const Scalar* row = grad_patches.data() + p * dims.col_width;
            Scalar* dst = gp + base[p];
            for (std::size_t c = 0; c < dims.col_width; ++c) dst[col[c]] += row[c];
        }
        Scalar* gi = out.grad_input.data();
        if (d == 1) {
            for (std::size_t i = 0; i < gpow.size(); ++i) gi[i] += gp[i];
        } else {
            const Scalar* prev = trace.powers[di - 1].data(); // Y^(d-1)
            const Scalar dd = static_cast<Scalar>(d);
            for (std::size_t i = 0; i < gpow.size(); ++i) gi[i] += dd * prev[i] * gp[i];
        }
    }
    return out;
}

/// Max pool with per-axis window min(window, extent) and matching stride.
struct MaxPoolLayer {
    int window = 2;
};

struct MaxPoolTrace {
    std::vector<std::size_t> input_shape;
    std::vector<std::size_t> output_shape;
    std::vector<std::size_t> argmax; // flat input index feeding each output
};

template <typename Scalar>
Tensor<Scalar> max_pool_forward(const MaxPoolLayer& layer, const Tensor<Scalar>& input,
                                MaxPoolTrace* trace = nullptr) {
    if (input.rank() < 2) throw shape_error("max pool: input must be (channels, spatial...)");
    if (layer.window < 1) throw std::invalid_argument("max pool: window must be >= 1");
    const int r = static_cast<int>(input.rank()) - 1;
    std::vector<std::size_t> win(static_cast<std::size_t>(r)), out_shape{input.extent(0)};
    for (int i = 0; i < r; ++i) {
        win[static_cast<std::size_t>(i)] =
            std::min<std::size_t>(static_cast<std::size_t>(layer.window), input.extent(1 + i));
        out_shape.push_back(input.extent(1 + i) / win[static_cast<std::size_t>(i)]);
    }
    Tensor<Scalar> out(out_shape);
    std::vector<std::size_t> in_stride(input.rank()), amax(out.size());
    in_stride[input.rank() - 1] = 1;
    for (int i = static_cast<int>(input.rank()) - 2; i >= 0; --i)
        in_stride[static_cast<std::size_t>(i)] =
            in_stride[static_cast<std::size_t>(i) + 1] * input.extent(static_cast<std::size_t>(i) + 1);

    std::vector<std::size_t> oidx(out.rank(), 0);
    for (std::size_t p = 0; p < out.size(); ++p) {
        std::size_t corner = oidx[0] * in_stride[0];
        for (int i = 0; i < r; ++i)
            corner += oidx[static_cast<std::size_t>(i) + 1] * win[static_cast<std::size_t>(i)] *
                      in_stride[static_cast<std::size_t>(i) + 1];
        // scan the pooling window
        std::size_t best = corner;
        Scalar best_v = input[corner];
        std::vector<std::size_t> k(static_cast<std::size_t>(r), 0);
        const std::size_t cells = [&] {
            std::size_t c = 1;
            for (int i = 0; i < r; ++i) c *= win[static_cast<std::size_t>(i)];
            return c;
        }();
        for (std::size_t t = 1; t < cells; ++t) {
            for (int i = r - 1; i >= 0; --i) {
                if (++k[static_cast<std::size_t>(i)] < win[static_cast<std::size_t>(i)]) break;
                k[static_cast<std::size_t>(i)] = 0;
            }
            std::size_t f = corner;
            for (int i = 0; i < r; ++i)
                f += k[static_cast<std::size_t>(i)] * in_stride[static_cast<std::size_t>(i) + 1];
            if (input[f] > best_v) best_v = input[f], best = f;
        }
        out[p] = best_v;
        amax[p] = best;
        for (int i = static_cast<int>(out.rank()) - 1; i >= 0; --i) {
            if (++oidx[static_cast<std::size_t>(i)] < out.extent(static_cast<std::size_t>(i))) break;
            oidx[static_cast<std::size_t>(i)] = 0;
        }
    }
    if (trace) {
        trace->input_shape = input.shape();
        trace->output_shape = out.shape();
        trace->argmax = std::move(amax);
    }
    return out;
}

template <typename Scalar>
Tensor<Scalar> max_pool_backward(const MaxPoolTrace& trace, const Tensor<Scalar>& grad_output) {
    Tensor<Scalar> grad(trace.input_shape);
    for (std::size_t p = 0; p < grad_output.size(); ++p) grad[trace.argmax[p]] += grad_output[p];
    return grad;
}

struct FlattenLayer {};

/// Fully-connected layer, weight (out, in).
template <typename Scalar>
struct DenseLayer {
    std::size_t in_features = 0;
    std::size_t out_features = 0;
    Tensor<Scalar> weight;
    std::vector<Scalar> bias;
    Activation activation = Activation::identity;
};

template <typename Scalar>
struct DenseTrace {
    Tensor<Scalar> input;
    Tensor<Scalar> preact;
};

template <typename Scalar>
Tensor<Scalar> dense_forward(const DenseLayer<Scalar>& layer, const Tensor<Scalar>& input,
                             DenseTrace<Scalar>* trace = nullptr) {
    if (input.rank() != 1 || input.size() != layer.in_features)
        throw shape_error("dense: expected rank-1 input of length " +
                          std::to_string(layer.in_features) + ", got " +
                          shape_string(input.shape()));
    Tensor<Scalar> preact({layer.out_features});
    Eigen::Map<const RowMat<Scalar>> w(layer.weight.data(), layer.out_features, layer.in_features);
    Eigen::Map<const Eigen::Vector<Scalar, Eigen::Dynamic>> x(input.data(),
                                                              static_cast<Eigen::Index>(input.size()));
    Eigen::Map<Eigen::Vector<Scalar, Eigen::Dynamic>> y(preact.data(),
                                                        static_cast<Eigen::Index>(preact.size()));
    y.noalias() = w * x;
    for (std::size_t i = 0; i < layer.out_features; ++i) preact[i] += layer.bias[i];
    if (trace) {
        trace->input = input;
        trace->preact = preact;
    }
    Tensor<Scalar> activated = std::move(preact);
    apply_activation(activated, layer.activation);
    return activated;
}

template <typename Scalar>
struct DenseBackward {
    Tensor<Scalar> grad_weight;
    std::vector<Scalar> grad_bias;
    Tensor<Scalar> grad_input;
};

/// For identity/relu, grad_output is d(loss)/d(activated output). For the
/// softmax head the caller passes d(loss)/d(preact) directly (softmax and
/// cross-entropy are fused in the trainer).
template <typename Scalar>
DenseBackward<Scalar> dense_backward(const DenseLayer<Scalar>& layer, const DenseTrace<Scalar>& trace,
                                     const Tensor<Scalar>& grad_output) {
    Tensor<Scalar> gx = grad_output;
    if (layer.activation == Activation::relu) {
        for (std::size_t i = 0; i < gx.size(); ++i)
            if (trace.preact[i] <= Scalar(0)) gx[i] = Scalar(0);
    }
    DenseBackward<Scalar> out;
    out.grad_weight = Tensor<Scalar>({layer.out_features, layer.in_features});
    out.grad_bias.assign(layer.out_features, Scalar(0));
    out.grad_input = Tensor<Scalar>({layer.in_features});
    Eigen::Map<RowMat<Scalar>> gw(out.grad_weight.data(), layer.out_features, layer.in_features);
    Eigen::Map<const Eigen::Vector<Scalar, Eigen::Dynamic>> g(gx.data(),
                                                              static_cast<Eigen::Index>(gx.size()));
    Eigen::Map<const Eigen::Vector<Scalar, Eigen::Dynamic>> x(
        trace.input.data(), static_cast<Eigen::Index>(trace.input.size()));
    Eigen::Map<const RowMat<Scalar>> w(layer.weight.data(), layer.out_features, layer.in_features);
    Eigen::Map<Eigen::Vector<Scalar, Eigen::Dynamic>> gi(
        out.grad_input.data(), static_cast<Eigen::Index>(out.grad_input.size()));
    gw.noalias() = g * x.transpose();
    gi.noalias() = w.transpose() * g;
    for (std::size_t i = 0; i < layer.out_features; ++i) out.grad_bias[i] = gx[i];
    return out;
}

} // namespace ndpnn
