#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "ndpnn/errors.hpp"
#include "ndpnn/layers.hpp"
#include "ndpnn/rng.hpp"
#include "ndpnn/tensor.hpp"

namespace ndpnn {

template <typename Scalar>
using Layer = std::variant<PolyConvLayer<Scalar>, MaxPoolLayer, FlattenLayer, DenseLayer<Scalar>>;

/// A full network: ordered layers ending in a dense softmax head over
/// class_count units.
template <typename Scalar>
struct Network {
    std::vector<Layer<Scalar>> layers;
    std::vector<std::size_t> input_shape; // per sample, channels first
    std::size_t class_count = 0;
    std::uint64_t init_seed = 0;
};

struct FlattenTrace {
    std::vector<std::size_t> input_shape;
};

template <typename Scalar>
using LayerTrace = std::variant<PolyConvTrace<Scalar>, MaxPoolTrace, FlattenTrace, DenseTrace<Scalar>>;

/// Output shape of one layer given its input shape (also validates).
template <typename Scalar>
std::vector<std::size_t> layer_output_shape(const Layer<Scalar>& layer,
                                            const std::vector<std::size_t>& in) {
    if (const auto* pc = std::get_if<PolyConvLayer<Scalar>>(&layer)) {
        const auto d = detail::ConvDims::check(in, pc->bank_shape(), pc->spatial_rank);
        return d.output_shape();
    }
    if (const auto* mp = std::get_if<MaxPoolLayer>(&layer)) {
        if (in.size() < 2) throw shape_error("max pool: input must be (channels, spatial...)");
        std::vector<std::size_t> out{in[0]};
        for (std::size_t i = 1; i < in.size(); ++i) {
            const std::size_t win = std::min<std::size_t>(static_cast<std::size_t>(mp->window), in[i]);
            out.push_back(in[i] / win);
        }
        return out;
    }
    if (std::holds_alternative<FlattenLayer>(layer)) {
        std::size_t n = 1;
        for (std::size_t e : in) n *= e;
        return {n};
    }
    const auto& dn = std::get<DenseLayer<Scalar>>(layer);
    if (in.size() != 1 || in[0] != dn.in_features)
        throw shape_error("dense: expected rank-1 input of length " +
                          std::to_string(dn.in_features) + ", got " + shape_string(in));
    return {dn.out_features};
}

template <typename Scalar>
Tensor<Scalar> layer_forward(const Layer<Scalar>& layer, const Tensor<Scalar>& x,
                             LayerTrace<Scalar>* trace) {
    if (const auto* pc = std::get_if<PolyConvLayer<Scalar>>(&layer)) {
        if (trace) {
            *trace = PolyConvTrace<Scalar>{};
            return poly_conv_forward(*pc, x, &std::get<PolyConvTrace<Scalar>>(*trace));
        }
        return poly_conv_forward(*pc, x);
    }
    if (const auto* mp = std::get_if<MaxPoolLayer>(&layer)) {
        if (trace) {
            *trace = MaxPoolTrace{};
            return max_pool_forward(*mp, x, &std::get<MaxPoolTrace>(*trace));
        }
        return max_pool_forward<Scalar>(*mp, x);
    }
    if (std::holds_alternative<FlattenLayer>(layer)) {
        if (trace) *trace = FlattenTrace{x.shape()};
        return x.reshaped({x.size()});
    }
    const auto& dn = std::get<DenseLayer<Scalar>>(layer);
    if (trace) {
        *trace = DenseTrace<Scalar>{};
        return dense_forward(dn, x, &std::get<DenseTrace<Scalar>>(*trace));
    }
    return dense_forward(dn, x);
}

/// Forward pass of one sample; probabilities over classes.
template <typename Scalar>
Tensor<Scalar> forward_sample(const Network<Scalar>& net, const Tensor<Scalar>& x,
                              std::vector<LayerTrace<Scalar>>* traces = nullptr) {
    if (x.shape() != net.input_shape)
        throw shape_error("forward: sample shape " + shape_string(x.shape()) +
                          " != network input " + shape_string(net.input_shape));
    if (traces) traces->resize(net.layers.size());
    Tensor<Scalar> cur = x;
    for (std::size_t i = 0; i < net.layers.size(); ++i)
        cur = layer_forward(net.layers[i], cur, traces ? &(*traces)[i] : nullptr);
    return cur;
}

/// Class-probability matrix, one row per sample; rows sum to 1.
template <typename Scalar>
RowMat<Scalar> forward_network(const Network<Scalar>& net, const std::vector<Tensor<Scalar>>& batch) {
    RowMat<Scalar> probs(batch.size(), net.class_count);
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const Tensor<Scalar> p = forward_sample(net, batch[b]);
        for (std::size_t k = 0; k < net.class_count; ++k)
            probs(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k)) = p[k];
    }
    return probs;
}

template <typename Scalar>
std::size_t parameter_count(const Network<Scalar>& net) {
    std::size_t n = 0;
    for (const auto& layer : net.layers) {
        if (const auto* pc = std::get_if<PolyConvLayer<Scalar>>(&layer)) {
            for (const auto& w : pc->weights) n += w.size();
            n += pc->bias.size();
        } else if (const auto* dn = std::get_if<DenseLayer<Scalar>>(&layer)) {
            n += dn->weight.size() + dn->bias.size();
        }
    }
    return n;
}

/// Declared polynomial degree of each conv layer, in network order.
template <typename Scalar>
std::vector<int> poly_degrees(const Network<Scalar>& net) {
    std::vector<int> d;
    for (const auto& layer : net.layers)
        if (const auto* pc = std::get_if<PolyConvLayer<Scalar>>(&layer)) d.push_back(pc->degree);
    return d;
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

inline int parse_int_field(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const int v = std::stoi(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (...) {
        throw std::invalid_argument("architecture: bad " + what + " '" + s + "'");
    }
}

} // namespace detail

/// Builds a network from a compact architecture string. Tokens, separated by
/// commas:
///   pconv:<out>:<k>:<degree>[:<act>]   polynomial conv, cubic kernel k^rank
///   pool[:<window>]                    max pool (default window 2)
///   flatten
///   dense:<units>[:<act>]
///   head                               dense to class_count + softmax
/// The spatial rank is taken from the input shape (channels first). Weights
/// are left zero; call init_weights afterwards.
template <typename Scalar>
Network<Scalar> build_network(const std::string& arch, std::vector<std::size_t> input_shape,
                              std::size_t class_count, std::uint64_t seed = 0) {
    if (input_shape.size() < 2 || input_shape.size() > 4)
        throw std::invalid_argument("architecture: input shape must be (C, spatial...) rank 2..4");
    if (class_count < 2) throw std::invalid_argument("architecture: need at least 2 classes");
    Network<Scalar> net;
    net.input_shape = input_shape;
    net.class_count = class_count;
    net.init_seed = seed;
    const int rank = static_cast<int>(input_shape.size()) - 1;

    std::vector<std::size_t> cur = input_shape;
    bool head_seen = false;
    for (const std::string& token : detail::split(arch, ',')) {
        if (token.empty()) continue;
        if (head_seen) throw std::invalid_argument("architecture: head must be the last layer");
        const auto f = detail::split(token, ':');
        if (f[0] == "pconv") {
            if (f.size() < 4 || f.size() > 5)
                throw std::invalid_argument("architecture: pconv:<out>:<k>:<degree>[:<act>]");
            PolyConvLayer<Scalar> pc;
            pc.spatial_rank = rank;
            pc.out_channels = static_cast<std::size_t>(detail::parse_int_field(f[1], "channel count"));
            const int k = detail::parse_int_field(f[2], "kernel extent");
            pc.degree = detail::parse_int_field(f[3], "degree");
            pc.activation = f.size() == 5 ? parse_activation(f[4]) : Activation::relu;
            pc.in_channels = cur[0];
            pc.kernel_extents.assign(static_cast<std::size_t>(rank), static_cast<std::size_t>(k));
            if (pc.degree < 1) throw std::invalid_argument("architecture: degree must be >= 1");
            for (int d = 0; d < pc.degree; ++d) pc.weights.emplace_back(pc.bank_shape());
            pc.bias.assign(pc.out_channels, Scalar(0));
            cur = layer_output_shape<Scalar>(pc, cur);
            net.layers.emplace_back(std::move(pc));
        } else if (f[0] == "pool") {
            MaxPoolLayer mp;
            if (f.size() == 2) mp.window = detail::parse_int_field(f[1], "pool window");
            else if (f.size() > 2) throw std::invalid_argument("architecture: pool[:<window>]");
            cur = layer_output_shape<Scalar>(Layer<Scalar>{mp}, cur);
            net.layers.emplace_back(mp);
        } else if (f[0] == "flatten") {
            cur = layer_output_shape<Scalar>(Layer<Scalar>{FlattenLayer{}}, cur);
            net.layers.emplace_back(FlattenLayer{});
        } else if (f[0] == "dense" || f[0] == "head") {
            DenseLayer<Scalar> dn;
            if (f[0] == "head") {
                if (f.size() != 1) throw std::invalid_argument("architecture: head takes no fields");
                dn.out_features = class_count;
                dn.activation = Activation::softmax;
                head_seen = true;
            } else {
                if (f.size() < 2 || f.size() > 3)
                    throw std::invalid_argument("architecture: dense:<units>[:<act>]");
                dn.out_features = static_cast<std::size_t>(detail::parse_int_field(f[1], "unit count"));
                dn.activation = f.size() == 3 ? parse_activation(f[2]) : Activation::relu;
            }
            if (cur.size() != 1)
                throw std::invalid_argument("architecture: dense layers need a flatten before them");
            dn.in_features = cur[0];
            dn.weight = Tensor<Scalar>({dn.out_features, dn.in_features});
            dn.bias.assign(dn.out_features, Scalar(0));
            cur = layer_output_shape<Scalar>(Layer<Scalar>{dn}, cur);
            net.layers.emplace_back(std::move(dn));
        } else {
            throw std::invalid_argument("architecture: unknown layer '" + f[0] + "'");
        }
    }
    if (!head_seen) throw std::invalid_argument("architecture: missing head layer");
    return net;
}

/// Conv-stage template mirroring the fixed parts of the reference
/// architecture family: 32 channels in the first stage, 64 in later stages,
/// 2x pooling between stages, a 128-unit dense layer, then the head. Depth
/// (number of conv stages) stays configurable per input size.
inline std::string preset_arch(int depth, int degree, int kernel = 3) {
    if (depth < 1) throw std::invalid_argument("preset: depth must be >= 1");
    std::ostringstream os;
    for (int i = 0; i < depth; ++i) {
        os << "pconv:" << (i == 0 ? 32 : 64) << ':' << kernel << ':' << degree << ",pool,";
    }
    os << "flatten,dense:128,head";
    return os.str();
}

namespace detail {
inline double factorial(int d) {
    double f = 1;
    for (int i = 2; i <= d; ++i) f *= i;
    return f;
}
} // namespace detail

/// Seeded uniform initialization: degree-1 kernels and dense weights get the
/// +/- sqrt(6/(fan_in+fan_out)) bound; degree-d kernels get it scaled by
/// 1/d! since higher powers amplify magnitudes. Biases start at zero.
template <typename Scalar>
void init_weights(Network<Scalar>& net) {
    Rng rng(net.init_seed);
    for (auto& layer : net.layers) {
        if (auto* pc = std::get_if<PolyConvLayer<Scalar>>(&layer)) {
            std::size_t k_prod = 1;
            for (std::size_t e : pc->kernel_extents) k_prod *= e;
            const double fan_in = static_cast<double>(pc->in_channels * k_prod);
            const double fan_out = static_cast<double>(pc->out_channels * k_prod);
            const double bound = std::sqrt(6.0 / (fan_in + fan_out));
            for (int d = 1; d <= pc->degree; ++d) {
                const double b = bound / detail::factorial(d);
                auto& w = pc->weights[static_cast<std::size_t>(d - 1)];
                for (std::size_t i = 0; i < w.size(); ++i)
                    w[i] = static_cast<Scalar>(rng.uniform(-b, b));
            }
            std::fill(pc->bias.begin(), pc->bias.end(), Scalar(0));
        } else if (auto* dn = std::get_if<DenseLayer<Scalar>>(&layer)) {
            const double bound =
                std::sqrt(6.0 / (static_cast<double>(dn->in_features) + dn->out_features));
            for (std::size_t i = 0; i < dn->weight.size(); ++i)
                dn->weight[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
            std::fill(dn->bias.begin(), dn->bias.end(), Scalar(0));
        }
    }
}

/// Biases b with softmax(b) = priors, gauge-fixed by b_N = 0 (softmax is
/// shift-invariant). Priors are renormalized first; rounded tables that sum
/// to 0.99 are accepted.
inline std::vector<double> init_output_bias(const std::vector<double>& priors) {
    if (priors.empty()) throw std::invalid_argument("init_output_bias: empty prior vector");
    double sum = 0.0;
    for (double p : priors) {
        if (!(p > 0.0)) throw std::invalid_argument("init_output_bias: priors must be positive");
        sum += p;
    }
    std::vector<double> b(priors.size());
    const double last = priors.back() / sum;
    for (std::size_t k = 0; k < priors.size(); ++k) b[k] = std::log(priors[k] / sum / last);
    b.back() = 0.0;
    return b;
}

/// Writes prior-matched biases into the head.
template <typename Scalar>
void set_head_bias(Network<Scalar>& net, const std::vector<double>& priors) {
    if (net.layers.empty()) throw std::invalid_argument("set_head_bias: empty network");
    auto* head = std::get_if<DenseLayer<Scalar>>(&net.layers.back());
    if (!head || head->activation != Activation::softmax)
        throw std::invalid_argument("set_head_bias: last layer is not a softmax head");
    if (priors.size() != head->out_features)
        throw std::invalid_argument("set_head_bias: prior count != class count");
    const auto b = init_output_bias(priors);
    for (std::size_t k = 0; k < b.size(); ++k) head->bias[k] = static_cast<Scalar>(b[k]);
}

/// Feature-extractor parameter count of the equivalent-width 3D family as a
/// function of the shared inner width N (receptive fields r3 = 3D, r2 = 2D).
inline double equivalent_width_params(double n, double r2, double r3) {
    return (2.0 * r3 + r2) * n * n + 4.0 * (8.0 * r3 + 16.0 * r2 + 1.0) * n + 96.0 * (r3 + 1.0);
}

/// Inner width N whose 3D feature extractor matches a 2D one with n_target
/// parameters: the unique positive root of the quadratic, rounded to the
/// nearest integer. Requires n_target > 96*(r3+1) for the root to exist.
inline int solve_equivalent_width(double n_target, double r2, double r3) {
    const double a = 2.0 * r3 + r2;
    const double b = 4.0 * (8.0 * r3 + 16.0 * r2 + 1.0);
    const double c = 96.0 * (r3 + 1.0) - n_target;
    if (!(c < 0.0))
        throw infeasible_error("solve_equivalent_width: target must exceed 96*(r3+1)");
    const double n = (-b + std::sqrt(b * b - 4.0 * a * c)) / (2.0 * a);
    return static_cast<int>(std::llround(n));
}

} // namespace ndpnn
