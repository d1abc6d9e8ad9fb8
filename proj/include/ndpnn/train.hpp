#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "ndpnn/errors.hpp"
#include "ndpnn/metrics.hpp"
#include "ndpnn/network.hpp"
#include "ndpnn/rng.hpp"

namespace ndpnn {

/// Labeled samples; labels run 1..class_count.
template <typename Scalar>
struct Dataset {
    std::vector<Tensor<Scalar>> samples;
    std::vector<int> labels;

    std::size_t size() const { return samples.size(); }
};

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t batch_size = 128;
    std::size_t epochs = 100;
    double beta1 = 0.9;     // adaptive-moment decay pair
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;

    void validate(std::size_t dataset_size) const {
        if (learning_rate < 0.0) throw std::invalid_argument("train: learning rate must be >= 0");
        if (batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
        if (batch_size > dataset_size)
            throw std::invalid_argument("train: batch size exceeds dataset size");
        if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
        if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
            throw std::invalid_argument("train: moment decays must lie in [0, 1)");
    }
};

struct EpochStats {
    std::size_t epoch = 0;
    double loss = 0.0;
    double train_accuracy = 0.0;
    double val_accuracy = 0.0;
    bool has_val = false;
};

inline std::string epoch_log_line(const EpochStats& s) {
    std::ostringstream os;
    os << s.epoch << ", " << std::setprecision(10) << s.loss << ", " << s.train_accuracy << ", ";
    if (s.has_val)
        os << s.val_accuracy;
    else
        os << '-';
    return os.str();
}

namespace detail {

/// Mutable view over every parameter block of a network, in a fixed order.
template <typename Scalar>
struct ParamBlocks {
    std::vector<Scalar*> data;
    std::vector<std::size_t> size;
    std::vector<std::size_t> layer_first_block; // per network layer

    static ParamBlocks collect(Network<Scalar>& net) {
        ParamBlocks pb;
        for (auto& layer : net.layers) {
            pb.layer_first_block.push_back(pb.data.size());
            if (auto* pc = std::get_if<PolyConvLayer<Scalar>>(&layer)) {
                for (auto& w : pc->weights) {
                    pb.data.push_back(w.data());
                    pb.size.push_back(w.size());
                }
                pb.data.push_back(pc->bias.data());
                pb.size.push_back(pc->bias.size());
            } else if (auto* dn = std::get_if<DenseLayer<Scalar>>(&layer)) {
                pb.data.push_back(dn->weight.data());
                pb.size.push_back(dn->weight.size());
                pb.data.push_back(dn->bias.data());
                pb.size.push_back(dn->bias.size());
            }
        }
        return pb;
    }
};

} // namespace detail

/// Mean cross-entropy and accuracy of a frozen network on a dataset.
template <typename Scalar>
std::pair<double, double> evaluate_loss_accuracy(const Network<Scalar>& net,
                                                 const Dataset<Scalar>& data) {
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Tensor<Scalar> p = forward_sample(net, data.samples[i]);
        const std::size_t want = static_cast<std::size_t>(data.labels[i] - 1);
        const double pw = static_cast<double>(p[want]);
        if (!std::isfinite(pw)) throw training_diverged("loss became non-finite");
        loss -= std::log(std::max(pw, 1e-30));
        std::size_t arg = 0;
        for (std::size_t k = 1; k < p.size(); ++k)
            if (p[k] > p[arg]) arg = k;
        if (arg == want) ++correct;
    }
    return {loss / static_cast<double>(data.size()),
            static_cast<double>(correct) / static_cast<double>(data.size())};
}

template <typename Scalar>
double dataset_accuracy(const Network<Scalar>& net, const Dataset<Scalar>& data) {
    return evaluate_loss_accuracy(net, data).second;
}

template <typename Scalar>
Confusion confusion_matrix(const Network<Scalar>& net, const Dataset<Scalar>& data) {
    Confusion c = Confusion::Zero(static_cast<Eigen::Index>(net.class_count),
                                  static_cast<Eigen::Index>(net.class_count));
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Tensor<Scalar> p = forward_sample(net, data.samples[i]);
        std::size_t arg = 0;
        for (std::size_t k = 1; k < p.size(); ++k)
            if (p[k] > p[arg]) arg = k;
        c(data.labels[i] - 1, static_cast<Eigen::Index>(arg)) += 1;
    }
    return c;
}

/// Deterministic minibatch training with adaptive moment estimation and
/// softmax cross-entropy. Same seed and config reproduce identical weights:
/// the shuffle, the init and every accumulation order are fixed.
template <typename Scalar>
std::vector<EpochStats> train(Network<Scalar>& net, const Dataset<Scalar>& data,
                              const TrainConfig& cfg, const Dataset<Scalar>* val = nullptr) {
    if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
    if (data.labels.size() != data.samples.size())
        throw std::invalid_argument("train: label count != sample count");
    for (int label : data.labels)
        if (label < 1 || static_cast<std::size_t>(label) > net.class_count)
            throw std::invalid_argument("train: label outside [1, class_count]");
    cfg.validate(data.size());

    auto blocks = detail::ParamBlocks<Scalar>::collect(net);
    const std::size_t n_blocks = blocks.data.size();
    std::vector<std::vector<Scalar>> grad(n_blocks);
    std::vector<std::vector<double>> m(n_blocks), v(n_blocks);
    for (std::size_t b = 0; b < n_blocks; ++b) {
        grad[b].assign(blocks.size[b], Scalar(0));
        m[b].assign(blocks.size[b], 0.0);
        v[b].assign(blocks.size[b], 0.0);
    }

    Rng shuffle_rng(cfg.seed ^ 0x5eedf00dULL);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::vector<EpochStats> log;
    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < data.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(start + cfg.batch_size, data.size());
            const auto batch_n = static_cast<Scalar>(stop - start);
            for (auto& g : grad) std::fill(g.begin(), g.end(), Scalar(0));

            for (std::size_t bi = start; bi < stop; ++bi) {
                const std::size_t si = order[bi];
                std::vector<LayerTrace<Scalar>> traces;
                Tensor<Scalar> probs = forward_sample(net, data.samples[si], &traces);
                // d(mean cross-entropy)/d(head preact) via the softmax fusion
                Tensor<Scalar> g = probs;
                g[static_cast<std::size_t>(data.labels[si] - 1)] -= Scalar(1);
                for (std::size_t k = 0; k < g.size(); ++k) g[k] /= batch_n;

                for (std::size_t li = net.layers.size(); li-- > 0;) {
                    const std::size_t fb = blocks.layer_first_block[li];
                    if (auto* pc = std::get_if<PolyConvLayer<Scalar>>(&net.layers[li])) {
                        auto bk = poly_conv_backward(
                            *pc, std::get<PolyConvTrace<Scalar>>(traces[li]), g);
                        for (int d = 0; d < pc->degree; ++d) {
                            auto& gw = bk.grad_weights[static_cast<std::size_t>(d)];
                            for (std::size_t i = 0; i < gw.size(); ++i)
                                grad[fb + static_cast<std::size_t>(d)][i] += gw[i];
                        }
                        for (std::size_t i = 0; i < bk.grad_bias.size(); ++i)
                            grad[fb + static_cast<std::size_t>(pc->degree)][i] += bk.grad_bias[i];
                        g = std::move(bk.grad_input);
                    } else if (std::holds_alternative<MaxPoolLayer>(net.layers[li])) {
                        g = max_pool_backward(std::get<MaxPoolTrace>(traces[li]), g);
                    } else if (std::holds_alternative<FlattenLayer>(net.layers[li])) {
                        g = g.reshaped(std::get<FlattenTrace>(traces[li]).input_shape);
                    } else {
                        const auto& dn = std::get<DenseLayer<Scalar>>(net.layers[li]);
                        auto bk = dense_backward(dn, std::get<DenseTrace<Scalar>>(traces[li]), g);
                        for (std::size_t i = 0; i < bk.grad_weight.size(); ++i)
                            grad[fb][i] += bk.grad_weight[i];
                        for (std::size_t i = 0; i < bk.grad_bias.size(); ++i)
                            grad[fb + 1][i] += bk.grad_bias[i];
                        g = std::move(bk.grad_input);
                    }
                }
            }

            ++step;
            const double corr1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double corr2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            for (std::size_t b = 0; b < n_blocks; ++b) {
                Scalar* p = blocks.data[b];
                for (std::size_t i = 0; i < blocks.size[b]; ++i) {
                    const double gi = static_cast<double>(grad[b][i]);
                    m[b][i] = cfg.beta1 * m[b][i] + (1.0 - cfg.beta1) * gi;
                    v[b][i] = cfg.beta2 * v[b][i] + (1.0 - cfg.beta2) * gi * gi;
                    const double update = cfg.learning_rate * (m[b][i] / corr1) /
                                          (std::sqrt(v[b][i] / corr2) + cfg.epsilon);
                    p[i] = static_cast<Scalar>(static_cast<double>(p[i]) - update);
                }
            }
        }

        EpochStats stats;
        stats.epoch = epoch;
        const auto [loss, acc] = evaluate_loss_accuracy(net, data);
        if (!std::isfinite(loss)) throw training_diverged("loss became non-finite");
        stats.loss = loss;
        stats.train_accuracy = acc;
        if (val) {
            stats.val_accuracy = dataset_accuracy(net, *val);
            stats.has_val = true;
        }
        log.push_back(stats);
    }
    return log;
}

} // namespace ndpnn
