#include <doctest.h>

#include <cmath>

#include "ndpnn/metrics.hpp"
#include "ndpnn/network.hpp"
#include "ndpnn/train.hpp"
#include "support/oracles.hpp"

using namespace ndpnn;

namespace {

bool networks_bitwise_equal(const Network<float>& a, const Network<float>& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        const auto* pa = std::get_if<PolyConvLayer<float>>(&a.layers[i]);
        const auto* pb = std::get_if<PolyConvLayer<float>>(&b.layers[i]);
        if ((pa == nullptr) != (pb == nullptr)) return false;
        if (pa) {
            if (pa->degree != pb->degree) return false;
            for (int d = 0; d < pa->degree; ++d)
                for (std::size_t k = 0; k < pa->weights[static_cast<std::size_t>(d)].size(); ++k)
                    if (pa->weights[static_cast<std::size_t>(d)][k] !=
                        pb->weights[static_cast<std::size_t>(d)][k])
                        return false;
            for (std::size_t k = 0; k < pa->bias.size(); ++k)
                if (pa->bias[k] != pb->bias[k]) return false;
        }
        const auto* da = std::get_if<DenseLayer<float>>(&a.layers[i]);
        const auto* db = std::get_if<DenseLayer<float>>(&b.layers[i]);
        if ((da == nullptr) != (db == nullptr)) return false;
        if (da) {
            for (std::size_t k = 0; k < da->weight.size(); ++k)
                if (da->weight[k] != db->weight[k]) return false;
            for (std::size_t k = 0; k < da->bias.size(); ++k)
                if (da->bias[k] != db->bias[k]) return false;
        }
    }
    return true;
}

} // namespace

TEST_CASE("architecture builder") {
    auto net = build_network<float>("pconv:8:3:2,pool,pconv:4:3:1,pool,flatten,dense:16,head",
                                    {1, 9, 30, 30}, 2, 7);
    CHECK(net.layers.size() == 7);
    CHECK(poly_degrees(net) == std::vector<int>{2, 1});

    // shape walk: (1,9,30,30) -> conv (8,7,28,28) -> pool (8,3,14,14)
    //   -> conv (4,1,12,12) -> pool (4,1,6,6) -> flatten 144 -> dense 16 -> head 2
    const auto& dense = std::get<DenseLayer<float>>(net.layers[5]);
    CHECK(dense.in_features == 144);
    const auto& head = std::get<DenseLayer<float>>(net.layers[6]);
    CHECK(head.out_features == 2);
    CHECK(head.activation == Activation::softmax);

    CHECK_THROWS_AS(build_network<float>("pconv:8:3:2,flatten", {1, 8, 8}, 2),
                    std::invalid_argument); // no head
    CHECK_THROWS_AS(build_network<float>("dense:4,head", {1, 8, 8}, 2),
                    std::invalid_argument); // dense before flatten
    CHECK_THROWS_AS(build_network<float>("pconv:8:9:1,flatten,head", {1, 8, 8}, 2),
                    shape_error); // kernel exceeds input
    CHECK_THROWS_AS(build_network<float>("head,flatten", {1, 8, 8}, 2),
                    std::invalid_argument);

    const std::string preset = preset_arch(2, 7);
    CHECK(preset == "pconv:32:3:7,pool,pconv:64:3:7,pool,flatten,dense:128,head");
}

TEST_CASE("weight initialization is seeded and deterministic") {
    auto a = build_network<float>("pconv:4:3:3,flatten,head", {1, 10, 10}, 2, 99);
    auto b = build_network<float>("pconv:4:3:3,flatten,head", {1, 10, 10}, 2, 99);
    auto c = build_network<float>("pconv:4:3:3,flatten,head", {1, 10, 10}, 2, 100);
    init_weights(a);
    init_weights(b);
    init_weights(c);
    CHECK(networks_bitwise_equal(a, b));
    CHECK_FALSE(networks_bitwise_equal(a, c));

    // higher-degree banks are damped by 1/d!
    const auto& pc = std::get<PolyConvLayer<float>>(a.layers[0]);
    auto max_abs = [](const Tensor<float>& t) {
        float m = 0;
        for (std::size_t i = 0; i < t.size(); ++i) m = std::max(m, std::abs(t[i]));
        return m;
    };
    CHECK(max_abs(pc.weights[2]) < max_abs(pc.weights[0]));
}

TEST_CASE("forward_network: head-only propagation") {
    // zero weights, zero bias -> uniform rows
    auto net = build_network<float>("flatten,head", {1, 2, 2}, 4, 1);
    Rng rng(5);
    std::vector<Tensor<float>> batch;
    for (int i = 0; i < 3; ++i) batch.push_back(oracle::random_tensor_f({1, 2, 2}, rng));
    auto probs = forward_network(net, batch);
    for (int b = 0; b < 3; ++b)
        for (int k = 0; k < 4; ++k) CHECK(probs(b, k) == doctest::Approx(0.25).epsilon(1e-6));

    // prior-matched bias with zero weights reproduces the priors
    const std::vector<double> priors{0.4, 0.3, 0.2, 0.1};
    set_head_bias(net, priors);
    probs = forward_network(net, batch);
    for (int b = 0; b < 3; ++b)
        for (int k = 0; k < 4; ++k)
            CHECK(probs(b, k) == doctest::Approx(priors[static_cast<std::size_t>(k)]).epsilon(1e-6));
}

TEST_CASE("forward_network rows sum to one") {
    auto net = build_network<float>("pconv:3:3:2,pool,flatten,dense:8,head", {1, 12, 12}, 3, 3);
    init_weights(net);
    Rng rng(17);
    std::vector<Tensor<float>> batch;
    for (int i = 0; i < 8; ++i) batch.push_back(oracle::random_tensor_f({1, 12, 12}, rng));
    const auto probs = forward_network(net, batch);
    for (int b = 0; b < 8; ++b) {
        double s = 0;
        for (int k = 0; k < 3; ++k) s += probs(b, k);
        CHECK(std::abs(s - 1.0) <= 1e-6);
    }
}

TEST_CASE("init_output_bias") {
    // uniform priors -> all-zero biases
    const auto z = init_output_bias({0.25, 0.25, 0.25, 0.25});
    for (double b : z) CHECK(b == 0.0);

    // (0.75, 0.25) -> (ln 3, 0)
    const auto b2 = init_output_bias({0.75, 0.25});
    CHECK(b2[0] == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    CHECK(b2[1] == 0.0);

    // softmax(b) reproduces the renormalized reference priors to 1e-12
    const std::vector<double> table{0.04, 0.11, 0.23, 0.12, 0.19, 0.14, 0.13, 0.03};
    double sum = 0;
    for (double p : table) sum += p;
    const auto b8 = init_output_bias(table);
    CHECK(b8.back() == 0.0);
    double z8 = 0;
    for (double b : b8) z8 += std::exp(b);
    for (std::size_t k = 0; k < table.size(); ++k)
        CHECK(std::exp(b8[k]) / z8 == doctest::Approx(table[k] / sum).epsilon(1e-12));

    CHECK_THROWS_AS(init_output_bias({0.5, 0.0, 0.5}), std::invalid_argument);
    CHECK_THROWS_AS(init_output_bias({0.5, -0.1, 0.6}), std::invalid_argument);
}

TEST_CASE("equivalent-width solver") {
    CHECK(solve_equivalent_width(257408, 9, 27) == 53);

    // forward substitution: N = 10 -> 63*100 + 1444*10 + 2688 = 23428
    CHECK(equivalent_width_params(10, 9, 27) == doctest::Approx(23428.0).epsilon(1e-12));
    CHECK(solve_equivalent_width(23428, 9, 27) == 10);

    for (int n = 1; n <= 128; ++n)
        CHECK(solve_equivalent_width(equivalent_width_params(n, 9, 27), 9, 27) == n);

    CHECK_THROWS_AS(solve_equivalent_width(96.0 * 28.0, 9, 27), infeasible_error);
}

TEST_CASE("training learns the separable toy set and is deterministic") {
    // two classes of constant 1D signals at +1 / -1
    Dataset<float> data;
    for (int i = 0; i < 16; ++i) {
        data.samples.push_back(Tensor<float>::full({1, 8}, 1.0f));
        data.labels.push_back(1);
        data.samples.push_back(Tensor<float>::full({1, 8}, -1.0f));
        data.labels.push_back(2);
    }

    TrainConfig cfg;
    cfg.learning_rate = 5e-3;
    cfg.batch_size = 8;
    cfg.epochs = 20;
    cfg.seed = 11;

    auto net = build_network<float>("pconv:2:3:2,flatten,head", {1, 8}, 2, 11);
    init_weights(net);
    const auto log = train(net, data, cfg);
    REQUIRE(log.size() == 20);
    CHECK(log.back().train_accuracy >= 0.99);
    for (std::size_t e = 1; e < log.size(); ++e) CHECK(log[e].loss <= log[e - 1].loss + 1e-9);

    // same seed reproduces the run exactly
    auto net2 = build_network<float>("pconv:2:3:2,flatten,head", {1, 8}, 2, 11);
    init_weights(net2);
    const auto log2 = train(net2, data, cfg);
    CHECK(networks_bitwise_equal(net, net2));
    for (std::size_t e = 0; e < log.size(); ++e) {
        CHECK(log[e].loss == log2[e].loss);
        CHECK(log[e].train_accuracy == log2[e].train_accuracy);
        CHECK(epoch_log_line(log[e]) == epoch_log_line(log2[e]));
    }

    // zero learning rate leaves weights bit-identical
    auto frozen = build_network<float>("pconv:2:3:2,flatten,head", {1, 8}, 2, 11);
    init_weights(frozen);
    auto copy = frozen;
    TrainConfig zero = cfg;
    zero.learning_rate = 0.0;
    zero.epochs = 3;
    train(frozen, data, zero);
    CHECK(networks_bitwise_equal(frozen, copy));
}

TEST_CASE("train validates inputs") {
    Dataset<float> data;
    data.samples.push_back(Tensor<float>::full({1, 8}, 1.0f));
    data.labels.push_back(3); // out of range for 2 classes
    auto net = build_network<float>("flatten,head", {1, 8}, 2, 1);
    TrainConfig cfg;
    cfg.batch_size = 1;
    CHECK_THROWS_AS(train(net, data, cfg), std::invalid_argument);

    data.labels[0] = 1;
    cfg.batch_size = 2; // exceeds dataset size
    CHECK_THROWS_AS(train(net, data, cfg), std::invalid_argument);
}

TEST_CASE("evaluate_metrics") {
    Confusion diag = Confusion::Zero(3, 3);
    diag(0, 0) = 5;
    diag(1, 1) = 2;
    diag(2, 2) = 7;
    const auto m = evaluate_metrics(diag);
    CHECK(m.accuracy == 1.0);
    CHECK(m.macro_precision == 1.0);
    CHECK(m.macro_recall == 1.0);
    CHECK(m.macro_f1 == 1.0);

    CHECK_THROWS_AS(evaluate_metrics(Confusion::Zero(3, 3)), std::invalid_argument);
    Confusion neg = Confusion::Zero(2, 2);
    neg(0, 1) = -1;
    CHECK_THROWS_AS(evaluate_metrics(neg), std::invalid_argument);

    // 8-class reference matrix: 4004 samples, 17 off-diagonal errors
    Confusion c(8, 8);
    c << 752, 1, 1, 0, 1, 0, 0, 0,
         0, 540, 0, 0, 0, 0, 0, 0,
         0, 0, 545, 0, 0, 0, 0, 0,
         0, 0, 0, 126, 0, 0, 0, 0,
         0, 1, 0, 0, 488, 0, 1, 0,
         0, 1, 1, 0, 0, 145, 2, 0,
         1, 0, 0, 0, 0, 0, 939, 0,
         0, 1, 1, 0, 0, 0, 5, 452;
    const auto rep = evaluate_metrics(c);
    CHECK(rep.total == 4004);
    CHECK(rep.accuracy == doctest::Approx(3987.0 / 4004.0).epsilon(1e-12));
    CHECK(rep.accuracy == doctest::Approx(0.99575).epsilon(1e-4));

    // dropping the 13 aberrant misclassifications and keeping 4 real ones
    const double effective = 3987.0 / (3987.0 + 4.0);
    CHECK(effective == doctest::Approx(0.9990).epsilon(1e-4));

    // a class absent from predictions and actuals is skipped by the macros
    Confusion h = Confusion::Zero(2, 2);
    h(0, 0) = 10;
    const auto hm = evaluate_metrics(h);
    CHECK(hm.accuracy == 1.0);
    CHECK(hm.macro_precision == 1.0);
}
