#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>

#include "ndpnn/reduce.hpp"
#include "support/oracles.hpp"

using namespace ndpnn;

namespace {

/// Independent oracle: weighted least squares on Gauss-Legendre nodes, which
/// reproduces the continuous L2 projection exactly at these degrees.
std::vector<double> ls_reduce_oracle(const std::vector<double>& coeffs, double a, int target) {
    const auto gq = oracle::gauss_legendre(24);
    const auto n = static_cast<Eigen::Index>(gq.nodes.size());
    Eigen::MatrixXd design(n, target + 1);
    Eigen::VectorXd rhs(n);
    auto eval = [&](double x) {
        double y = 0;
        for (std::size_t i = coeffs.size(); i-- > 0;) y = y * x + coeffs[i];
        return y;
    };
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x = a * gq.nodes[static_cast<std::size_t>(i)];
        const double sw = std::sqrt(gq.weights[static_cast<std::size_t>(i)]);
        double xp = 1.0;
        for (int j = 0; j <= target; ++j) {
            design(i, j) = sw * xp;
            xp *= x;
        }
        rhs(i) = sw * eval(x);
    }
    const Eigen::VectorXd sol = design.colPivHouseholderQr().solve(rhs);
    return {sol.data(), sol.data() + sol.size()};
}

Poly random_poly(Rng& rng, int max_degree = 9) {
    Poly p;
    const int d = static_cast<int>(rng.uniform_int(1, max_degree));
    for (int i = 0; i <= d; ++i) p.coeffs.push_back(rng.uniform(-1.0, 1.0));
    p.half_width = rng.uniform(0.5, 2.0);
    return p;
}

} // namespace

TEST_CASE("reduce_poly hand cases") {
    // identity when the target degree is not lower
    const Poly p{{1.0, -2.0, 3.0}, 1.5};
    const auto same = reduce_poly(p, 2);
    CHECK(same.coeffs == p.coeffs);
    const auto higher = reduce_poly(p, 5);
    CHECK(higher.coeffs == p.coeffs);

    // x^2 on [-1, 1] projects to the constant 1/3
    const auto c = reduce_poly(Poly{{0.0, 0.0, 1.0}, 1.0}, 1);
    REQUIRE(c.coeffs.size() == 2);
    CHECK(c.coeffs[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(c.coeffs[1] == doctest::Approx(0.0).epsilon(1e-14));

    // 2x^3 on [-1, 1] projects to 1.2 x
    const auto l = reduce_poly(Poly{{0.0, 0.0, 0.0, 2.0}, 1.0}, 1);
    REQUIRE(l.coeffs.size() == 2);
    CHECK(l.coeffs[0] == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(l.coeffs[1] == doctest::Approx(1.2).epsilon(1e-14));

    CHECK_THROWS_AS(reduce_poly(p, 0), std::invalid_argument);
    CHECK_THROWS_AS(reduce_poly(Poly{{1.0, 1.0}, 0.0}, 1), std::invalid_argument);
}

TEST_CASE("reduce_poly matches the dense least-squares oracle") {
    Rng rng(2718);
    for (int trial = 0; trial < 300; ++trial) {
        const Poly p = random_poly(rng);
        const int target = static_cast<int>(rng.uniform_int(1, std::max(1, p.degree())));
        const auto got = reduce_poly(p, target);
        const auto want = ls_reduce_oracle(p.coeffs, p.half_width, target);
        REQUIRE(got.coeffs.size() == want.size());
        double scale = 1.0;
        for (double w : want) scale = std::max(scale, std::abs(w));
        for (std::size_t i = 0; i < want.size(); ++i)
            CHECK(std::abs(got.coeffs[i] - want[i]) <= 1e-9 * scale);
    }
}

TEST_CASE("reduce_poly is an orthogonal projection") {
    Rng rng(314);
    for (int trial = 0; trial < 100; ++trial) {
        const Poly p = random_poly(rng);
        if (p.degree() < 2) continue;
        const int target = static_cast<int>(rng.uniform_int(1, p.degree() - 1));
        const auto reduced = reduce_poly(p, target);

        // idempotence (the declared degree of the output is `target`)
        const auto twice = reduce_poly(reduced, target);
        for (std::size_t i = 0; i < reduced.coeffs.size(); ++i)
            CHECK(std::abs(twice.coeffs[i] - reduced.coeffs[i]) <= 1e-12);

        // nesting: projecting an intermediate projection equals projecting
        // directly onto the smaller subspace
        if (target + 1 <= p.degree() - 1) {
            const int mid = static_cast<int>(rng.uniform_int(target + 1, p.degree() - 1));
            const auto via = reduce_poly(reduce_poly(p, mid), target);
            for (std::size_t i = 0; i < reduced.coeffs.size(); ++i)
                CHECK(std::abs(via.coeffs[i] - reduced.coeffs[i]) <= 1e-9);
        }

        // optimality against random candidates of the same degree
        const double best = oracle::poly_mse(p.coeffs, reduced.coeffs, p.half_width);
        for (int cand = 0; cand < 20; ++cand) {
            std::vector<double> c = reduced.coeffs;
            for (double& x : c) x += rng.uniform(-0.05, 0.05);
            CHECK(oracle::poly_mse(p.coeffs, c, p.half_width) >= best - 1e-12);
        }
    }
}

namespace {

Network<float> planted_network(std::uint64_t seed) {
    auto net = build_network<float>("pconv:3:2:5,pool,pconv:2:2:5,flatten,head", {1, 12}, 2, seed);
    init_weights(net);
    // plant: true degree <= 2, declared degree 5
    for (auto& layer : net.layers)
        if (auto* pc = std::get_if<PolyConvLayer<float>>(&layer))
            for (int d = 3; d <= 5; ++d) {
                auto& bank = pc->weights[static_cast<std::size_t>(d - 1)];
                for (std::size_t i = 0; i < bank.size(); ++i) bank[i] = 0.0f;
            }
    return net;
}

Dataset<float> self_labeled(const Network<float>& net, std::size_t count, std::uint64_t seed) {
    Dataset<float> data;
    Rng rng(seed);
    for (std::size_t i = 0; i < count; ++i) {
        auto x = oracle::random_tensor_f(net.input_shape, rng);
        const auto p = forward_sample(net, x);
        std::size_t arg = 0;
        for (std::size_t k = 1; k < p.size(); ++k)
            if (p[k] > p[arg]) arg = k;
        data.samples.push_back(std::move(x));
        data.labels.push_back(static_cast<int>(arg) + 1);
    }
    return data;
}

} // namespace

TEST_CASE("compute_layer_bounds") {
    auto net = build_network<float>("pconv:2:3:1,pconv:2:2:1,flatten,head", {1, 8}, 2, 5);
    init_weights(net);

    Dataset<float> data;
    Rng rng(6);
    for (int i = 0; i < 4; ++i) {
        data.samples.push_back(oracle::random_tensor_f({1, 8}, rng, 0.0, 1.0));
        data.labels.push_back(1 + (i % 2));
    }
    data.samples[0][3] = 1.0f; // make the input bound attained exactly

    const auto bounds = compute_layer_bounds(net, data);
    REQUIRE(bounds.size() == 2);
    CHECK(bounds[0] == doctest::Approx(1.0).epsilon(1e-12));

    // brute-force sweep with the reference convolution
    const auto& l1 = std::get<PolyConvLayer<float>>(net.layers[0]);
    double want = 0.0;
    for (const auto& s : data.samples) {
        auto y = oracle::reference_conv(s, l1.weights[0], 1);
        const std::size_t per = y.size() / l1.out_channels;
        for (std::size_t oc = 0; oc < l1.out_channels; ++oc)
            for (std::size_t i = 0; i < per; ++i) {
                const double v = std::max(0.0, static_cast<double>(y[oc * per + i]) + l1.bias[oc]);
                want = std::max(want, v);
            }
    }
    CHECK(bounds[1] == doctest::Approx(want).epsilon(1e-5));

    CHECK_THROWS_AS(compute_layer_bounds(net, Dataset<float>{}), std::invalid_argument);
}

TEST_CASE("reduce_layer_weights") {
    // declared degree 3 with zero high-degree kernels: reduction to 1 keeps
    // the polynomial, so weights and bias are preserved
    PolyConvLayer<float> layer;
    layer.spatial_rank = 1;
    layer.degree = 3;
    layer.in_channels = 1;
    layer.out_channels = 1;
    layer.kernel_extents = {2};
    layer.weights = {Tensor<float>({1, 1, 2}, {0.5f, -0.25f}), Tensor<float>({1, 1, 2}),
                     Tensor<float>({1, 1, 2})};
    layer.bias = {0.75f};
    layer.activation = Activation::identity;
    const auto reduced = reduce_layer_weights(layer, 1, 1.0);
    CHECK(reduced.degree == 1);
    CHECK(reduced.weights[0][0] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(reduced.weights[0][1] == doctest::Approx(-0.25).epsilon(1e-6));
    CHECK(reduced.bias[0] == doctest::Approx(0.75).epsilon(1e-6));

    // P(x) = x^2 with kernel size 1 on [-1, 1] reduced to degree 1:
    // weight 0, bias gains 1/3
    PolyConvLayer<float> sq;
    sq.spatial_rank = 1;
    sq.degree = 2;
    sq.in_channels = 1;
    sq.out_channels = 1;
    sq.kernel_extents = {1};
    sq.weights = {Tensor<float>({1, 1, 1}, {0.0f}), Tensor<float>({1, 1, 1}, {1.0f})};
    sq.bias = {0.0f};
    sq.activation = Activation::identity;
    const auto rsq = reduce_layer_weights(sq, 1, 1.0);
    CHECK(rsq.weights[0][0] == doctest::Approx(0.0).epsilon(1e-7));
    CHECK(rsq.bias[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-7));

    // no-op reduction keeps outputs comparable on inputs inside the bound
    Rng rng(44);
    auto setup_layer = layer;
    const auto same = reduce_layer_weights(setup_layer, 3, 2.0);
    const auto x = oracle::random_tensor_f({1, 6}, rng);
    const auto y0 = poly_conv_forward(setup_layer, x);
    const auto y1 = poly_conv_forward(same, x);
    for (std::size_t i = 0; i < y0.size(); ++i)
        CHECK(std::abs(y0[i] - y1[i]) <= 1e-6);
}

TEST_CASE("reduce_network: degree-1 network returns unchanged with empty plan") {
    auto net = build_network<float>("pconv:2:3:1,flatten,head", {1, 10}, 2, 3);
    init_weights(net);
    const auto data = self_labeled(net, 16, 4);
    const EvalFn<float> acc = [](const Network<float>& n, const Dataset<float>& d) {
        return dataset_accuracy(n, d);
    };
    const auto [reduced, plan] = reduce_network(net, data, acc, 1.0);
    CHECK(plan.empty());
    CHECK(plan.history.empty());
    CHECK(poly_degrees(reduced) == std::vector<int>{1});
    CHECK(plan.baseline_score == 1.0);
}

TEST_CASE("reduce_network: planted degrees are recovered with zero loss") {
    const auto net = planted_network(12345);
    const auto data = self_labeled(net, 64, 999);
    const EvalFn<float> acc = [](const Network<float>& n, const Dataset<float>& d) {
        return dataset_accuracy(n, d);
    };
    const double baseline = acc(net, data);
    CHECK(baseline == 1.0); // labels come from the network itself

    const auto [reduced, plan] = reduce_network(net, data, acc, baseline);
    const auto degrees = poly_degrees(reduced);
    REQUIRE(degrees.size() == 2);
    CHECK(degrees[0] <= 2);
    CHECK(degrees[1] <= 2);
    CHECK(plan.final_score == baseline); // zero evaluation loss
    CHECK(parameter_count(reduced) < parameter_count(net));

    // outputs of the reduced model stay equal on the bounded training set
    for (std::size_t i = 0; i < 8; ++i) {
        const auto p0 = forward_sample(net, data.samples[i]);
        const auto p1 = forward_sample(reduced, data.samples[i]);
        for (std::size_t k = 0; k < p0.size(); ++k)
            CHECK(std::abs(p0[k] - p1[k]) <= 1e-5);
    }

    // degrees never increase and shrink monotonically across iterations
    std::vector<int> last{5, 5};
    for (const auto& step : plan.history) {
        CHECK(step.new_degree == last[step.layer - 1] - 1);
        last[step.layer - 1] = step.new_degree;
    }
}

TEST_CASE("reduce_network: zero threshold with non-negative score reduces everything") {
    auto net = planted_network(777);
    const auto data = self_labeled(net, 24, 5);
    const EvalFn<float> acc = [](const Network<float>& n, const Dataset<float>& d) {
        return dataset_accuracy(n, d);
    };
    const auto [reduced, plan] = reduce_network(net, data, acc, 0.0);
    CHECK(poly_degrees(reduced) == std::vector<int>{1, 1});
    CHECK(plan.final_score >= 0.0);
    const auto report = format_reduction_report(plan, net, reduced);
    CHECK(report.find("iter, layer, new_degree, score") != std::string::npos);
    CHECK(report.find("parameters:") != std::string::npos);
}
