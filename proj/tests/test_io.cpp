#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "ndpnn/image_io.hpp"
#include "ndpnn/model_io.hpp"
#include "ndpnn/rng.hpp"
#include "support/oracles.hpp"

using namespace ndpnn;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

Tensor<float> quantized_random(std::vector<std::size_t> shape, std::uint64_t seed) {
    Rng rng(seed);
    Tensor<float> t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = static_cast<float>(rng.uniform_int(0, 255)) / 255.0f;
    return t;
}

} // namespace

TEST_CASE("png round trip for gray and rgb") {
    const auto dir = std::filesystem::temp_directory_path();
    for (const std::size_t channels : {std::size_t{1}, std::size_t{3}}) {
        const auto img = quantized_random({channels, 37, 41}, 10 + channels);
        const auto path = dir / ("ndpnn_t" + std::to_string(channels) + ".png");
        write_png(img, path);
        const auto back = read_png(path);
        REQUIRE(back.shape() == img.shape());
        for (std::size_t i = 0; i < img.size(); ++i)
            CHECK(back[i] == doctest::Approx(img[i]).epsilon(1e-6));
        std::filesystem::remove(path);
    }
}

TEST_CASE("png encoding is deterministic") {
    const auto img = quantized_random({1, 24, 24}, 77);
    const auto dir = std::filesystem::temp_directory_path();
    write_png(img, dir / "ndpnn_a.png");
    write_png(img, dir / "ndpnn_b.png");
    CHECK(slurp(dir / "ndpnn_a.png") == slurp(dir / "ndpnn_b.png"));
    std::filesystem::remove(dir / "ndpnn_a.png");
    std::filesystem::remove(dir / "ndpnn_b.png");
}

TEST_CASE("png rejects missing and bogus files") {
    const auto dir = std::filesystem::temp_directory_path();
    CHECK_THROWS_AS(read_png(dir / "ndpnn_missing.png"), format_error);
    const auto bogus = dir / "ndpnn_bogus.png";
    std::ofstream(bogus) << "definitely not a png";
    CHECK_THROWS_AS(read_png(bogus), format_error);
    std::filesystem::remove(bogus);
}

TEST_CASE("model container round trip") {
    for (const char* arch : {"pconv:2:3:2,flatten,head",
                             "pconv:4:3:3,pool,pconv:2:3:1,pool,flatten,dense:8,head"}) {
        auto net = build_network<float>(arch, {1, 20, 20}, 3, 42);
        init_weights(net);
        set_head_bias(net, {0.5, 0.3, 0.2});

        std::stringstream buf;
        write_model(net, buf);
        const auto back = read_model(buf);
        REQUIRE(back.layers.size() == net.layers.size());
        CHECK(back.input_shape == net.input_shape);
        CHECK(back.class_count == net.class_count);
        CHECK(poly_degrees(back) == poly_degrees(net));

        // identical forward behavior, bit for bit
        Rng rng(1);
        for (int i = 0; i < 4; ++i) {
            const auto x = oracle::random_tensor_f(net.input_shape, rng);
            const auto p0 = forward_sample(net, x);
            const auto p1 = forward_sample(back, x);
            REQUIRE(p0.size() == p1.size());
            for (std::size_t k = 0; k < p0.size(); ++k) CHECK(p0[k] == p1[k]);
        }
    }
}

TEST_CASE("model container for a 3D network with file I/O") {
    auto net = build_network<float>("pconv:4:3:2,pool,flatten,head", {1, 9, 18, 18}, 2, 3);
    init_weights(net);
    const auto path = std::filesystem::temp_directory_path() / "ndpnn_model.ndm";
    write_model(net, path);
    const auto back = read_model(path);
    CHECK(parameter_count(back) == parameter_count(net));
    std::filesystem::remove(path);
}

TEST_CASE("model container rejects malformed input") {
    std::stringstream bad("NOPE");
    CHECK_THROWS_AS(read_model(bad), format_error);

    std::stringstream truncated;
    truncated.write("NDM1\x08\x00\x00\x00{", 9);
    CHECK_THROWS_AS(read_model(truncated), format_error);
}

TEST_CASE("stack_to_network_input permutes frames and channels") {
    // (M=2, C=3, h=2, w=2) -> (C=3, M=2, 2, 2)
    Tensor<float> stack({2, 3, 2, 2});
    for (std::size_t i = 0; i < stack.size(); ++i) stack[i] = static_cast<float>(i);
    const auto x = stack_to_network_input(stack);
    REQUIRE(x.shape() == std::vector<std::size_t>{3, 2, 2, 2});
    for (std::size_t m = 0; m < 2; ++m)
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = 0; y < 2; ++y)
                for (std::size_t w = 0; w < 2; ++w)
                    CHECK(x(c, m, y, w) == stack(m, c, y, w));

    // single-frame stacks squeeze to (C, h, w)
    Tensor<float> one({1, 3, 4, 4});
    for (std::size_t i = 0; i < one.size(); ++i) one[i] = static_cast<float>(i) * 0.5f;
    const auto sq = stack_to_network_input(one);
    REQUIRE(sq.shape() == std::vector<std::size_t>{3, 4, 4});
    CHECK(std::memcmp(sq.data(), one.data(), one.size() * 4) == 0);
}
