#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <sstream>

#include "ndpnn/rng.hpp"
#include "ndpnn/tensor.hpp"
#include "support/oracles.hpp"

using namespace ndpnn;

TEST_CASE("tensor shape validation") {
    CHECK_THROWS_AS(Tensor<float>(std::vector<std::size_t>{}), shape_error);
    CHECK_THROWS_AS(Tensor<float>({2, 0, 3}), shape_error);
    CHECK_THROWS_AS(Tensor<float>({2, 3}, {1.0f, 2.0f}), shape_error);
    Tensor<float> t({2, 3});
    CHECK(t.size() == 6);
    t(1, 2) = 5.0f;
    CHECK(t[5] == 5.0f);
}

TEST_CASE("hadamard power") {
    const Tensor<double> t({2}, {2.0, 3.0});
    CHECK(hadamard_power(t, 1).values()[0] == 2.0);
    CHECK(hadamard_power(t, 1).values()[1] == 3.0);
    CHECK(hadamard_power(t, 2).values()[0] == 4.0);
    CHECK(hadamard_power(t, 2).values()[1] == 9.0);

    // scalar cube oracle
    const Tensor<double> u({3}, {-1.0, 0.5, 2.0});
    const auto c = hadamard_power(u, 3);
    for (std::size_t i = 0; i < u.size(); ++i) CHECK(c[i] == u[i] * u[i] * u[i]);
    CHECK(c[0] == -1.0);
    CHECK(c[1] == 0.125);
    CHECK(c[2] == 8.0);

    CHECK_THROWS_AS(hadamard_power(t, 0), std::invalid_argument);
}

TEST_CASE("hadamard power additivity is exact on integer samples") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor<double> t({4, 3});
        for (std::size_t i = 0; i < t.size(); ++i)
            t[i] = static_cast<double>(rng.uniform_int(-5, 5));
        const int d1 = static_cast<int>(rng.uniform_int(1, 4));
        const int d2 = static_cast<int>(rng.uniform_int(1, 3));
        const auto lhs = hadamard_power(t, d1 + d2);
        const auto rhs = hadamard_product(hadamard_power(t, d1), hadamard_power(t, d2));
        for (std::size_t i = 0; i < t.size(); ++i) CHECK(lhs[i] == rhs[i]);
    }
}

TEST_CASE("convolve_valid hand examples") {
    // 1D [1,2,3] (*) [1,1] -> [3,5]
    const Tensor<double> in1({1, 3}, {1, 2, 3});
    const Tensor<double> k1({1, 1, 2}, {1, 1});
    const auto o1 = convolve_valid(in1, k1, 1);
    CHECK(o1.shape() == std::vector<std::size_t>{1, 2});
    CHECK(o1[0] == 3.0);
    CHECK(o1[1] == 5.0);

    // identity kernel leaves input unchanged
    const Tensor<double> k_id({1, 1, 1}, {1});
    const auto o_id = convolve_valid(in1, k_id, 1);
    for (std::size_t i = 0; i < in1.size(); ++i) CHECK(o_id[i] == in1[i]);

    // 2D [[1,2],[3,4]] (*) [[1,0],[0,1]] -> [[5]]
    const Tensor<double> in2({1, 2, 2}, {1, 2, 3, 4});
    const Tensor<double> k2({1, 1, 2, 2}, {1, 0, 0, 1});
    const auto o2 = convolve_valid(in2, k2, 2);
    CHECK(o2.shape() == std::vector<std::size_t>{1, 1, 1});
    CHECK(o2[0] == 5.0);

    // kernel larger than input
    const Tensor<double> big({1, 1, 4}, {1, 1, 1, 1});
    CHECK_THROWS_AS(convolve_valid(in1, big, 1), shape_error);
    // channel mismatch
    const Tensor<double> k_ch({1, 2, 2}, {1, 1, 1, 1});
    CHECK_THROWS_AS(convolve_valid(in1, k_ch, 1), shape_error);
}

TEST_CASE("convolve_valid matches the reference loop on random shapes") {
    Rng rng(21);
    for (int rank = 1; rank <= 3; ++rank) {
        for (int trial = 0; trial < 8; ++trial) {
            std::vector<std::size_t> ishape{static_cast<std::size_t>(rng.uniform_int(1, 3))};
            std::vector<std::size_t> kshape{static_cast<std::size_t>(rng.uniform_int(1, 3)),
                                            ishape[0]};
            for (int i = 0; i < rank; ++i) {
                const auto k = static_cast<std::size_t>(rng.uniform_int(1, 3));
                const auto s = k + static_cast<std::size_t>(rng.uniform_int(0, 4));
                ishape.push_back(s);
                kshape.push_back(k);
            }
            const auto input = oracle::random_tensor(ishape, rng);
            const auto kernels = oracle::random_tensor(kshape, rng);
            const auto got = convolve_valid(input, kernels, rank);
            const auto want = oracle::reference_conv(input, kernels, rank);
            REQUIRE(got.shape() == want.shape());
            for (std::size_t i = 0; i < got.size(); ++i)
                CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("convolve_valid is linear in its input") {
    Rng rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        const std::vector<std::size_t> ishape{2, 6, 7};
        const std::vector<std::size_t> kshape{3, 2, 2, 3};
        const auto x = oracle::random_tensor(ishape, rng);
        const auto y = oracle::random_tensor(ishape, rng);
        const auto k = oracle::random_tensor(kshape, rng);
        const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);

        Tensor<double> mix(ishape);
        for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
        const auto lhs = convolve_valid(mix, k, 2);
        const auto cx = convolve_valid(x, k, 2);
        const auto cy = convolve_valid(y, k, 2);
        for (std::size_t i = 0; i < lhs.size(); ++i) {
            const double want = a * cx[i] + b * cy[i];
            CHECK(std::abs(lhs[i] - want) <= 1e-6 * (std::abs(lhs[i]) + std::abs(want) + 1.0));
        }
    }
}

TEST_CASE("NDT1 round trip is bit-exact") {
    const Tensor<float> zeros({2, 2});
    std::stringstream buf;
    write_ndt1(zeros, buf);
    const auto back = read_ndt1(buf);
    CHECK(back.shape() == zeros.shape());
    CHECK(std::memcmp(back.data(), zeros.data(), zeros.size() * 4) == 0);

    Rng rng(3);
    Tensor<float> big({3, 348, 348});
    for (std::size_t i = 0; i < big.size(); ++i)
        big[i] = static_cast<float>(rng.uniform(-100.0, 100.0));
    std::stringstream buf2;
    write_ndt1(big, buf2);
    const auto back2 = read_ndt1(buf2);
    REQUIRE(back2.shape() == big.shape());
    CHECK(std::memcmp(back2.data(), big.data(), big.size() * 4) == 0);
}

TEST_CASE("NDT1 rejects malformed records") {
    // wrong magic
    std::stringstream bad("XDT1\x02");
    CHECK_THROWS_AS(read_ndt1(bad), format_error);

    // rank out of range
    std::stringstream buf;
    buf.write("NDT1", 4);
    const char rank9 = 9;
    buf.write(&rank9, 1);
    CHECK_THROWS_AS(read_ndt1(buf), format_error);

    // zero extent
    std::stringstream zed;
    zed.write("NDT1", 4);
    const char rank1 = 1;
    zed.write(&rank1, 1);
    const char zero[4] = {0, 0, 0, 0};
    zed.write(zero, 4);
    CHECK_THROWS_AS(read_ndt1(zed), format_error);

    // truncated payload
    std::stringstream full;
    write_ndt1(Tensor<float>({2, 2}, {1, 2, 3, 4}), full);
    const std::string bytes = full.str();
    std::stringstream cut(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(read_ndt1(cut), format_error);

    // rank > 8 is not writable
    std::stringstream sink;
    CHECK_THROWS_AS(write_ndt1(Tensor<float>({1, 1, 1, 1, 1, 1, 1, 1, 1}), sink), format_error);
}

TEST_CASE("NDT1 file round trip") {
    const auto path = std::filesystem::temp_directory_path() / "ndpnn_test_tensor.ndt";
    Rng rng(11);
    Tensor<float> t({4, 5});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform());
    write_ndt1(t, path);
    const auto back = read_ndt1(path);
    CHECK(back.shape() == t.shape());
    CHECK(std::memcmp(back.data(), t.data(), t.size() * 4) == 0);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(read_ndt1(path), format_error);
}
