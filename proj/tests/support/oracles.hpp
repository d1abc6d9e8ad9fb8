#pragma once

// Test-only reference implementations, kept independent of the library's
// im2col/GEMM and Legendre-projection code paths.

#include <cmath>
#include <functional>
#include <vector>

#include "ndpnn/rng.hpp"
#include "ndpnn/tensor.hpp"

namespace oracle {

/// Direct nested-loop valid cross-correlation: input (C_in, S...),
/// kernels (C_out, C_in, K...), summing over input channels.
template <typename Scalar>
ndpnn::Tensor<Scalar> reference_conv(const ndpnn::Tensor<Scalar>& input,
                                     const ndpnn::Tensor<Scalar>& kernels, int rank) {
    const auto& is = input.shape();
    const auto& ks = kernels.shape();
    const std::size_t c_in = is[0], c_out = ks[0];
    std::size_t os[3] = {1, 1, 1}, in_sp[3] = {1, 1, 1}, k_sp[3] = {1, 1, 1};
    for (int i = 0; i < rank; ++i) {
        in_sp[i] = is[static_cast<std::size_t>(i) + 1];
        k_sp[i] = ks[static_cast<std::size_t>(i) + 2];
        os[i] = in_sp[i] - k_sp[i] + 1;
    }
    std::vector<std::size_t> out_shape{c_out};
    for (int i = 0; i < rank; ++i) out_shape.push_back(os[i]);
    ndpnn::Tensor<Scalar> out(out_shape);

    for (std::size_t oc = 0; oc < c_out; ++oc)
        for (std::size_t z = 0; z < os[0]; ++z)
            for (std::size_t y = 0; y < os[1]; ++y)
                for (std::size_t x = 0; x < os[2]; ++x) {
                    double acc = 0.0;
                    for (std::size_t ic = 0; ic < c_in; ++ic)
                        for (std::size_t kz = 0; kz < k_sp[0]; ++kz)
                            for (std::size_t ky = 0; ky < k_sp[1]; ++ky)
                                for (std::size_t kx = 0; kx < k_sp[2]; ++kx) {
                                    const std::size_t in_flat =
                                        ((ic * in_sp[0] + z + kz) * in_sp[1] + y + ky) * in_sp[2] +
                                        x + kx;
                                    const std::size_t k_flat =
                                        (((oc * c_in + ic) * k_sp[0] + kz) * k_sp[1] + ky) *
                                            k_sp[2] +
                                        kx;
                                    acc += static_cast<double>(input[in_flat]) *
                                           static_cast<double>(kernels[k_flat]);
                                }
                    const std::size_t out_flat = ((oc * os[0] + z) * os[1] + y) * os[2] + x;
                    out[out_flat] = static_cast<Scalar>(acc);
                }
    return out;
}

/// Central finite difference d(f)/d(x) at step delta.
inline double central_diff(const std::function<double(double)>& f, double x, double delta) {
    return (f(x + delta) - f(x - delta)) / (2.0 * delta);
}

/// Gauss-Legendre nodes and weights on [-1, 1], found by Newton iteration on
/// the Legendre recurrence. Exact for polynomials of degree <= 2n-1.
struct Quadrature {
    std::vector<double> nodes;
    std::vector<double> weights;
};

inline Quadrature gauss_legendre(int n) {
    Quadrature q;
    q.nodes.resize(static_cast<std::size_t>(n));
    q.weights.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double x = std::cos(3.14159265358979323846 * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        q.nodes[static_cast<std::size_t>(i)] = x;
        q.weights[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    return q;
}

/// Mean squared deviation between two polynomials (coefficient vectors,
/// constant first) over [-a, a], by quadrature exact at these degrees.
inline double poly_mse(const std::vector<double>& p, const std::vector<double>& q, double a) {
    const int n = static_cast<int>(std::max(p.size(), q.size()));
    const Quadrature gq = gauss_legendre(n + 2);
    auto eval = [](const std::vector<double>& c, double x) {
        double y = 0.0;
        for (std::size_t i = c.size(); i-- > 0;) y = y * x + c[i];
        return y;
    };
    double acc = 0.0;
    for (std::size_t i = 0; i < gq.nodes.size(); ++i) {
        const double x = a * gq.nodes[i];
        const double d = eval(p, x) - eval(q, x);
        acc += gq.weights[i] * d * d;
    }
    return acc / 2.0; // normalize the measure to mass 1 on [-a, a]
}

inline ndpnn::Tensor<double> random_tensor(std::vector<std::size_t> shape, ndpnn::Rng& rng,
                                           double lo = -1.0, double hi = 1.0) {
    ndpnn::Tensor<double> t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

inline ndpnn::Tensor<float> random_tensor_f(std::vector<std::size_t> shape, ndpnn::Rng& rng,
                                            double lo = -1.0, double hi = 1.0) {
    ndpnn::Tensor<float> t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

} // namespace oracle
