#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ndpnn/errors.hpp"

namespace ndpnn {

/// Dense N-dimensional array of real samples, row-major, outermost extent
/// first. Shapes are validated once at construction; all operations on
/// tensors are pure value-returning functions, so tensors can be shared
/// read-only across threads.
template <typename Scalar>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(checked_size(shape_), Scalar(0)) {}

    Tensor(std::vector<std::size_t> shape, std::vector<Scalar> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != checked_size(shape_))
            throw shape_error("tensor data length does not match shape product");
    }

    static Tensor full(std::vector<std::size_t> shape, Scalar value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_[axis]; }

    Scalar* data() { return data_.data(); }
    const Scalar* data() const { return data_.data(); }
    std::span<Scalar> values() { return data_; }
    std::span<const Scalar> values() const { return data_; }

    Scalar& operator[](std::size_t flat) { return data_[flat]; }
    const Scalar& operator[](std::size_t flat) const { return data_[flat]; }

    template <typename... Ix>
    Scalar& operator()(Ix... ix) { return data_[flat_index({static_cast<std::size_t>(ix)...})]; }
    template <typename... Ix>
    const Scalar& operator()(Ix... ix) const { return data_[flat_index({static_cast<std::size_t>(ix)...})]; }

    std::size_t flat_index(std::initializer_list<std::size_t> idx) const {
        std::size_t flat = 0;
        std::size_t axis = 0;
        for (std::size_t i : idx) flat = flat * shape_[axis] + i, ++axis;
        return flat;
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    /// Same data, new shape (element counts must agree).
    Tensor reshaped(std::vector<std::size_t> new_shape) const {
        return Tensor(std::move(new_shape), data_);
    }

    template <typename Other>
    Tensor<Other> cast() const {
        std::vector<Other> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<Other>(data_[i]);
        return Tensor<Other>(shape_, std::move(out));
    }

private:
    static std::size_t checked_size(const std::vector<std::size_t>& shape) {
        if (shape.empty()) throw shape_error("tensor shape must be non-empty");
        std::size_t n = 1;
        for (std::size_t e : shape) {
            if (e == 0) throw shape_error("tensor extents must be >= 1");
            if (n > std::numeric_limits<std::size_t>::max() / e)
                throw shape_error("tensor shape product overflows");
            n *= e;
        }
        return n;
    }

    std::vector<std::size_t> shape_;
    std::vector<Scalar> data_;
};

template <typename Scalar>
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::string shape_string(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ')';
    return os.str();
}

/// Elementwise d-th power, d >= 1. Repeated multiplication keeps integer
/// inputs exact, so t^(d1+d2) == t^d1 .* t^d2 holds bit-for-bit on them.
template <typename Scalar>
Tensor<Scalar> hadamard_power(const Tensor<Scalar>& t, int d) {
    if (d < 1) throw std::invalid_argument("hadamard_power: exponent must be >= 1");
    Tensor<Scalar> out = t;
    Scalar* o = out.data();
    const Scalar* in = t.data();
    for (int k = 1; k < d; ++k)
        for (std::size_t i = 0; i < t.size(); ++i) o[i] *= in[i];
    return out;
}

/// Elementwise product of same-shape tensors.
template <typename Scalar>
Tensor<Scalar> hadamard_product(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    if (!a.same_shape(b))
        throw shape_error("hadamard_product: shape mismatch " + shape_string(a.shape()) +
                          " vs " + shape_string(b.shape()));
    Tensor<Scalar> out = a;
    Scalar* o = out.data();
    const Scalar* rhs = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) o[i] *= rhs[i];
    return out;
}

namespace detail {

/// Shape bookkeeping shared by the forward pass and both adjoints.
struct ConvDims {
    int rank = 0;
    std::size_t in_channels = 0, out_channels = 0;
    std::array<std::size_t, 3> in_spatial{}, k_spatial{}, out_spatial{};
    std::size_t in_spatial_prod = 1, k_prod = 1, n_pos = 1, col_width = 0;

    static ConvDims check(const std::vector<std::size_t>& input_shape,
                          const std::vector<std::size_t>& kernel_shape, int rank) {
        if (rank < 1 || rank > 3)
            throw std::invalid_argument("convolve_valid: spatial rank must be 1, 2 or 3");
        ConvDims d;
        d.rank = rank;
        const auto r = static_cast<std::size_t>(rank);
        if (input_shape.size() != r + 1)
            throw shape_error("convolve_valid: input must be (channels, spatial...), got " +
                              shape_string(input_shape));
        if (kernel_shape.size() != r + 2)
            throw shape_error("convolve_valid: kernels must be (out, in, spatial...), got " +
                              shape_string(kernel_shape));
        d.in_channels = input_shape[0];
        d.out_channels = kernel_shape[0];
        if (kernel_shape[1] != d.in_channels)
            throw shape_error("convolve_valid: kernel input channels " +
                              std::to_string(kernel_shape[1]) + " != input channels " +
                              std::to_string(d.in_channels));
        for (std::size_t i = 0; i < r; ++i) {
            d.in_spatial[i] = input_shape[1 + i];
            d.k_spatial[i] = kernel_shape[2 + i];
            if (d.k_spatial[i] > d.in_spatial[i])
                throw shape_error("convolve_valid: kernel extent exceeds input extent on axis " +
                                  std::to_string(i));
            d.out_spatial[i] = d.in_spatial[i] - d.k_spatial[i] + 1;
            d.in_spatial_prod *= d.in_spatial[i];
            d.k_prod *= d.k_spatial[i];
            d.n_pos *= d.out_spatial[i];
        }
        d.col_width = d.in_channels * d.k_prod;
        return d;
    }

    std::vector<std::size_t> output_shape() const {
        std::vector<std::size_t> s{out_channels};
        for (int i = 0; i < rank; ++i) s.push_back(out_spatial[i]);
        return s;
    }

    /// Flat input offset of (channel j, kernel tap k) relative to an output
    /// position's base offset.
    std::vector<std::size_t> column_offsets() const {
        std::array<std::size_t, 3> stride{};
        stride[rank - 1] = 1;
        for (int i = rank - 2; i >= 0; --i) stride[i] = stride[i + 1] * in_spatial[i + 1];
        std::vector<std::size_t> off(col_width);
        std::size_t c = 0;
        for (std::size_t j = 0; j < in_channels; ++j) {
            std::array<std::size_t, 3> k{};
            for (std::size_t t = 0; t < k_prod; ++t) {
                std::size_t o = j * in_spatial_prod;
                for (int i = 0; i < rank; ++i) o += k[i] * stride[i];
                off[c++] = o;
                for (int i = rank - 1; i >= 0; --i) {
                    if (++k[i] < k_spatial[i]) break;
                    k[i] = 0;
                }
            }
        }
        return off;
    }

    /// Flat input base offset of every output position, row-major over the
    /// output spatial grid.
    std::vector<std::size_t> position_offsets() const {
        std::array<std::size_t, 3> stride{};
        stride[rank - 1] = 1;
        for (int i = rank - 2; i >= 0; --i) stride[i] = stride[i + 1] * in_spatial[i + 1];
        std::vector<std::size_t> base(n_pos);
        std::array<std::size_t, 3> o{};
        for (std::size_t p = 0; p < n_pos; ++p) {
            std::size_t b = 0;
            for (int i = 0; i < rank; ++i) b += o[i] * stride[i];
            base[p] = b;
            for (int i = rank - 1; i >= 0; --i) {
                if (++o[i] < out_spatial[i]) break;
                o[i] = 0;
            }
        }
        return base;
    }
};

/// Patch matrix (n_pos x col_width): row p holds the receptive field of
/// output position p across all input channels.
template <typename Scalar>
RowMat<Scalar> im2col(const Tensor<Scalar>& input, const ConvDims& d) {
    RowMat<Scalar> patches(d.n_pos, d.col_width);
    const auto col = d.column_offsets();
    const auto base = d.position_offsets();
    const Scalar* in = input.data();
    for (std::size_t p = 0; p < d.n_pos; ++p) {
        Scalar* row = patches.data() + p * d.col_width;
        const Scalar* src = in + base[p];
        for (std::size_t c = 0; c < d.col_width; ++c) row[c] = src[col[c]];
    }
    return patches;
}

} // namespace detail

/// Valid cross-correlation of a (C_in, spatial...) input against a
/// (C_out, C_in, spatial...) kernel bank, summing over input channels.
/// Output spatial extent is input - kernel + 1 per axis.
template <typename Scalar>
Tensor<Scalar> convolve_valid(const Tensor<Scalar>& input, const Tensor<Scalar>& kernels,
                              int spatial_rank) {
    const auto d = detail::ConvDims::check(input.shape(), kernels.shape(), spatial_rank);
    const auto patches = detail::im2col(input, d);
    Tensor<Scalar> out(d.output_shape());
    Eigen::Map<const RowMat<Scalar>> w(kernels.data(), d.out_channels, d.col_width);
    Eigen::Map<RowMat<Scalar>> o(out.data(), d.out_channels, d.n_pos);
    o.noalias() = w * patches.transpose();
    return out;
}

/// Adjoint of convolve_valid with respect to the kernel bank.
template <typename Scalar>
Tensor<Scalar> convolve_grad_kernels(const Tensor<Scalar>& input, const Tensor<Scalar>& grad_out,
                                     const std::vector<std::size_t>& kernel_shape,
                                     int spatial_rank) {
    const auto d = detail::ConvDims::check(input.shape(), kernel_shape, spatial_rank);
    const auto patches = detail::im2col(input, d);
    Tensor<Scalar> grad(kernel_shape);
    Eigen::Map<const RowMat<Scalar>> g(grad_out.data(), d.out_channels, d.n_pos);
    Eigen::Map<RowMat<Scalar>> gw(grad.data(), d.out_channels, d.col_width);
    gw.noalias() = g * patches;
    return grad;
}

/// Adjoint of convolve_valid with respect to the input.
template <typename Scalar>
Tensor<Scalar> convolve_grad_input(const std::vector<std::size_t>& input_shape,
                                   const Tensor<Scalar>& kernels, const Tensor<Scalar>& grad_out,
                                   int spatial_rank) {
    const auto d = detail::ConvDims::check(input_shape, kernels.shape(), spatial_rank);
    Eigen::Map<const RowMat<Scalar>> g(grad_out.data(), d.out_channels, d.n_pos);
    Eigen::Map<const RowMat<Scalar>> w(kernels.data(), d.out_channels, d.col_width);
    RowMat<Scalar> grad_patches = g.transpose() * w; // (n_pos, col_width)
    Tensor<Scalar> grad(input_shape);
    const auto col = d.column_offsets();
    const auto base = d.position_offsets();
    Scalar* out = grad.data();
    for (std::size_t p = 0; p < d.n_pos; ++p) {
        const Scalar* row = grad_patches.data() + p * d.col_width;
        Scalar* dst = out + base[p];
        for (std::size_t c = 0; c < d.col_width; ++c) dst[col[c]] += row[c];
    }
    return grad;
}

// ---------------------------------------------------------------------------
// NDT1 on-disk format: magic "NDT1", u8 rank (<= 8), rank x u32-LE extents,
// then product-of-extents f32-LE samples. No padding.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline bool get_u32le(std::istream& is, std::uint32_t& v) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
    v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
        (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    return true;
}

} // namespace detail

inline void write_ndt1(const Tensor<float>& t, std::ostream& os) {
    if (t.rank() > 8) throw format_error("NDT1: rank > 8 not representable");
    os.write("NDT1", 4);
    const unsigned char rank = static_cast<unsigned char>(t.rank());
    os.write(reinterpret_cast<const char*>(&rank), 1);
    for (std::size_t e : t.shape()) {
        if (e > 0xffffffffULL) throw format_error("NDT1: extent exceeds 32 bits");
        detail::put_u32le(os, static_cast<std::uint32_t>(e));
    }
    for (float x : t.values()) {
        std::uint32_t bits;
        std::memcpy(&bits, &x, 4);
        detail::put_u32le(os, bits);
    }
    if (!os) throw format_error("NDT1: write failed");
}

inline Tensor<float> read_ndt1(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "NDT1", 4) != 0)
        throw format_error("NDT1: bad magic");
    unsigned char rank;
    if (!is.read(reinterpret_cast<char*>(&rank), 1)) throw format_error("NDT1: truncated header");
    if (rank == 0 || rank > 8) throw format_error("NDT1: rank out of range");
    std::vector<std::size_t> shape(rank);
    std::uint64_t count = 1;
    for (auto& e : shape) {
        std::uint32_t v;
        if (!detail::get_u32le(is, v)) throw format_error("NDT1: truncated extents");
        if (v == 0) throw format_error("NDT1: zero extent");
        e = v;
        count *= v;
        if (count > (1ULL << 33)) throw format_error("NDT1: payload too large");
    }
    std::vector<float> data(count);
    for (auto& x : data) {
        std::uint32_t bits;
        if (!detail::get_u32le(is, bits)) throw format_error("NDT1: truncated payload");
        std::memcpy(&x, &bits, 4);
    }
    return Tensor<float>(std::move(shape), std::move(data));
}

inline void write_ndt1(const Tensor<float>& t, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw format_error("NDT1: cannot open for writing: " + path.string());
    write_ndt1(t, os);
}

inline Tensor<float> read_ndt1(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw format_error("NDT1: cannot open: " + path.string());
    return read_ndt1(is);
}

} // namespace ndpnn
