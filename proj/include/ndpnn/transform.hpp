#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ndpnn/errors.hpp"
#include "ndpnn/geometry.hpp"
#include "ndpnn/tensor.hpp"

namespace ndpnn {

/// Orders in which the M windows are visited. All three visit the same
/// origin grid; they differ only in the traversal, and every traversal keeps
/// consecutive windows adjacent so the stack reads like a video.
enum class SlidingPattern { horizontal_serpentine, vertical_serpentine, spiral_inward };

inline const char* pattern_name(SlidingPattern p) {
    switch (p) {
    case SlidingPattern::horizontal_serpentine: return "horizontal";
    case SlidingPattern::vertical_serpentine: return "vertical";
    case SlidingPattern::spiral_inward: return "spiral";
    }
    return "?";
}

inline SlidingPattern parse_pattern(const std::string& name) {
    if (name == "horizontal") return SlidingPattern::horizontal_serpentine;
    if (name == "vertical") return SlidingPattern::vertical_serpentine;
    if (name == "spiral") return SlidingPattern::spiral_inward;
    throw std::invalid_argument("unknown sliding pattern: " + name);
}

/// Height/width metadata of one image; aspect ratio beta = W/H must match
/// the window aspect gamma (relative tolerance 1e-6).
struct ImageMeta {
    int height = 0;
    int width = 0;
    int channels = 1;

    double aspect_ratio() const { return static_cast<double>(width) / height; }

    void require_aspect(double gamma) const {
        if (std::abs(aspect_ratio() - gamma) > 1e-6 * gamma)
            throw aspect_error("image aspect " + std::to_string(aspect_ratio()) +
                               " != window aspect " + std::to_string(gamma));
    }
};

using Origin = std::pair<int, int>; // (row, col) of a window's top-left pixel

namespace detail {

inline int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

/// Offsets 0 = o_0 < ... < o_{s-1} = span for one axis: real offsets
/// k*span/(s-1) rounded half-up, then clamped so the last window sits flush
/// with the far edge. Rounding moves an offset by at most half a pixel.
inline std::vector<int> axis_offsets(int span, int grid_side) {
    std::vector<int> off(grid_side);
    if (grid_side == 1) {
        off[0] = 0;
        return off;
    }
    const double step = static_cast<double>(span) / (grid_side - 1);
    for (int k = 0; k < grid_side; ++k)
        off[k] = std::clamp(round_half_up(k * step), 0, span);
    return off;
}

inline std::vector<std::pair<int, int>> spiral_grid(int s) {
    std::vector<std::pair<int, int>> seq;
    seq.reserve(static_cast<std::size_t>(s) * s);
    int top = 0, bottom = s - 1, left = 0, right = s - 1;
    while (top <= bottom && left <= right) {
        for (int c = left; c <= right; ++c) seq.emplace_back(top, c);
        ++top;
        for (int r = top; r <= bottom; ++r) seq.emplace_back(r, right);
        --right;
        if (top <= bottom)
            for (int c = right; c >= left; --c) seq.emplace_back(bottom, c);
        --bottom;
        if (left <= right)
            for (int r = bottom; r >= top; --r) seq.emplace_back(r, left);
        ++left;
    }
    return seq;
}

} // namespace detail

/// Window origins for an (H, W) image under the time-coherent sliding
/// pattern: row offsets advance by (1-alpha)h = (H-h)/(sqrt(M)-1), columns by
/// the matching width step, and rows (or columns) alternate direction so
/// consecutive windows always overlap. alpha must equal
/// overlap_square(H, h, M); anything else is rejected.
inline std::vector<Origin> window_origins(int H, int W, int h, double gamma, int M, double alpha,
                                          SlidingPattern pattern) {
    const int w = static_cast<int>(std::llround(gamma * h));
    if (std::abs(gamma * h - w) > 1e-6 * std::max(1.0, gamma * h))
        throw std::invalid_argument("window_origins: gamma*h is not an integer pixel width");
    ImageMeta{H, W, 1}.require_aspect(gamma);
    const double expected = overlap_square(H, h, M);
    if (std::abs(alpha - expected) > 1e-9)
        throw std::invalid_argument("window_origins: alpha inconsistent with (H, h, M)");
    if (M == 1) return {Origin{0, 0}};

    const int s = static_cast<int>(std::llround(std::sqrt(static_cast<double>(M))));
    // A step below one pixel would make rounded origins coincide; every
    // origin must be visited at most once.
    if (H - h < s - 1)
        throw geometry_error("window_origins: offset step below one pixel, windows would coincide");
    const auto row_off = detail::axis_offsets(H - h, s);
    const auto col_off = detail::axis_offsets(W - w, s);

    std::vector<Origin> origins;
    origins.reserve(static_cast<std::size_t>(M));
    switch (pattern) {
    case SlidingPattern::horizontal_serpentine:
        for (int n = 0; n < M; ++n) {
            const int row = n / s;
            const int j = n - row * s;
            const int col = (row % 2 == 0) ? j : s - 1 - j;
            origins.emplace_back(row_off[row], col_off[col]);
        }
        break;
    case SlidingPattern::vertical_serpentine:
        for (int n = 0; n < M; ++n) {
            const int col = n / s;
            const int i = n - col * s;
            const int row = (col % 2 == 0) ? i : s - 1 - i;
            origins.emplace_back(row_off[row], col_off[col]);
        }
        break;
    case SlidingPattern::spiral_inward:
        for (const auto& [r, c] : detail::spiral_grid(s)) origins.emplace_back(row_off[r], col_off[c]);
        break;
    }
    return origins;
}

/// How images outside the admitted height range are brought back in.
enum class SmallImageMode { pad, magnify };

inline SmallImageMode parse_small_mode(const std::string& name) {
    if (name == "pad") return SmallImageMode::pad;
    if (name == "magnify") return SmallImageMode::magnify;
    throw std::invalid_argument("unknown small-image mode: " + name);
}

/// Bilinear resize of a (C, H, W) image to (C, out_h, out_w), pixel-center
/// aligned. Constant images stay constant.
template <typename Scalar>
Tensor<Scalar> resize_bilinear(const Tensor<Scalar>& image, int out_h, int out_w) {
    if (image.rank() != 3) throw shape_error("resize_bilinear: image must be (C, H, W)");
    const int C = static_cast<int>(image.extent(0));
    const int H = static_cast<int>(image.extent(1));
    const int W = static_cast<int>(image.extent(2));
    Tensor<Scalar> out({static_cast<std::size_t>(C), static_cast<std::size_t>(out_h),
                        static_cast<std::size_t>(out_w)});
    const double sy = static_cast<double>(H) / out_h;
    const double sx = static_cast<double>(W) / out_w;
    for (int y = 0; y < out_h; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(H - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, H - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(W - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, W - 1);
            const double wx = fx - x0;
            for (int c = 0; c < C; ++c) {
                const double v00 = image(c, y0, x0), v01 = image(c, y0, x1);
                const double v10 = image(c, y1, x0), v11 = image(c, y1, x1);
                const double v = (1 - wy) * ((1 - wx) * v00 + wx * v01) +
                                 wy * ((1 - wx) * v10 + wx * v11);
                out(c, y, x) = static_cast<Scalar>(v);
            }
        }
    }
    return out;
}

/// Brings an image's height into [h_min_clamp, h_max_clamp]: taller images
/// are shrunk, shorter ones zero-padded (centered) or magnified, in-range
/// images are returned untouched. Aspect ratio is preserved.
template <typename Scalar>
Tensor<Scalar> clamp_resize(const Tensor<Scalar>& image, int h_min_clamp, int h_max_clamp,
                            SmallImageMode small_mode) {
    if (image.rank() != 3) throw shape_error("clamp_resize: image must be (C, H, W)");
    const int C = static_cast<int>(image.extent(0));
    const int H = static_cast<int>(image.extent(1));
    const int W = static_cast<int>(image.extent(2));
    if (H > h_max_clamp) {
        const int out_w = static_cast<int>(std::llround(static_cast<double>(W) * h_max_clamp / H));
        return resize_bilinear(image, h_max_clamp, std::max(out_w, 1));
    }
    if (H < h_min_clamp) {
        const int out_w = static_cast<int>(std::llround(static_cast<double>(W) * h_min_clamp / H));
        if (small_mode == SmallImageMode::magnify)
            return resize_bilinear(image, h_min_clamp, std::max(out_w, 1));
        Tensor<Scalar> out({static_cast<std::size_t>(C), static_cast<std::size_t>(h_min_clamp),
                            static_cast<std::size_t>(out_w)});
        const int top = (h_min_clamp - H) / 2;
        const int left = (out_w - W) / 2;
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) out(c, y + top, x + left) = image(c, y, x);
        return out;
    }
    return image;
}

/// Fixed-size (M, C, h, w) stack cut from one image, with the geometry that
/// produced it. Every frame is a verbatim crop; no pixel is synthesized.
template <typename Scalar>
struct WindowStack {
    Tensor<Scalar> stack;
    std::string image_id;
    GeometrySpec spec;
    double alpha = 0.0; // per-image overlap solved from the clamped height
    SlidingPattern pattern = SlidingPattern::horizontal_serpentine;
    std::vector<Origin> origins;
};

/// Cuts the M-window stack from a (C, H, W) image whose height is already
/// inside the spec's clamp range.
template <typename Scalar>
WindowStack<Scalar> extract_stack(const Tensor<Scalar>& image, const GeometrySpec& spec,
                                  SlidingPattern pattern, std::string image_id = {}) {
    spec.validate();
    if (image.rank() != 3) throw shape_error("extract_stack: image must be (C, H, W)");
    const ImageMeta meta{static_cast<int>(image.extent(1)), static_cast<int>(image.extent(2)),
                         static_cast<int>(image.extent(0))};
    const int C = meta.channels;
    const int H = meta.height;
    const int W = meta.width;
    if (H < spec.h_min_clamp || H > spec.h_max_clamp)
        throw geometry_error("extract_stack: image height " + std::to_string(H) +
                             " outside clamp range [" + std::to_string(spec.h_min_clamp) + ", " +
                             std::to_string(spec.h_max_clamp) + "]");
    meta.require_aspect(spec.gamma);
    double alpha;
    try {
        alpha = overlap_square(H, spec.window_height, spec.window_count);
    } catch (const infeasible_error& e) {
        throw geometry_error(std::string("extract_stack: ") + e.what());
    }
    const auto origins =
        window_origins(H, W, spec.window_height, spec.gamma, spec.window_count, alpha, pattern);

    const int h = spec.window_height;
    const int w = static_cast<int>(std::llround(spec.gamma * h));
    WindowStack<Scalar> ws;
    ws.stack = Tensor<Scalar>({static_cast<std::size_t>(spec.window_count),
                               static_cast<std::size_t>(C), static_cast<std::size_t>(h),
                               static_cast<std::size_t>(w)});
    ws.image_id = std::move(image_id);
    ws.spec = spec;
    ws.alpha = alpha;
    ws.pattern = pattern;
    ws.origins = origins;
    for (std::size_t n = 0; n < origins.size(); ++n) {
        const auto [r0, c0] = origins[n];
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < h; ++y) {
                const Scalar* src = image.data() + (static_cast<std::size_t>(c) * H + (r0 + y)) * W + c0;
                Scalar* dst = ws.stack.data() +
                              ((n * C + static_cast<std::size_t>(c)) * h + static_cast<std::size_t>(y)) * w;
                std::copy(src, src + w, dst);
            }
    }
    return ws;
}

/// Intersection area / window area for every consecutive window pair. With
/// exact (unrounded) offsets every fraction equals alpha; integer rounding
/// perturbs each origin by at most one pixel, i.e. each fraction by <= 2/h.
struct CoherenceReport {
    std::vector<double> fractions;
    double alpha = 0.0;
    double max_abs_deviation = 0.0;
};

inline CoherenceReport coherence_report(const std::vector<std::pair<double, double>>& origins,
                                        double h, double gamma_h, double alpha) {
    CoherenceReport rep;
    rep.alpha = alpha;
    for (std::size_t i = 0; i + 1 < origins.size(); ++i) {
        const double dr = std::abs(origins[i + 1].first - origins[i].first);
        const double dc = std::abs(origins[i + 1].second - origins[i].second);
        const double inter = std::max(0.0, h - dr) * std::max(0.0, gamma_h - dc);
        const double frac = inter / (h * gamma_h);
        rep.fractions.push_back(frac);
        rep.max_abs_deviation = std::max(rep.max_abs_deviation, std::abs(frac - alpha));
    }
    return rep;
}

inline CoherenceReport coherence_report(const std::vector<Origin>& origins, int h, int gamma_h,
                                        double alpha) {
    std::vector<std::pair<double, double>> real;
    real.reserve(origins.size());
    for (const auto& [r, c] : origins) real.emplace_back(r, c);
    return coherence_report(real, static_cast<double>(h), static_cast<double>(gamma_h), alpha);
}

} // namespace ndpnn
