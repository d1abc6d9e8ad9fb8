#pragma once

#include <cmath>
#include <string>

#include "ndpnn/errors.hpp"

namespace ndpnn {

/// Comparison slack for feasibility checks. All geometry runs in 64-bit
/// reals; at pixel scales this absorbs rounding without hiding real
/// violations.
inline constexpr double kGeomTol = 1e-9;

/// Validated bundle of sliding-window parameters shared by the planner and
/// the transform: window count M (a square), overlap limits, window height h,
/// window aspect ratio gamma (width = gamma*h), and the height clamps applied
/// to images before windowing.
struct GeometrySpec {
    int window_count = 9;        // M, square; sqrt(M) integer >= 2 unless M == 1
    double alpha_min = 0.0;
    double alpha_max = 0.0;
    int window_height = 0;       // h, pixels
    double gamma = 1.0;          // window width / height
    int h_min_clamp = 0;         // smallest image height admitted
    int h_max_clamp = 0;         // largest image height admitted

    int grid_side() const {
        const int s = static_cast<int>(std::llround(std::sqrt(static_cast<double>(window_count))));
        return s;
    }

    void validate() const {
        const int s = grid_side();
        if (window_count < 1 || s * s != window_count)
            throw std::invalid_argument("geometry: window count must be a square integer");
        if (window_count > 1 && s < 2)
            throw std::invalid_argument("geometry: sqrt(window count) must be >= 2");
        if (!(alpha_min >= 0.0 && alpha_min <= alpha_max && alpha_max < 1.0))
            throw std::invalid_argument("geometry: need 0 <= alpha_min <= alpha_max < 1");
        if (window_height < 1) throw std::invalid_argument("geometry: window height must be >= 1");
        if (gamma <= 0.0) throw std::invalid_argument("geometry: gamma must be positive");
        if (h_min_clamp < 1 || h_max_clamp < h_min_clamp)
            throw std::invalid_argument("geometry: need 1 <= h_min_clamp <= h_max_clamp");
        if (window_height > h_min_clamp)
            throw std::invalid_argument("geometry: window height exceeds smallest admitted image");
        if (window_count == 1 && window_height != h_min_clamp)
            throw std::invalid_argument("geometry: single-window mode requires h == image height");
    }
};

/// Number of overlapping windows of size (h, w) needed to tile an (H, W)
/// image at overlap alpha. Real-valued; callers check integrality.
inline double window_count(double H, double W, double h, double w, double alpha) {
    if (h > H || w > W) throw std::invalid_argument("window_count: window larger than image");
    if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("window_count: alpha outside [0,1)");
    return ((H - h) / ((1.0 - alpha) * h) + 1.0) * ((W - w) / ((1.0 - alpha) * w) + 1.0);
}

/// True iff (h, w, M) can cover an (H, W) image with non-negative overlap.
inline bool feasibility_check(double h, double w, double M, double H, double W) {
    return h * w * M >= H * W;
}

/// Overlap solving window_count(H, W, h, w, alpha) = M for a general
/// rectangular image; the unique root in [0, 1) of the underlying quadratic.
inline double overlap_general(double H, double W, double h, double w, double M) {
    if (!(H > h && W > w)) throw std::invalid_argument("overlap_general: need H > h and W > w");
    if (!(M > 1.0)) throw std::invalid_argument("overlap_general: need M > 1");
    if (!feasibility_check(h, w, M, H, W))
        throw infeasible_error("overlap_general: h*w*M < H*W, image cannot be covered");
    const double cross = (H - h) * w + (W - w) * h;
    const double disc = cross * cross + 4.0 * h * w * (H - h) * (W - w) * (M - 1.0);
    return 1.0 - (cross + std::sqrt(disc)) / (2.0 * h * w * (M - 1.0));
}

/// Overlap for the square-aspect case: alpha = (sqrt(M)*h - H) / (h*(sqrt(M)-1)).
/// Requires h < H <= sqrt(M)*h so that alpha lands in [0, 1).
/// M == 1 degenerates to a single flush window (alpha 0, H == h).
inline double overlap_square(double H, double h, int M) {
    if (H < h) throw std::invalid_argument("overlap_square: image smaller than window");
    const int s = static_cast<int>(std::llround(std::sqrt(static_cast<double>(M))));
    if (M < 1 || s * s != M) throw std::invalid_argument("overlap_square: M must be a square integer");
    if (M == 1) {
        if (H - h > kGeomTol * h)
            throw infeasible_error("overlap_square: M = 1 requires H == h");
        return 0.0;
    }
    const double sq = static_cast<double>(s);
    if (H > sq * h + kGeomTol)
        throw infeasible_error("overlap_square: H > sqrt(M)*h, overlap would be negative");
    if (H - h <= kGeomTol * h)
        throw infeasible_error("overlap_square: H == h with M > 1, windows cannot advance");
    return (sq * h - H) / (h * (sq - 1.0));
}

/// Feasible window heights for a dataset spanning [H_min, H_max].
struct HeightInterval {
    double lo = 0.0; // H_max / (sqrt(M) - alpha_min*(sqrt(M)-1))
    double hi = 0.0; // H_min / (sqrt(M) - alpha_max*(sqrt(M)-1))
};

inline HeightInterval feasible_window_height_range(double H_min, double H_max, int M,
                                                   double alpha_min, double alpha_max) {
    if (!(H_min > 0.0 && H_max >= H_min))
        throw std::invalid_argument("height range: need 0 < H_min <= H_max");
    if (!(alpha_min >= 0.0 && alpha_min <= alpha_max && alpha_max < 1.0))
        throw std::invalid_argument("height range: need 0 <= alpha_min <= alpha_max < 1");
    const int s = static_cast<int>(std::llround(std::sqrt(static_cast<double>(M))));
    if (s < 2 || s * s != M)
        throw std::invalid_argument("height range: sqrt(M) must be an integer >= 2");
    const double sq = static_cast<double>(s);
    HeightInterval iv;
    iv.lo = H_max / (sq - alpha_min * (sq - 1.0));
    iv.hi = H_min / (sq - alpha_max * (sq - 1.0));
    // Matches the acceptance slack of validate_parameter_order: a tuple
    // admitted there within kGeomTol never reports an empty interval here.
    if (iv.lo > iv.hi + kGeomTol * std::max(1.0, H_max))
        throw infeasible_error("height range: empty interval, parameters infeasible");
    return iv;
}

/// Upper bound on the admissible ratio H_max'/H_min' once (M, alpha_min,
/// alpha_max) are fixed.
inline double max_height_ratio(int M, double alpha_min, double alpha_max) {
    const double sq = std::sqrt(static_cast<double>(M));
    return (sq - alpha_min * (sq - 1.0)) / (sq - alpha_max * (sq - 1.0));
}

/// Largest number of windows that can contain one pixel at overlap alpha.
inline double oversampling_factor(double alpha) {
    if (!(alpha >= 0.0 && alpha < 1.0))
        throw std::invalid_argument("oversampling_factor: alpha outside [0,1)");
    return 1.0 / ((1.0 - alpha) * (1.0 - alpha));
}

/// The six admissible orders in which (M, alpha_min, alpha_max) can be fixed.
/// Each has its own sufficient-condition chain; the two orders that fix
/// alpha_min first leave it unconstrained and are the recommended defaults.
enum class ParameterOrder {
    m_amin_amax,
    m_amax_amin,
    amin_m_amax,
    amin_amax_m,
    amax_m_amin,
    amax_amin_m,
};

struct ValidationResult {
    bool ok = true;
    std::string violated; // first failed inequality, empty when ok
};

/// Checks the inequality chain of one parameter-order branch.
/// Conditions of the form sqrt(M) >= num/den are evaluated cross-multiplied
/// (den >= 0 is guaranteed by the preceding condition in each chain), which
/// also handles the den == 0 degenerate case.
inline ValidationResult validate_parameter_order(ParameterOrder order, double H_min, double H_max,
                                                 int M, double alpha_min, double alpha_max) {
    if (!(H_min > 0.0 && H_max >= H_min))
        throw std::invalid_argument("validate_parameter_order: need 0 < H_min <= H_max");
    if (!(alpha_min >= 0.0 && alpha_min <= alpha_max && alpha_max < 1.0))
        throw std::invalid_argument("validate_parameter_order: need 0 <= alpha_min <= alpha_max < 1");
    const int s = static_cast<int>(std::llround(std::sqrt(static_cast<double>(M))));
    if (s < 2 || s * s != M)
        throw std::invalid_argument("validate_parameter_order: sqrt(M) must be an integer >= 2");

    const double sq = static_cast<double>(s);
    const double r = H_max / H_min;          // >= 1
    const double q = sq / (sq - 1.0);
    auto fail = [](std::string what) { return ValidationResult{false, std::move(what)}; };

    switch (order) {
    case ParameterOrder::m_amin_amax:
        if (!(sq >= r - kGeomTol)) return fail("sqrt(M) >= H_max/H_min");
        if (!(alpha_min <= r + (1.0 - r) * q + kGeomTol))
            return fail("alpha_min <= H_max/H_min + (1 - H_max/H_min)*sqrt(M)/(sqrt(M)-1)");
        if (!(alpha_max >= (1.0 - 1.0 / r) * q + alpha_min / r - kGeomTol))
            return fail("alpha_max >= (1 - H_min/H_max)*sqrt(M)/(sqrt(M)-1) + (H_min/H_max)*alpha_min");
        return {};
    case ParameterOrder::m_amax_amin:
        if (!(sq >= r - kGeomTol)) return fail("sqrt(M) >= H_max/H_min");
        if (!(alpha_max >= (1.0 - 1.0 / r) * q - kGeomTol))
            return fail("alpha_max >= (1 - H_min/H_max)*sqrt(M)/(sqrt(M)-1)");
        if (!(alpha_min <= r * alpha_max + (1.0 - r) * q + kGeomTol))
            return fail("alpha_min <= (H_max/H_min)*alpha_max + (1 - H_max/H_min)*sqrt(M)/(sqrt(M)-1)");
        return {};
    case ParameterOrder::amin_m_amax:
        if (!(sq * (1.0 - alpha_min) * H_min >= H_max - H_min * alpha_min - kGeomTol * H_max))
            return fail("sqrt(M) >= (H_max - H_min*alpha_min)/((1 - alpha_min)*H_min)");
        if (!(alpha_max >= (1.0 - 1.0 / r) * q + alpha_min / r - kGeomTol))
            return fail("alpha_max >= (1 - H_min/H_max)*sqrt(M)/(sqrt(M)-1) + (H_min/H_max)*alpha_min");
        return {};
    case ParameterOrder::amin_amax_m:
        if (!(alpha_max >= 1.0 - (1.0 - alpha_min) * H_min / H_max - kGeomTol))
            return fail("alpha_max >= 1 - (1 - alpha_min)*H_min/H_max");
        if (!(sq * (H_min * (1.0 - alpha_min) - H_max * (1.0 - alpha_max)) >=
              H_max * alpha_max - H_min * alpha_min - kGeomTol * H_max))
            return fail("sqrt(M) >= (H_max*alpha_max - H_min*alpha_min)/"
                        "(H_min*(1 - alpha_min) - H_max*(1 - alpha_max))");
        return {};
    case ParameterOrder::amax_m_amin:
        if (!(alpha_max >= 1.0 - 1.0 / r - kGeomTol)) return fail("alpha_max >= 1 - H_min/H_max");
        if (!(sq * (H_min - (1.0 - alpha_max) * H_max) >= H_max * alpha_max - kGeomTol * H_max))
            return fail("sqrt(M) >= H_max*alpha_max/(H_min - (1 - alpha_max)*H_max)");
        if (!(alpha_min <= r * alpha_max + (1.0 - r) * q + kGeomTol))
            return fail("alpha_min <= (H_max/H_min)*alpha_max + (1 - H_max/H_min)*sqrt(M)/(sqrt(M)-1)");
        return {};
    case ParameterOrder::amax_amin_m:
        if (!(alpha_max >= 1.0 - 1.0 / r - kGeomTol)) return fail("alpha_max >= 1 - H_min/H_max");
        if (!(alpha_min <= 1.0 - r * (1.0 - alpha_max) + kGeomTol))
            return fail("alpha_min <= 1 - (H_max/H_min)*(1 - alpha_max)");
        if (!(sq * (H_min * (1.0 - alpha_min) - H_max * (1.0 - alpha_max)) >=
              H_max * alpha_max - H_min * alpha_min - kGeomTol * H_max))
            return fail("sqrt(M) >= (H_max*alpha_max - H_min*alpha_min)/"
                        "(H_min*(1 - alpha_min) - H_max*(1 - alpha_max))");
        return {};
    }
    throw std::invalid_argument("validate_parameter_order: unknown order");
}

} // namespace ndpnn
