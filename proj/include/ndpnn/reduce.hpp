#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "ndpnn/errors.hpp"
#include "ndpnn/network.hpp"
#include "ndpnn/train.hpp"

namespace ndpnn {

/// One scalar polynomial c_0 + c_1 x + ... + c_D x^D considered on the
/// symmetric interval [-half_width, half_width]. The degree is declared by
/// the coefficient count; the leading coefficient may be zero.
struct Poly {
    std::vector<double> coeffs;
    double half_width = 1.0;

    int degree() const { return static_cast<int>(coeffs.size()) - 1; }

    double eval(double x) const {
        double y = 0.0;
        for (std::size_t i = coeffs.size(); i-- > 0;) y = y * x + coeffs[i];
        return y;
    }
};

namespace detail {

/// Rows are Legendre polynomials in monomial coefficients: L(k, j) is the
/// x^j coefficient of P_k, from (k+1) P_{k+1} = (2k+1) x P_k - k P_{k-1}.
inline Eigen::MatrixXd legendre_basis(int degree) {
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(degree + 1, degree + 1);
    l(0, 0) = 1.0;
    if (degree >= 1) l(1, 1) = 1.0;
    for (int k = 1; k < degree; ++k) {
        for (int j = 0; j <= k; ++j)
            l(k + 1, j + 1) += (2.0 * k + 1.0) / (k + 1.0) * l(k, j);
        for (int j = 0; j <= degree; ++j)
            l(k + 1, j) -= static_cast<double>(k) / (k + 1.0) * l(k - 1, j);
    }
    return l;
}

/// L2 projection onto degree <= to_degree over [-half_width, half_width],
/// as a matrix acting on monomial coefficient vectors (constant term first).
inline Eigen::MatrixXd projection_matrix(int from_degree, int to_degree, double half_width) {
    const int n = from_degree;
    const Eigen::MatrixXd basis = legendre_basis(n);

    // moments(i, k) = integral over [-1,1] of u^i P_k(u)
    Eigen::MatrixXd moments = Eigen::MatrixXd::Zero(n + 1, n + 1);
    for (int i = 0; i <= n; ++i)
        for (int k = 0; k <= n; ++k) {
            double s = 0.0;
            for (int j = 0; j <= k; ++j)
                if ((i + j) % 2 == 0) s += basis(k, j) * 2.0 / (i + j + 1.0);
            moments(i, k) = s;
        }

    // analysis(k, i): monomial coeffs (in u) -> Legendre coefficient a_k
    Eigen::MatrixXd analysis(n + 1, n + 1);
    for (int k = 0; k <= n; ++k)
        for (int i = 0; i <= n; ++i)
            analysis(k, i) = (2.0 * k + 1.0) / 2.0 * moments(i, k);

    // synthesis of the truncated series back to monomials in u
    Eigen::MatrixXd proj_u = basis.topRows(to_degree + 1).transpose() *
                             analysis.topRows(to_degree + 1); // (n+1) x (n+1), rows > to_degree zero

    // fold in the x = u * half_width scaling on both sides
    Eigen::VectorXd scale_in(n + 1), scale_out(n + 1);
    double a = 1.0;
    for (int i = 0; i <= n; ++i, a *= half_width) {
        scale_in(i) = a;
        scale_out(i) = 1.0 / a;
    }
    return (scale_out.head(to_degree + 1).asDiagonal() *
            proj_u.topRows(to_degree + 1)) *
           scale_in.asDiagonal();
}

} // namespace detail

/// Degree-reduced polynomial minimizing mean-squared deviation from p over
/// [-half_width, half_width] (orthogonal projection under the uniform
/// measure). target_degree >= declared degree returns p unchanged.
inline Poly reduce_poly(const Poly& p, int target_degree) {
    if (target_degree < 1) throw std::invalid_argument("reduce_poly: target degree must be >= 1");
    if (!(p.half_width > 0.0)) throw std::invalid_argument("reduce_poly: half-width must be > 0");
    if (target_degree >= p.degree()) return p;
    const Eigen::MatrixXd t = detail::projection_matrix(p.degree(), target_degree, p.half_width);
    Eigen::Map<const Eigen::VectorXd> c(p.coeffs.data(), static_cast<Eigen::Index>(p.coeffs.size()));
    const Eigen::VectorXd reduced = t * c;
    Poly out;
    out.half_width = p.half_width;
    out.coeffs.assign(reduced.data(), reduced.data() + reduced.size());
    return out;
}

/// Half-widths A_l of the symmetric activation intervals: for each poly conv
/// layer, the largest |value| it ever receives across the dataset (the raw
/// input for the first layer). Floored at 1e-6 so dead layers keep a valid
/// interval.
template <typename Scalar>
std::vector<double> compute_layer_bounds(const Network<Scalar>& net, const Dataset<Scalar>& data) {
    if (data.size() == 0) throw std::invalid_argument("compute_layer_bounds: empty dataset");
    std::vector<double> bounds;
    for (const auto& layer : net.layers)
        if (std::holds_alternative<PolyConvLayer<Scalar>>(layer)) bounds.push_back(0.0);
    for (const auto& sample : data.samples) {
        Tensor<Scalar> cur = sample;
        std::size_t pl = 0;
        for (const auto& layer : net.layers) {
            if (std::holds_alternative<PolyConvLayer<Scalar>>(layer)) {
                double mx = bounds[pl];
                for (std::size_t i = 0; i < cur.size(); ++i)
                    mx = std::max(mx, std::abs(static_cast<double>(cur[i])));
                bounds[pl++] = mx;
            }
            cur = layer_forward(layer, cur, static_cast<LayerTrace<Scalar>*>(nullptr));
        }
    }
    for (double& b : bounds) b = std::max(b, 1e-6);
    return bounds;
}

/// Rewrites one poly conv layer at a lower degree: every scalar polynomial
/// P_ijk (per output channel i, input channel j, kernel tap k, constant term
/// b_i / (in_channels * taps)) is projected onto [-bound, bound]; the reduced
/// constants re-aggregate into the new bias.
template <typename Scalar>
PolyConvLayer<Scalar> reduce_layer_weights(const PolyConvLayer<Scalar>& layer, int target_degree,
                                           double bound) {
    layer.validate();
    if (target_degree < 1)
        throw std::invalid_argument("reduce_layer_weights: target degree must be >= 1");
    if (!(bound > 0.0)) throw std::invalid_argument("reduce_layer_weights: bound must be > 0");
    if (target_degree >= layer.degree) return layer;

    std::size_t k_prod = 1;
    for (std::size_t e : layer.kernel_extents) k_prod *= e;
    const std::size_t taps = layer.in_channels * k_prod;   // polynomials per output channel
    const std::size_t n_poly = layer.out_channels * taps;
    const int d = layer.degree;

    // Column c of `coeffs` is the polynomial of (i, j, k) with flat index c.
    Eigen::MatrixXd coeffs(d + 1, static_cast<Eigen::Index>(n_poly));
    for (std::size_t i = 0; i < layer.out_channels; ++i) {
        const double share = static_cast<double>(layer.bias[i]) / static_cast<double>(taps);
        for (std::size_t t = 0; t < taps; ++t)
            coeffs(0, static_cast<Eigen::Index>(i * taps + t)) = share;
    }
    for (int deg = 1; deg <= d; ++deg) {
        const auto& bank = layer.weights[static_cast<std::size_t>(deg - 1)];
        for (std::size_t c = 0; c < n_poly; ++c)
            coeffs(deg, static_cast<Eigen::Index>(c)) = static_cast<double>(bank[c]);
    }

    const Eigen::MatrixXd reduced =
        detail::projection_matrix(d, target_degree, bound) * coeffs;

    PolyConvLayer<Scalar> out = layer;
    out.degree = target_degree;
    out.weights.clear();
    for (int deg = 1; deg <= target_degree; ++deg) {
        Tensor<Scalar> bank(layer.bank_shape());
        for (std::size_t c = 0; c < n_poly; ++c)
            bank[c] = static_cast<Scalar>(reduced(deg, static_cast<Eigen::Index>(c)));
        out.weights.push_back(std::move(bank));
    }
    for (std::size_t i = 0; i < layer.out_channels; ++i) {
        double b = 0.0;
        for (std::size_t t = 0; t < taps; ++t)
            b += reduced(0, static_cast<Eigen::Index>(i * taps + t));
        out.bias[i] = static_cast<Scalar>(b);
    }
    return out;
}

struct ReductionStep {
    int iteration = 0;
    std::size_t layer = 0; // 1-based poly-layer index
    int new_degree = 0;
    double score = 0.0;
};

struct ReductionPlan {
    std::vector<int> reductions;  // R_l per poly layer
    std::vector<double> bounds;   // A_l per poly layer
    double threshold = 0.0;       // score floor
    double baseline_score = 0.0;  // score of the unreduced model
    double final_score = 0.0;     // score of the returned model
    std::vector<ReductionStep> history;

    bool empty() const {
        for (int r : reductions)
            if (r > 0) return false;
        return true;
    }
};

template <typename Scalar>
using EvalFn = std::function<double(const Network<Scalar>&, const Dataset<Scalar>&)>;

namespace detail {

template <typename Scalar>
Network<Scalar> apply_reductions(const Network<Scalar>& net, const std::vector<int>& reductions,
                                 const std::vector<double>& bounds) {
    Network<Scalar> out = net;
    std::size_t pl = 0;
    for (auto& layer : out.layers) {
        if (auto* pc = std::get_if<PolyConvLayer<Scalar>>(&layer)) {
            const int target = pc->degree - reductions[pl];
            if (target < pc->degree) *pc = reduce_layer_weights(*pc, target, bounds[pl]);
            ++pl;
        }
    }
    return out;
}

} // namespace detail

/// Greedy layer-wise degree reduction. Per iteration every layer's reduction
/// is tentatively deepened by one (layers already at degree 1 score 0 and
/// are not selectable), the layer whose deepened reduction best preserves
/// the evaluation score is kept, and the loop stops when the best tentative
/// score falls below `threshold` or every layer sits at degree 1. Each
/// candidate is rebuilt from the original weights, never from a previous
/// reduction. If the returned plan is nonempty the returned model scores at
/// least `threshold`. Ties pick the lowest layer index.
template <typename Scalar>
std::pair<Network<Scalar>, ReductionPlan> reduce_network(const Network<Scalar>& net,
                                                         const Dataset<Scalar>& data,
                                                         const EvalFn<Scalar>& eval,
                                                         double threshold) {
    ReductionPlan plan;
    plan.threshold = threshold;
    plan.bounds = compute_layer_bounds(net, data);
    const std::vector<int> degrees = poly_degrees(net);
    const std::size_t n_layers = degrees.size();
    plan.reductions.assign(n_layers, 0);
    plan.baseline_score = eval(net, data);
    plan.final_score = plan.baseline_score;

    for (int iteration = 1;; ++iteration) {
        double best_score = -std::numeric_limits<double>::infinity();
        std::size_t best_layer = n_layers;
        for (std::size_t l = 0; l < n_layers; ++l) {
            if (degrees[l] - plan.reductions[l] <= 1) continue; // already at degree 1
            std::vector<int> tentative = plan.reductions;
            tentative[l] += 1;
            const Network<Scalar> candidate =
                detail::apply_reductions(net, tentative, plan.bounds);
            const double score = eval(candidate, data);
            if (score > best_score) {
                best_score = score;
                best_layer = l;
            }
        }
        if (best_layer == n_layers) break;          // every layer at degree 1
        if (!(best_score >= threshold)) break;      // best reduction loses too much
        plan.reductions[best_layer] += 1;
        plan.final_score = best_score;
        plan.history.push_back({iteration, best_layer + 1,
                                degrees[best_layer] - plan.reductions[best_layer], best_score});
    }

    Network<Scalar> reduced = detail::apply_reductions(net, plan.reductions, plan.bounds);
    return {std::move(reduced), std::move(plan)};
}

/// Plain-text plan report: one line per iteration, then the per-layer
/// degrees and the parameter-count ratio.
template <typename Scalar>
std::string format_reduction_report(const ReductionPlan& plan, const Network<Scalar>& original,
                                    const Network<Scalar>& reduced) {
    std::ostringstream os;
    os << "iter, layer, new_degree, score\n";
    for (const auto& s : plan.history)
        os << s.iteration << ", " << s.layer << ", " << s.new_degree << ", " << s.score << "\n";
    const auto before = poly_degrees(original);
    const auto after = poly_degrees(reduced);
    os << "degrees:";
    for (std::size_t i = 0; i < before.size(); ++i)
        os << ' ' << before[i] << "->" << after[i];
    const std::size_t p0 = parameter_count(original);
    const std::size_t p1 = parameter_count(reduced);
    os << "; parameters: " << p0 << " -> " << p1 << " (ratio "
       << (p1 > 0 ? static_cast<double>(p0) / static_cast<double>(p1) : 0.0) << ")\n";
    return os.str();
}

} // namespace ndpnn
