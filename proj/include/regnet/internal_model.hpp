#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "regnet/matops.hpp"
#include "regnet/plant.hpp"
#include "regnet/types.hpp"

namespace regnet::internal_model {

/// Canonical root order used throughout: descending imaginary part, ties
/// broken by ascending real part. Positive-imaginary entries come first, so
/// the conjugate-reduced layout can take the leading half.
inline CVec canonical_order(CVec values) {
    std::sort(values.begin(), values.end(), [](const Complex& a, const Complex& b) {
        if (a.imag() != b.imag()) return a.imag() > b.imag();
        return a.real() < b.real();
    });
    return values;
}

/// Roots of the minimal polynomial of S, with the multiplicity they carry
/// there, in canonical order.
///
/// The degree is found as the first k where S^k depends linearly on the
/// lower powers (least squares on vectorized powers); the dependency
/// coefficients are the minimal polynomial, whose companion matrix supplies
/// the roots. The result is checked to annihilate S.
inline CVec minimal_polynomial_roots(const Mat& S, double tol = 1e-9) {
    if (S.rows() != S.cols() || S.rows() == 0)
        throw std::invalid_argument("minimal_polynomial_roots: S must be square and nonempty");
    const int n = static_cast<int>(S.rows());
    const double scale = std::max(1.0, S.norm());

    std::vector<Mat> powers;
    powers.push_back(Mat::Identity(n, n));
    for (int k = 1; k <= n; ++k) {
        powers.push_back(powers.back() * S);
        Mat basis(n * n, k);
        for (int d = 0; d < k; ++d)
            basis.col(d) = Eigen::Map<const Vec>(powers[static_cast<size_t>(d)].data(), n * n);
        const Vec target = Eigen::Map<const Vec>(powers[static_cast<size_t>(k)].data(), n * n);
        const Vec sol = basis.colPivHouseholderQr().solve(target);
        const double resid = (basis * sol - target).norm();
        if (resid > tol * std::pow(scale, k)) continue;

        // S^k = sum_d sol[d] S^d, i.e. p(s) = s^k - sol[k-1] s^{k-1} - ... - sol[0]
        Mat companion = Mat::Zero(k, k);
        for (int i = 0; i + 1 < k; ++i) companion(i, i + 1) = 1.0;
        for (int d = 0; d < k; ++d) companion(k - 1, d) = sol[d];
        CVec roots = matops::eig(companion).eigenvalues;

        matops::Polynomial p = matops::coefficients_from_roots(roots);
        Mat pS = powers[static_cast<size_t>(k)];
        for (int d = 0; d < k; ++d)
            pS += p.coefficients[d].real() * powers[static_cast<size_t>(d)];
        if (pS.norm() > 1e-7 * std::pow(scale, k)) {
            std::ostringstream msg;
            msg << "minimal_polynomial_roots: candidate of degree " << k
                << " fails to annihilate S (residual " << pS.norm() << ")";
            throw std::runtime_error(msg.str());
        }
        return canonical_order(roots);
    }
    throw std::runtime_error(
        "minimal_polynomial_roots: no annihilating polynomial up to the matrix "
        "order; S is too ill-conditioned");
}

/// Per-agent data for keeping consensus roots away from the agent's own
/// imaginary-axis zeros.
struct AvoidanceGeometry {
    CVec exo_modes;        // spectrum the roots converge to
    CVec imaginary_zeros;  // blocked spots on the axis
    CVec open_rhp_zeros;   // zeros strictly right of the axis
    double rho = 0.0;      // vertical-detour radius
};

namespace detail {

inline double set_distance(const CVec& a, const CVec& b) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < a.size(); ++i)
        for (Eigen::Index j = 0; j < b.size(); ++j)
            best = std::min(best, std::abs(a[i] - b[j]));
    return best;
}

} // namespace detail

/// Detour radius: zero when the agent has no imaginary-axis zeros; half (by
/// default) the gap between those zeros and the exosystem modes; further
/// capped by half the gap to the agent's open right-half-plane zeros when it
/// has any. A collision between exosystem modes and imaginary zeros leaves
/// no room to detour and is an error.
inline double semicircle_radius(const CVec& exo_modes, const plant::ZeroSet& zeros,
                                double coefficient = 0.5) {
    if (!(coefficient > 0.0) || !(coefficient < 1.0))
        throw std::invalid_argument("semicircle_radius: coefficient must lie in (0, 1)");
    if (zeros.imaginary.size() == 0) return 0.0;
    const double axis_gap = detail::set_distance(exo_modes, zeros.imaginary);
    if (axis_gap < 1e-9) {
        std::ostringstream msg;
        msg << "semicircle_radius: an exosystem mode coincides with an "
               "imaginary-axis zero (gap " << axis_gap << "); regulation is impossible";
        throw std::runtime_error(msg.str());
    }
    const CVec open_rhp = zeros.open_rhp();
    if (open_rhp.size() == 0) return coefficient * axis_gap;
    return coefficient * std::min(axis_gap, detail::set_distance(open_rhp, zeros.imaginary));
}

/// Distance from the axis point j*beta to the blocked set; zero when the
/// set is empty (nothing to avoid).
inline double gamma_distance(double beta, const CVec& imaginary_zeros) {
    if (imaginary_zeros.size() == 0) return 0.0;
    double best = std::numeric_limits<double>::infinity();
    const Complex point{0.0, beta};
    for (Eigen::Index i = 0; i < imaginary_zeros.size(); ++i)
        best = std::min(best, std::abs(point - imaginary_zeros[i]));
    return best;
}

/// Real-part detour: zero for the reference node and whenever the axis
/// point is already clear of the blocked set, otherwise the height of the
/// semicircle of radius rho above the chord at distance gamma.
inline double alpha_shift(double gamma, double rho, bool is_reference) {
    if (is_reference || gamma >= rho) return 0.0;
    return std::sqrt(rho * rho - gamma * gamma);
}

inline AvoidanceGeometry make_geometry(const CVec& exo_modes, const plant::ZeroSet& zeros,
                                       double coefficient = 0.5) {
    AvoidanceGeometry g;
    g.exo_modes = exo_modes;
    g.imaginary_zeros = zeros.imaginary;
    g.open_rhp_zeros = zeros.open_rhp();
    g.rho = semicircle_radius(exo_modes, zeros, coefficient);
    return g;
}

/// Conjugate-reduced root layout. A k-root set closed under conjugation,
/// with at most one structurally-zero trailing entry when k is odd, is
/// carried as the half vector beta_hat plus per-entry detours alpha_hat
/// (alpha_hat has one extra trailing entry for odd k).
struct RootLayout {
    int k = 0;
    int half = 0;
    bool odd = false;

    static RootLayout from_degree(int k) {
        RootLayout l;
        l.k = k;
        l.half = k / 2;
        l.odd = (k % 2) != 0;
        return l;
    }

    int alpha_size() const { return half + (odd ? 1 : 0); }

    /// Half vector of a canonical conjugate-closed root list: imaginary
    /// parts of the leading entries. In canonical order the lone real root
    /// of an odd-degree set sits in the middle and must be zero.
    Vec reduce(const CVec& canonical_roots) const {
        if (static_cast<int>(canonical_roots.size()) != k)
            throw std::invalid_argument("RootLayout: root count mismatch");
        if (odd && std::abs(canonical_roots[half]) > 1e-7)
            throw std::invalid_argument(
                "RootLayout: odd root count needs a zero real root");
        Vec beta_hat(half);
        for (int d = 0; d < half; ++d) beta_hat[d] = canonical_roots[d].imag();
        return beta_hat;
    }

    /// Full root list [alpha_hat + j beta_hat; alpha_hat - j beta_hat; tail].
    CVec expand(const Vec& beta_hat, const Vec& alpha_hat) const {
        if (static_cast<int>(beta_hat.size()) != half ||
            static_cast<int>(alpha_hat.size()) != alpha_size())
            throw std::invalid_argument("RootLayout: half-vector size mismatch");
        CVec lambda(k);
        for (int d = 0; d < half; ++d) {
            lambda[d] = Complex{alpha_hat[d], beta_hat[d]};
            lambda[half + d] = Complex{alpha_hat[d], -beta_hat[d]};
        }
        if (odd) lambda[k - 1] = Complex{alpha_hat[half], 0.0};
        return lambda;
    }

    /// Detour vector for a half root estimate: one entry per independent
    /// root. The reference node always gets zeros.
    Vec alphas(const Vec& beta_hat, const AvoidanceGeometry& g, bool is_reference) const {
        Vec a(alpha_size());
        for (int d = 0; d < half; ++d)
            a[d] = alpha_shift(gamma_distance(beta_hat[d], g.imaginary_zeros), g.rho,
                               is_reference);
        if (odd)
            a[half] = alpha_shift(gamma_distance(0.0, g.imaginary_zeros), g.rho,
                                  is_reference);
        return a;
    }
};

/// Consensus flow for one node's half vector: sum of weighted disagreements
/// with its in-neighbors. Row `node` of the adjacency supplies the weights.
inline Vec beta_consensus_rate(int node, const std::vector<Vec>& beta_hat,
                               const Mat& adjacency) {
    if (node < 0 || node >= static_cast<int>(beta_hat.size()))
        throw std::invalid_argument("beta_consensus_rate: node out of range");
    if (adjacency.rows() != static_cast<Eigen::Index>(beta_hat.size()))
        throw std::invalid_argument("beta_consensus_rate: adjacency size mismatch");
    Vec rate = Vec::Zero(beta_hat[static_cast<size_t>(node)].size());
    for (Eigen::Index j = 0; j < adjacency.cols(); ++j) {
        const double w = adjacency(node, j);
        if (w > 0.0)
            rate += w * (beta_hat[static_cast<size_t>(j)] - beta_hat[static_cast<size_t>(node)]);
    }
    return rate;
}

/// q-copy internal model pinned at the given roots. Gp is the companion of
/// prod_d (s - lambda_d) with Hp its last unit column; G and H replicate
/// them once per regulated output.
struct InternalModel {
    int k = 0;
    int copies = 0;
    Mat Gp, Hp;   // single copy, k x k and k x 1
    Mat G, H;     // q copies, kq x kq and kq x q
};

inline InternalModel build_internal_model(const CVec& lambda, int copies,
                                          double tol = 1e-8) {
    if (lambda.size() == 0)
        throw std::invalid_argument("build_internal_model: empty root list");
    if (copies < 1)
        throw std::invalid_argument("build_internal_model: need at least one copy");
    double scale = 1.0;
    for (Eigen::Index i = 0; i < lambda.size(); ++i)
        scale = std::max(scale, std::abs(lambda[i]));
    if (!matops::conjugate_closed(lambda, 1e-7 * scale))
        throw std::invalid_argument(
            "build_internal_model: roots are not closed under conjugation, the "
            "realization would be complex");

    const matops::Polynomial p = matops::coefficients_from_roots(lambda);
    const Vec c = p.real_coefficients(tol * std::pow(scale, p.degree()));
    const int k = p.degree();

    InternalModel im;
    im.k = k;
    im.copies = copies;
    im.Gp = Mat::Zero(k, k);
    for (int i = 0; i + 1 < k; ++i) im.Gp(i, i + 1) = 1.0;
    for (int d = 0; d < k; ++d) im.Gp(k - 1, d) = -c[d];
    im.Hp = Mat::Zero(k, 1);
    im.Hp(k - 1, 0) = 1.0;

    im.G = Mat::Zero(k * copies, k * copies);
    im.H = Mat::Zero(k * copies, copies);
    for (int d = 0; d < copies; ++d) {
        im.G.block(d * k, d * k, k, k) = im.Gp;
        im.H.block(d * k, d, k, 1) = im.Hp;
    }
    return im;
}

} // namespace regnet::internal_model
