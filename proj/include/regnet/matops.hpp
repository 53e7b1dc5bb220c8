#pragma once

#include <algorithm>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "regnet/types.hpp"

namespace regnet::matops {

/// Eigenvalue list of a square matrix, together with the tolerance that was
/// used to clean it up (conjugate pairing for real input).
struct Spectrum {
    CVec eigenvalues;
    double tolerance = 1e-9;
};

namespace detail {

inline void require_square(const Eigen::Index rows, const Eigen::Index cols,
                           const char* who) {
    if (rows != cols) {
        std::ostringstream msg;
        msg << who << ": matrix must be square, got " << rows << "x" << cols;
        throw std::invalid_argument(msg.str());
    }
}

// Forces a spectrum of a real matrix to be exactly closed under conjugation.
// Eigen already emits exact pairs from the real Schur 2x2 blocks; this is a
// cheap belt-and-braces pass that also sorts pairs deterministically.
inline CVec pair_conjugates(CVec vals, double tol) {
    const Eigen::Index n = vals.size();
    std::vector<bool> used(static_cast<size_t>(n), false);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (used[static_cast<size_t>(i)] || std::abs(vals[i].imag()) <= tol) {
            if (!used[static_cast<size_t>(i)]) vals[i].imag(vals[i].imag());
            continue;
        }
        Eigen::Index best = -1;
        double bestDist = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = i + 1; j < n; ++j) {
            if (used[static_cast<size_t>(j)]) continue;
            const double d = std::abs(vals[j] - std::conj(vals[i]));
            if (d < bestDist) { bestDist = d; best = j; }
        }
        if (best < 0 || bestDist > 10 * tol * std::max(1.0, std::abs(vals[i]))) {
            std::ostringstream msg;
            msg << "eig: real matrix produced an unpaired complex eigenvalue "
                << vals[i].real() << (vals[i].imag() >= 0 ? "+" : "")
                << vals[i].imag() << "j";
            throw std::runtime_error(msg.str());
        }
        const Complex mean{0.5 * (vals[i].real() + vals[best].real()),
                           0.5 * (std::abs(vals[i].imag()) + std::abs(vals[best].imag()))};
        vals[i] = (vals[i].imag() > 0) ? mean : std::conj(mean);
        vals[best] = std::conj(vals[i]);
        used[static_cast<size_t>(best)] = true;
    }
    return vals;
}

} // namespace detail

/// Eigenvalues of a square matrix. For real input the result is enforced to
/// be exactly closed under conjugation; complex input is passed through.
template <typename Derived>
inline Spectrum eig(const Eigen::MatrixBase<Derived>& expr) {
    detail::require_square(expr.rows(), expr.cols(), "eig");
    if (expr.size() == 0) return {CVec(0), 1e-9};
    if constexpr (Eigen::NumTraits<typename Derived::Scalar>::IsComplex) {
        const CMat m = expr;
        Eigen::ComplexEigenSolver<CMat> solver(m, /*computeEigenvectors=*/false);
        if (solver.info() != Eigen::Success) {
            std::ostringstream msg;
            msg << "eig: complex QR iteration failed to converge on a " << m.rows()
                << "x" << m.cols() << " matrix";
            throw std::runtime_error(msg.str());
        }
        return {solver.eigenvalues(), 1e-9 * std::max(1.0, m.norm())};
    } else {
        const Mat m = expr.template cast<double>();
        Eigen::EigenSolver<Mat> solver(m, /*computeEigenvectors=*/false);
        if (solver.info() != Eigen::Success) {
            std::ostringstream msg;
            msg << "eig: QR iteration failed to converge on a " << m.rows() << "x"
                << m.cols() << " matrix";
            throw std::runtime_error(msg.str());
        }
        Spectrum s;
        s.tolerance = 1e-9 * std::max(1.0, m.norm());
        s.eigenvalues = detail::pair_conjugates(solver.eigenvalues(), s.tolerance);
        return s;
    }
}

/// Largest real part over the spectrum. -inf for the empty matrix.
inline double stability_margin(const Mat& m) {
    const Spectrum s = eig(m);
    double worst = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < s.eigenvalues.size(); ++i)
        worst = std::max(worst, s.eigenvalues[i].real());
    return worst;
}

/// True when every eigenvalue satisfies Re < -margin. A pure rotation
/// ([[0,1],[-1,0]]) is not stable under margin 0.
inline bool is_stable(const Mat& m, double margin = 0.0) {
    return stability_margin(m) < -margin;
}

namespace detail {

template <typename MatrixT>
inline int rank_by_svd(const MatrixT& m, double tol) {
    if (tol <= 0.0)
        throw std::invalid_argument("numerical_rank: tolerance must be positive");
    if (m.size() == 0) return 0;
    Eigen::JacobiSVD<MatrixT> svd(m);
    const auto& sv = svd.singularValues();
    const double top = sv.size() > 0 ? sv[0] : 0.0;
    if (top <= 0.0) return 0;
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv[i] > tol * top) ++rank;
    return rank;
}

} // namespace detail

/// Rank by singular-value thresholding at tol * sigma_max (relative).
/// The zero matrix has rank 0 by convention.
template <typename Derived>
inline int numerical_rank(const Eigen::MatrixBase<Derived>& expr, double tol = 1e-8) {
    if constexpr (Eigen::NumTraits<typename Derived::Scalar>::IsComplex) {
        const CMat m = expr;
        return detail::rank_by_svd(m, tol);
    } else {
        const Mat m = expr.template cast<double>();
        return detail::rank_by_svd(m, tol);
    }
}

/// Monic polynomial s^k + c_1 s^{k-1} + ... + c_k, stored low-order first as
/// [c_k, ..., c_1] without the leading 1.
struct Polynomial {
    CVec coefficients;

    int degree() const { return static_cast<int>(coefficients.size()); }

    Complex evaluate(Complex s) const {
        Complex acc{1.0, 0.0};
        const int k = degree();
        for (int d = k - 1; d >= 0; --d) acc = acc * s + coefficients[d];
        return acc;
    }

    bool is_real(double tol = 1e-9) const {
        for (Eigen::Index i = 0; i < coefficients.size(); ++i)
            if (std::abs(coefficients[i].imag()) > tol) return false;
        return true;
    }

    /// Real coefficient vector in the same order; throws when the imaginary
    /// residue exceeds tol.
    Vec real_coefficients(double tol = 1e-9) const {
        if (!is_real(tol))
            throw std::runtime_error(
                "Polynomial: coefficients carry a non-negligible imaginary part");
        return coefficients.real();
    }
};

/// True when the multiset of values is closed under conjugation within tol.
inline bool conjugate_closed(const CVec& values, double tol = 1e-9) {
    const Eigen::Index n = values.size();
    std::vector<bool> used(static_cast<size_t>(n), false);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (used[static_cast<size_t>(i)]) continue;
        if (std::abs(values[i].imag()) <= tol) {
            used[static_cast<size_t>(i)] = true;
            continue;
        }
        Eigen::Index best = -1;
        double bestDist = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i || used[static_cast<size_t>(j)]) continue;
            const double d = std::abs(values[j] - std::conj(values[i]));
            if (d < bestDist) { bestDist = d; best = j; }
        }
        if (best < 0 || bestDist > tol * std::max(1.0, std::abs(values[i])))
            return false;
        used[static_cast<size_t>(i)] = true;
        used[static_cast<size_t>(best)] = true;
    }
    return true;
}

/// Expands prod_d (s - roots[d]) by iterated convolution. When the root set
/// is conjugate closed the (tiny) imaginary residue of each coefficient is
/// truncated to exactly zero.
inline Polynomial coefficients_from_roots(const CVec& roots) {
    const Eigen::Index k = roots.size();
    CVec asc = CVec::Zero(k + 1);   // ascending powers, asc[k] leading
    asc[0] = Complex{1.0, 0.0};
    Eigen::Index deg = 0;
    for (Eigen::Index d = 0; d < k; ++d) {
        for (Eigen::Index p = deg + 1; p >= 1; --p)
            asc[p] = asc[p - 1] - roots[d] * asc[p];
        asc[0] *= -roots[d];
        ++deg;
    }
    Polynomial poly{asc.head(k)};
    double scale = 1.0;
    for (Eigen::Index d = 0; d < k; ++d)
        scale = std::max(scale, std::abs(roots[d]));
    if (conjugate_closed(roots, 1e-9 * scale)) {
        for (Eigen::Index i = 0; i < poly.coefficients.size(); ++i)
            poly.coefficients[i].imag(0.0);
    }
    return poly;
}

inline Mat kron(const Mat& a, const Mat& b) {
    Mat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

/// Solves X*B = A*X + C for X by Kronecker vectorization and a dense LU
/// solve, sized for the small coupled systems that arise here (n <= ~50).
/// Requires the spectra of A and B to be disjoint; the nearest eigenvalue
/// pair is named in the error otherwise.
inline Mat solve_sylvester(const Mat& A, const Mat& B, const Mat& C) {
    detail::require_square(A.rows(), A.cols(), "solve_sylvester (A)");
    detail::require_square(B.rows(), B.cols(), "solve_sylvester (B)");
    if (C.rows() != A.rows() || C.cols() != B.rows()) {
        std::ostringstream msg;
        msg << "solve_sylvester: C must be " << A.rows() << "x" << B.rows()
            << ", got " << C.rows() << "x" << C.cols();
        throw std::invalid_argument(msg.str());
    }

    const Spectrum sa = eig(A);
    const Spectrum sb = eig(B);
    const double sep = 1e-8 * std::max({1.0, A.norm(), B.norm()});
    for (Eigen::Index i = 0; i < sa.eigenvalues.size(); ++i)
        for (Eigen::Index j = 0; j < sb.eigenvalues.size(); ++j)
            if (std::abs(sa.eigenvalues[i] - sb.eigenvalues[j]) < sep) {
                std::ostringstream msg;
                msg << "solve_sylvester: spectra of A and B overlap near "
                    << sa.eigenvalues[i].real()
                    << (sa.eigenvalues[i].imag() >= 0 ? "+" : "")
                    << sa.eigenvalues[i].imag() << "j; the solution is not unique";
                throw std::runtime_error(msg.str());
            }

    const Eigen::Index n = A.rows(), p = B.rows();
    const Mat In = Mat::Identity(n, n), Ip = Mat::Identity(p, p);
    const Mat lhs = kron(B.transpose(), In) - kron(Ip, A);
    const Eigen::Map<const Vec> cvec(C.data(), C.size());
    Vec xvec = lhs.partialPivLu().solve(cvec);
    Mat X = Eigen::Map<Mat>(xvec.data(), n, p);

    const double resid = (X * B - A * X - C).norm();
    if (resid > 1e-8 * (1.0 + C.norm())) {
        std::ostringstream msg;
        msg << "solve_sylvester: residual " << resid
            << " exceeds 1e-8*(1+|C|); the problem is too ill-conditioned";
        throw std::runtime_error(msg.str());
    }
    return X;
}

/// Worst-case distance of a greedy one-to-one matching between achieved and
/// desired spectra.
inline double spectrum_mismatch(const CVec& achieved, const CVec& desired) {
    const Eigen::Index n = desired.size();
    std::vector<bool> used(static_cast<size_t>(n), false);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index best = -1;
        double bestDist = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < n; ++j) {
            if (used[static_cast<size_t>(j)]) continue;
            const double d = std::abs(achieved[j] - desired[i]);
            if (d < bestDist) { bestDist = d; best = j; }
        }
        used[static_cast<size_t>(best)] = true;
        worst = std::max(worst, bestDist);
    }
    return worst;
}

/// Gain from exact pole placement, or from the stabilizing fallback when an
/// exact multi-input assignment was not found. `exact_spectrum` records which
/// path produced K.
struct PlacementResult {
    Mat K;
    bool exact_spectrum = true;
};

namespace detail {

inline Mat controllability_matrix(const Mat& A, const Mat& B) {
    const Eigen::Index n = A.rows(), m = B.cols();
    Mat ctrb(n, n * m);
    Mat block = B;
    for (Eigen::Index i = 0; i < n; ++i) {
        ctrb.middleCols(i * m, m) = block;
        block = A * block;
    }
    return ctrb;
}

// Single-input Ackermann. Returns K (1 x n) with sigma(A + b K) = desired,
// or an empty matrix when the controllability matrix is rank deficient.
inline Mat ackermann(const Mat& A, const Mat& b, const CVec& desired) {
    const Eigen::Index n = A.rows();
    const Mat ctrb = controllability_matrix(A, b);
    Eigen::ColPivHouseholderQR<Mat> qr(ctrb);
    qr.setThreshold(1e-10);
    if (qr.rank() < n) return Mat();

    const Vec c = coefficients_from_roots(desired).real_coefficients(1e-7);
    Mat pA = Mat::Identity(n, n);           // Horner: p(A), ascending c = [c_k..c_1]
    for (Eigen::Index d = n - 1; d >= 0; --d)
        pA = A * pA + c[d] * Mat::Identity(n, n);

    Vec en = Vec::Zero(n);
    en[n - 1] = 1.0;
    const Vec row = ctrb.transpose().partialPivLu().solve(en);   // e_n^T Ctrb^{-1}
    return -(row.transpose() * pA);
}

// One Kleinman-Newton pass for the LQR Riccati equation with Q = R = I,
// started from a stabilizing gain. Converges quadratically.
inline Mat kleinman_newton(const Mat& A, const Mat& B, Mat K) {
    const Eigen::Index n = A.rows();
    const Mat Q = Mat::Identity(n, n);
    for (int iter = 0; iter < 60; ++iter) {
        const Mat Acl = A + B * K;
        // Lyapunov Acl^T P + P Acl = -(Q + K^T K), cast as P*Acl = (-Acl^T)P - (Q+K^T K)
        const Mat P = solve_sylvester(-Acl.transpose(), Acl, -(Q + K.transpose() * K));
        const Mat Knext = -B.transpose() * 0.5 * (P + P.transpose());
        if ((Knext - K).norm() <= 1e-11 * std::max(1.0, K.norm())) return Knext;
        K = Knext;
    }
    return K;
}

// Orthonormal basis of the controllable subspace plus its complement.
inline void staircase(const Mat& A, const Mat& B, Mat& T, Eigen::Index& nc) {
    const Eigen::Index n = A.rows();
    const Mat ctrb = controllability_matrix(A, B);
    Eigen::JacobiSVD<Mat> svd(ctrb, Eigen::ComputeFullU);
    const auto& sv = svd.singularValues();
    const double top = sv.size() > 0 ? sv[0] : 0.0;
    nc = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (top > 0.0 && sv[i] > 1e-10 * top) ++nc;
    T = svd.matrixU();
    (void)n;
}

// Bass' stabilizing gain for a controllable pair: shift A right by beta so
// the Lyapunov solution is positive definite, then K = -B^T W^{-1}.
inline Mat bass_gain(const Mat& A, const Mat& B) {
    const Eigen::Index n = A.rows();
    const double beta = A.norm() + 1.0;
    const Mat As = A + beta * Mat::Identity(n, n);
    // (A+bI) W + W (A+bI)^T = 2 B B^T, cast as W*(A+bI)^T = -(A+bI) W + 2BB^T
    const Mat W = solve_sylvester(-As, As.transpose(), 2.0 * B * B.transpose());
    const Mat Wsym = 0.5 * (W + W.transpose());
    return -B.transpose() * Wsym.partialPivLu().solve(Mat::Identity(n, n));
}

} // namespace detail

/// State-feedback pole placement: finds K with sigma(A + B K) = desired.
///
/// Preconditions checked: (A, B) stabilizable (PBH, the offending eigenvalue
/// is named on failure), desired poles conjugate closed and strictly in the
/// open left half plane.
///
/// Single-input pairs go through Ackermann. Multi-input pairs try ten
/// deterministic random projections B*v (reducing to single-input placement);
/// when none succeeds the result falls back to an LQR-style stabilizing gain
/// (Kleinman-Newton seeded by the best projected gain, or by Bass' method on
/// the controllable staircase block) and only stability is guaranteed, which
/// `exact_spectrum = false` records.
inline PlacementResult place_poles(const Mat& A, const Mat& B, const CVec& desired) {
    detail::require_square(A.rows(), A.cols(), "place_poles");
    const Eigen::Index n = A.rows(), m = B.cols();
    if (B.rows() != n)
        throw std::invalid_argument("place_poles: A and B row counts differ");
    if (desired.size() != n) {
        std::ostringstream msg;
        msg << "place_poles: " << desired.size() << " poles requested for an order-"
            << n << " system";
        throw std::invalid_argument(msg.str());
    }
    for (Eigen::Index i = 0; i < n; ++i)
        if (desired[i].real() >= 0.0) {
            std::ostringstream msg;
            msg << "place_poles: requested pole " << desired[i].real()
                << (desired[i].imag() >= 0 ? "+" : "") << desired[i].imag()
                << "j is not in the open left half plane";
            throw std::invalid_argument(msg.str());
        }
    if (!conjugate_closed(desired, 1e-9))
        throw std::invalid_argument(
            "place_poles: desired poles are not closed under conjugation");

    const Spectrum sa = eig(A);
    const double ptol = 1e-9 * std::max(1.0, A.norm());
    for (Eigen::Index i = 0; i < sa.eigenvalues.size(); ++i) {
        const Complex ev = sa.eigenvalues[i];
        if (ev.real() < -ptol) continue;
        CMat pbh(n, n + m);
        pbh.leftCols(n) = A.cast<Complex>() - ev * CMat::Identity(n, n);
        pbh.rightCols(m) = B.cast<Complex>();
        if (numerical_rank(pbh, 1e-10) < n) {
            std::ostringstream msg;
            msg << "place_poles: pair is not stabilizable; PBH rank drops at "
                << ev.real() << (ev.imag() >= 0 ? "+" : "") << ev.imag() << "j";
            throw std::runtime_error(msg.str());
        }
    }

    const double verify_tol = 1e-6 * std::max(1.0, desired.cwiseAbs().maxCoeff());
    auto verified = [&](const Mat& K) {
        return spectrum_mismatch(eig(A + B * K).eigenvalues, desired) <= verify_tol;
    };

    if (m == 1) {
        const Mat K = detail::ackermann(A, B, desired);
        if (K.size() > 0) {
            if (!verified(K))
                throw std::runtime_error(
                    "place_poles: single-input placement failed numerical verification");
            return {K, true};
        }
    } else {
        std::mt19937_64 rng(0x9e3779b97f4a7c15ull);
        std::normal_distribution<double> gauss(0.0, 1.0);
        // Attempt 0 projects the input directly; later attempts first add a
        // small random precompensator, which makes A + B K0 cyclic almost
        // surely and so rescues pairs whose open loop repeats eigenvalues
        // across parallel blocks (there (A, B v) is uncontrollable for every
        // projection).
        const double k0_scale = 0.1 * (1.0 + A.norm()) / (1.0 + B.norm());
        Mat bestSeedK;
        for (int attempt = 0; attempt < 10; ++attempt) {
            Vec v(m);
            for (Eigen::Index i = 0; i < m; ++i) v[i] = gauss(rng);
            const double norm = v.norm();
            if (norm < 1e-12) continue;
            v /= norm;
            Mat K0 = Mat::Zero(m, n);
            if (attempt > 0)
                for (Eigen::Index i = 0; i < K0.size(); ++i)
                    K0(i / n, i % n) = k0_scale * gauss(rng);
            const Mat k = detail::ackermann(A + B * K0, B * v, desired);
            if (k.size() == 0) continue;
            const Mat K = K0 + v * k;
            if (verified(K)) return {K, true};
            if (bestSeedK.size() == 0 && is_stable(A + B * K)) bestSeedK = K;
        }
        Mat seed = bestSeedK;
        if (seed.size() == 0) {
            Mat T;
            Eigen::Index nc = 0;
            detail::staircase(A, B, T, nc);
            seed = Mat::Zero(m, n);
            if (nc > 0) {
                const Mat Ac = (T.transpose() * A * T).topLeftCorner(nc, nc);
                const Mat Bc = (T.transpose() * B).topRows(nc);
                Mat Kc = detail::bass_gain(Ac, Bc);
                Mat Kt = Mat::Zero(m, n);
                Kt.leftCols(nc) = Kc;
                seed = Kt * T.transpose();
            }
        }
        if (!is_stable(A + B * seed))
            throw std::runtime_error(
                "place_poles: could not construct a stabilizing seed gain");
        const Mat K = detail::kleinman_newton(A, B, seed);
        if (!is_stable(A + B * K))
            throw std::runtime_error(
                "place_poles: LQR fallback failed to stabilize the pair");
        return {K, false};
    }

    // Single input but uncontrollable (yet stabilizable): exact placement is
    // impossible, settle for the stabilizing fallback.
    Mat T;
    Eigen::Index nc = 0;
    detail::staircase(A, B, T, nc);
    Mat seed = Mat::Zero(m, n);
    if (nc > 0) {
        const Mat Ac = (T.transpose() * A * T).topLeftCorner(nc, nc);
        const Mat Bc = (T.transpose() * B).topRows(nc);
        Mat Kt = Mat::Zero(m, n);
        Kt.leftCols(nc) = detail::bass_gain(Ac, Bc);
        seed = Kt * T.transpose();
    }
    if (!is_stable(A + B * seed))
        throw std::runtime_error(
            "place_poles: could not construct a stabilizing seed gain");
    const Mat K = detail::kleinman_newton(A, B, seed);
    if (!is_stable(A + B * K))
        throw std::runtime_error("place_poles: fallback failed to stabilize the pair");
    return {K, false};
}

} // namespace regnet::matops
