#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "regnet/matops.hpp"
#include "regnet/types.hpp"

namespace regnet::plant {

/// Heterogeneous agent x' = A x + B u + P w, z = C x + D u + Q w, split into
/// a known nominal part and an unknown perturbation the controller never
/// reads. Effective matrices (nominal + perturbation) drive the dynamics;
/// everything synthesized from the model uses the nominal part only.
struct AgentModel {
    Mat A0, B0, C0, D0, P0, Q0;
    Mat dA, dB, dC, dD, dP, dQ;

    int n() const { return static_cast<int>(A0.rows()); }
    int m() const { return static_cast<int>(B0.cols()); }
    int q() const { return static_cast<int>(C0.rows()); }
    int r() const { return static_cast<int>(P0.cols()); }

    Mat A() const { return A0 + dA; }
    Mat B() const { return B0 + dB; }
    Mat C() const { return C0 + dC; }
    Mat D() const { return D0 + dD; }
    Mat P() const { return P0 + dP; }
    Mat Q() const { return Q0 + dQ; }

    void validate() const {
        auto shape = [](const Mat& m, Eigen::Index rows, Eigen::Index cols,
                        const char* name) {
            if (m.rows() != rows || m.cols() != cols) {
                std::ostringstream msg;
                msg << "AgentModel: " << name << " is " << m.rows() << "x" << m.cols()
                    << ", expected " << rows << "x" << cols;
                throw std::invalid_argument(msg.str());
            }
        };
        if (A0.rows() == 0 || A0.rows() != A0.cols())
            throw std::invalid_argument("AgentModel: A0 must be square and nonempty");
        const int nn = n(), mm = m(), qq = q(), rr = r();
        if (mm < 1) throw std::invalid_argument("AgentModel: at least one input required");
        if (qq < 1) throw std::invalid_argument("AgentModel: at least one output required");
        if (mm < qq) {
            std::ostringstream msg;
            msg << "AgentModel: fewer inputs (" << mm << ") than regulated outputs ("
                << qq << ") cannot satisfy the rank conditions";
            throw std::invalid_argument(msg.str());
        }
        shape(B0, nn, mm, "B0");
        shape(C0, qq, nn, "C0");
        shape(D0, qq, mm, "D0");
        shape(P0, nn, rr, "P0");
        shape(Q0, qq, rr, "Q0");
        shape(dA, nn, nn, "dA");
        shape(dB, nn, mm, "dB");
        shape(dC, qq, nn, "dC");
        shape(dD, qq, mm, "dD");
        shape(dP, nn, rr, "dP");
        shape(dQ, qq, rr, "dQ");
    }

    /// Fills every perturbation block with zeros of the right shape.
    void zero_missing_perturbations() {
        auto fill = [](Mat& m, Eigen::Index rows, Eigen::Index cols) {
            if (m.size() == 0) m = Mat::Zero(rows, cols);
        };
        fill(dA, A0.rows(), A0.cols());
        fill(dB, B0.rows(), B0.cols());
        fill(dC, C0.rows(), C0.cols());
        fill(dD, D0.rows(), D0.cols());
        fill(dP, P0.rows(), P0.cols());
        fill(dQ, Q0.rows(), Q0.cols());
    }
};

/// Reference generator w' = S0 w driving every agent.
struct ExosystemModel {
    Mat S0;
    Vec w0_init;

    int r() const { return static_cast<int>(S0.rows()); }

    void validate() const {
        if (S0.rows() == 0 || S0.rows() != S0.cols())
            throw std::invalid_argument("ExosystemModel: S0 must be square and nonempty");
        if (w0_init.size() != 0 && w0_init.size() != S0.rows())
            throw std::invalid_argument("ExosystemModel: initial state size mismatch");
    }
};

/// System matrix [[A - sI, B], [C, D]] at a complex frequency.
inline CMat rosenbrock(const AgentModel& a, Complex s, bool use_nominal = true) {
    const int nn = a.n(), mm = a.m(), qq = a.q();
    CMat R(nn + qq, nn + mm);
    const Mat A = use_nominal ? a.A0 : a.A();
    const Mat B = use_nominal ? a.B0 : a.B();
    const Mat C = use_nominal ? a.C0 : a.C();
    const Mat D = use_nominal ? a.D0 : a.D();
    R.topLeftCorner(nn, nn) = A.cast<Complex>() - s * CMat::Identity(nn, nn);
    R.topRightCorner(nn, mm) = B.cast<Complex>();
    R.bottomLeftCorner(qq, nn) = C.cast<Complex>();
    R.bottomRightCorner(qq, mm) = D.cast<Complex>();
    return R;
}

/// Transmission zeros partitioned by where they sit relative to the
/// imaginary axis: `unstable` collects everything with Re >= -imag_tol and
/// `imaginary` the subset with |Re| <= imag_tol.
struct ZeroSet {
    CVec unstable;    // closed right half plane
    CVec imaginary;   // on the axis (within tolerance)
    double imag_tol = 1e-7;

    /// Zeros strictly inside the open right half plane.
    CVec open_rhp() const {
        std::vector<Complex> keep;
        for (Eigen::Index i = 0; i < unstable.size(); ++i)
            if (unstable[i].real() > imag_tol) keep.push_back(unstable[i]);
        CVec out(static_cast<Eigen::Index>(keep.size()));
        for (size_t i = 0; i < keep.size(); ++i) out[static_cast<Eigen::Index>(i)] = keep[i];
        return out;
    }
};

struct ZeroOptions {
    double imag_tol = 1e-7;
    double rank_tol = 1e-8;
    /// Probe points for the wide case (more inputs than outputs), where the
    /// pencil is rectangular; callers pass sigma(S0) plus an axis grid.
    std::vector<Complex> sweep_candidates;
};

namespace detail {

inline bool rank_drops(const AgentModel& a, Complex s, bool use_nominal, double rank_tol) {
    const int full = a.n() + a.q();
    return matops::numerical_rank(rosenbrock(a, s, use_nominal), rank_tol) < full;
}

inline void append_sorted_unique(std::vector<Complex>& zs, Complex z, double tol) {
    for (const Complex& have : zs)
        if (std::abs(have - z) <= tol) return;
    zs.push_back(z);
}

} // namespace detail

/// Finds the unstable transmission zeros of an agent.
///
/// Square case (m == q): generalized eigenvalues of the pencil
/// ([[A, B], [C, D]], blkdiag(I, 0)) through the QZ decomposition, keeping
/// finite candidates and re-verifying each one by a rank drop of the system
/// matrix. Wide case (m > q): rank sweep over the supplied candidate points.
/// The tall case (m < q) was already rejected at model validation.
inline ZeroSet transmission_zeros(const AgentModel& a, bool use_nominal = true,
                                  const ZeroOptions& opts = {}) {
    a.validate();
    const int nn = a.n(), mm = a.m(), qq = a.q();
    std::vector<Complex> found;

    if (mm == qq) {
        const int total = nn + qq;
        Mat Mp(total, total), Ep(total, total);
        const Mat A = use_nominal ? a.A0 : a.A();
        const Mat B = use_nominal ? a.B0 : a.B();
        const Mat C = use_nominal ? a.C0 : a.C();
        const Mat D = use_nominal ? a.D0 : a.D();
        Mp << A, B, C, D;
        Ep.setZero();
        Ep.topLeftCorner(nn, nn).setIdentity();

        Eigen::GeneralizedEigenSolver<Mat> qz;
        qz.compute(Mp, Ep, /*computeEigenvectors=*/false);
        if (qz.info() != Eigen::Success)
            throw std::runtime_error("transmission_zeros: QZ iteration failed to converge");

        const auto alphas = qz.alphas();
        const auto betas = qz.betas();
        const double scale = std::max(1.0, Mp.norm());
        int degenerate = 0;
        for (Eigen::Index i = 0; i < alphas.size(); ++i) {
            const double mag = std::abs(alphas[i]) + std::abs(betas[i]);
            if (mag < 1e-12 * scale) {
                ++degenerate;
                continue;
            }
            if (std::abs(betas[i]) <= 1e-10 * mag) continue;   // zero at infinity
            const Complex z = alphas[i] / betas[i];
            if (detail::rank_drops(a, z, use_nominal, opts.rank_tol))
                detail::append_sorted_unique(found, z, 1e-7 * std::max(1.0, std::abs(z)));
        }
        if (degenerate > 0) {
            // alpha = beta = 0 signals an identically singular pencil; confirm
            // with random probes before giving up
            std::mt19937_64 rng(0xfeedULL);
            std::uniform_real_distribution<double> u(-3.0, 3.0);
            int drops = 0;
            for (int probe = 0; probe < 8; ++probe)
                if (detail::rank_drops(a, {u(rng), u(rng)}, use_nominal, opts.rank_tol))
                    ++drops;
            if (drops == 8)
                throw std::runtime_error(
                    "transmission_zeros: system matrix is rank deficient at every "
                    "frequency; the zero set is not finite");
        }
    } else {
        for (const Complex& s : opts.sweep_candidates)
            if (detail::rank_drops(a, s, use_nominal, opts.rank_tol))
                detail::append_sorted_unique(found, s, 1e-7 * std::max(1.0, std::abs(s)));
    }

    ZeroSet zs;
    zs.imag_tol = opts.imag_tol;
    std::vector<Complex> rhp, axis;
    for (const Complex& z : found) {
        if (z.real() < -opts.imag_tol) continue;
        Complex cleaned = z;
        if (std::abs(z.real()) <= opts.imag_tol) cleaned.real(0.0);
        rhp.push_back(cleaned);
        if (cleaned.real() == 0.0) axis.push_back(cleaned);
    }
    auto by_imag = [](const Complex& x, const Complex& y) {
        return x.imag() != y.imag() ? x.imag() > y.imag() : x.real() < y.real();
    };
    std::sort(rhp.begin(), rhp.end(), by_imag);
    std::sort(axis.begin(), axis.end(), by_imag);
    zs.unstable = Eigen::Map<CVec>(rhp.data(), static_cast<Eigen::Index>(rhp.size()));
    zs.imaginary = Eigen::Map<CVec>(axis.data(), static_cast<Eigen::Index>(axis.size()));
    return zs;
}

/// Structural health report for one agent against the exosystem. Soft
/// entries are diagnostics; `hard_ok` gates synthesis.
struct AssumptionReport {
    bool stabilizable = false;
    bool detectable = false;
    bool exosystem_neutral = false;     // sigma(S0) on the imaginary axis
    bool rank_at_exosystem_modes = false;
    bool no_imaginary_zeros = false;    // informational: avoidance handles these
    std::vector<Complex> stabilizability_failures;
    std::vector<Complex> detectability_failures;
    std::vector<Complex> rank_failures;
    CVec imaginary_zeros;

    bool hard_ok() const {
        return stabilizable && detectable && exosystem_neutral && rank_at_exosystem_modes;
    }
};

inline AssumptionReport check_assumptions(const AgentModel& a, const ExosystemModel& exo,
                                          const ZeroOptions& opts = {}) {
    a.validate();
    exo.validate();
    AssumptionReport rep;
    const int nn = a.n(), mm = a.m(), qq = a.q();

    const matops::Spectrum sa = matops::eig(a.A0);
    rep.stabilizable = true;
    for (Eigen::Index i = 0; i < sa.eigenvalues.size(); ++i) {
        const Complex ev = sa.eigenvalues[i];
        if (ev.real() < -1e-9) continue;
        CMat pbh(nn, nn + mm);
        pbh.leftCols(nn) = a.A0.cast<Complex>() - ev * CMat::Identity(nn, nn);
        pbh.rightCols(mm) = a.B0.cast<Complex>();
        if (matops::numerical_rank(pbh, opts.rank_tol) < nn) {
            rep.stabilizable = false;
            rep.stabilizability_failures.push_back(ev);
        }
    }

    rep.detectable = true;
    for (Eigen::Index i = 0; i < sa.eigenvalues.size(); ++i) {
        const Complex ev = sa.eigenvalues[i];
        if (ev.real() < -1e-9) continue;
        CMat pbh(nn + qq, nn);
        pbh.topRows(nn) = a.A0.cast<Complex>() - ev * CMat::Identity(nn, nn);
        pbh.bottomRows(qq) = a.C0.cast<Complex>();
        if (matops::numerical_rank(pbh, opts.rank_tol) < nn) {
            rep.detectable = false;
            rep.detectability_failures.push_back(ev);
        }
    }

    const matops::Spectrum s0 = matops::eig(exo.S0);
    rep.exosystem_neutral = true;
    for (Eigen::Index i = 0; i < s0.eigenvalues.size(); ++i)
        if (std::abs(s0.eigenvalues[i].real()) > 1e-9 * std::max(1.0, exo.S0.norm()))
            rep.exosystem_neutral = false;

    rep.rank_at_exosystem_modes = true;
    for (Eigen::Index i = 0; i < s0.eigenvalues.size(); ++i) {
        const Complex s = s0.eigenvalues[i];
        if (detail::rank_drops(a, s, /*use_nominal=*/true, opts.rank_tol)) {
            rep.rank_at_exosystem_modes = false;
            rep.rank_failures.push_back(s);
        }
    }

    ZeroOptions sweep = opts;
    if (sweep.sweep_candidates.empty() && mm > qq)
        for (Eigen::Index i = 0; i < s0.eigenvalues.size(); ++i)
            sweep.sweep_candidates.push_back(s0.eigenvalues[i]);
    const ZeroSet zs = transmission_zeros(a, /*use_nominal=*/true, sweep);
    rep.imaginary_zeros = zs.imaginary;
    rep.no_imaginary_zeros = zs.imaginary.size() == 0;
    return rep;
}

} // namespace regnet::plant
