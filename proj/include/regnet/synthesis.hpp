#pragma once

#include <sstream>
#include <stdexcept>

#include "regnet/internal_model.hpp"
#include "regnet/matops.hpp"
#include "regnet/plant.hpp"
#include "regnet/types.hpp"

namespace regnet::synthesis {

/// Plant cascaded with the q-copy internal model:
/// Abar = [[A0, 0], [H C0, G]], Bbar = [B0; H D0].
struct AugmentedPair {
    Mat Abar, Bbar;
};

inline AugmentedPair augmented_pair(const plant::AgentModel& a,
                                    const internal_model::InternalModel& im) {
    const int nn = a.n(), mm = a.m();
    const int v = static_cast<int>(im.G.rows());
    AugmentedPair p;
    p.Abar = Mat::Zero(nn + v, nn + v);
    p.Abar.topLeftCorner(nn, nn) = a.A0;
    p.Abar.bottomLeftCorner(v, nn) = im.H * a.C0;
    p.Abar.bottomRightCorner(v, v) = im.G;
    p.Bbar = Mat::Zero(nn + v, mm);
    p.Bbar.topRows(nn) = a.B0;
    p.Bbar.bottomRows(v) = im.H * a.D0;
    return p;
}

/// Per-root test: the system matrix keeps full rank n + q at every root the
/// internal model is pinned at.
inline bool rank_condition_holds(const plant::AgentModel& a, const CVec& lambda,
                                 double rank_tol = 1e-8) {
    const int full = a.n() + a.q();
    for (Eigen::Index d = 0; d < lambda.size(); ++d)
        if (matops::numerical_rank(plant::rosenbrock(a, lambda[d]), rank_tol) < full)
            return false;
    return true;
}

/// PBH stabilizability of the augmented pair at the given roots. The
/// independent per-root rank test above agrees with this on sane inputs;
/// both are kept so each can check the other.
inline bool augmented_stabilizable(const plant::AgentModel& a, const CVec& lambda,
                                   double rank_tol = 1e-8) {
    const internal_model::InternalModel im =
        internal_model::build_internal_model(lambda, a.q());
    const AugmentedPair p = augmented_pair(a, im);
    const int total = static_cast<int>(p.Abar.rows());
    const matops::Spectrum spec = matops::eig(p.Abar);
    for (Eigen::Index i = 0; i < spec.eigenvalues.size(); ++i) {
        const Complex ev = spec.eigenvalues[i];
        if (ev.real() < -1e-9) continue;
        CMat pbh(total, total + a.m());
        pbh.leftCols(total) =
            p.Abar.cast<Complex>() - ev * CMat::Identity(total, total);
        pbh.rightCols(a.m()) = p.Bbar.cast<Complex>();
        if (matops::numerical_rank(pbh, rank_tol) < total) return false;
    }
    return true;
}

/// Output-feedback compensator xi' = E xi + F e, u = [K1 K2] xi built around
/// the internal model pinned at `lambda`.
struct CompensatorGains {
    CVec lambda;
    Mat L, K1, K2;
    Mat G, H;          // q-copy internal model blocks
    Mat E, F;
    bool exact_spectrum = true;
    int k = 0;

    Mat K() const {
        Mat out(K1.rows(), K1.cols() + K2.cols());
        out << K1, K2;
        return out;
    }
};

struct SynthesisOptions {
    double rank_tol = 1e-8;
    double verify_tol = 1e-6;
};

/// Observer injection via placement on the dual pair, feedback via placement
/// on the augmented pair, then the compensator assembly
/// E = blkdiag(A0 - L C0, G) + [B0 - L D0; 0] [K1 K2], F = [L; H].
inline CompensatorGains synthesize_gains(const plant::AgentModel& a, const CVec& lambda,
                                         const CVec& observer_poles,
                                         const CVec& augmented_poles,
                                         const SynthesisOptions& opts = {}) {
    a.validate();
    const int nn = a.n();
    const internal_model::InternalModel im =
        internal_model::build_internal_model(lambda, a.q());
    const int v = static_cast<int>(im.G.rows());

    if (observer_poles.size() != nn)
        throw std::invalid_argument("synthesize_gains: observer pole count must match n");
    if (augmented_poles.size() != nn + v) {
        std::ostringstream msg;
        msg << "synthesize_gains: " << augmented_poles.size()
            << " feedback poles requested, the augmented pair has order " << nn + v;
        throw std::invalid_argument(msg.str());
    }

    const matops::PlacementResult dual =
        matops::place_poles(a.A0.transpose(), a.C0.transpose(), observer_poles);
    const Mat L = -dual.K.transpose();

    const AugmentedPair p = augmented_pair(a, im);
    const matops::PlacementResult fb =
        matops::place_poles(p.Abar, p.Bbar, augmented_poles);

    CompensatorGains g;
    g.lambda = lambda;
    g.k = im.k;
    g.L = L;
    g.K1 = fb.K.leftCols(nn);
    g.K2 = fb.K.rightCols(v);
    g.G = im.G;
    g.H = im.H;
    g.exact_spectrum = dual.exact_spectrum && fb.exact_spectrum;

    g.E = Mat::Zero(nn + v, nn + v);
    g.E.topLeftCorner(nn, nn) = a.A0 - L * a.C0;
    g.E.bottomRightCorner(v, v) = im.G;
    Mat lift = Mat::Zero(nn + v, a.m());
    lift.topRows(nn) = a.B0 - L * a.D0;
    g.E += lift * fb.K;
    g.F = Mat::Zero(nn + v, a.q());
    g.F.topRows(nn) = L;
    g.F.bottomRows(v) = im.H;

    if (g.exact_spectrum) {
        const double obs_err = matops::spectrum_mismatch(
            matops::eig(a.A0 - L * a.C0).eigenvalues, observer_poles);
        const double fb_err = matops::spectrum_mismatch(
            matops::eig(p.Abar + p.Bbar * fb.K).eigenvalues, augmented_poles);
        if (obs_err > opts.verify_tol || fb_err > opts.verify_tol) {
            std::ostringstream msg;
            msg << "synthesize_gains: placed spectra drifted (observer "
                << obs_err << ", feedback " << fb_err << ")";
            throw std::runtime_error(msg.str());
        }
    } else if (!matops::is_stable(a.A0 - L * a.C0) ||
               !matops::is_stable(p.Abar + p.Bbar * fb.K)) {
        throw std::runtime_error(
            "synthesize_gains: fallback gains failed the stability check");
    }
    return g;
}

/// Closed-loop matrix of one agent under its compensator, split into the
/// nominal part and the perturbation the uncertainty induces.
struct ClosedLoopMonitor {
    Mat M, M0, dM;
    double margin = 0.0;
    bool stable = false;
};

inline ClosedLoopMonitor assemble_closed_loop(const plant::AgentModel& a,
                                              const CompensatorGains& g) {
    const int nn = a.n();
    const int v = static_cast<int>(g.G.rows());
    const int total = 2 * nn + v;
    const Mat K = g.K();

    ClosedLoopMonitor mon;
    mon.M = Mat::Zero(total, total);
    mon.M.topLeftCorner(nn, nn) = a.A();
    mon.M.topRightCorner(nn, nn + v) = a.B() * K;
    mon.M.bottomLeftCorner(nn + v, nn) = g.F * a.C();
    mon.M.bottomRightCorner(nn + v, nn + v) = g.E + g.F * a.D() * K;

    mon.M0 = Mat::Zero(total, total);
    mon.M0.block(0, 0, nn, nn) = a.A0;
    mon.M0.block(0, nn, nn, nn) = a.B0 * g.K1;
    mon.M0.block(0, nn + nn, nn, v) = a.B0 * g.K2;
    mon.M0.block(nn, 0, nn, nn) = g.L * a.C0;
    mon.M0.block(nn, nn, nn, nn) = a.A0 - g.L * a.C0 + a.B0 * g.K1;
    mon.M0.block(nn, nn + nn, nn, v) = a.B0 * g.K2;
    mon.M0.block(nn + nn, 0, v, nn) = g.H * a.C0;
    mon.M0.block(nn + nn, nn, v, nn) = g.H * a.D0 * g.K1;
    mon.M0.block(nn + nn, nn + nn, v, v) = g.G + g.H * a.D0 * g.K2;

    mon.dM = mon.M - mon.M0;
    mon.margin = matops::stability_margin(mon.M);
    mon.stable = mon.margin < 0.0;
    return mon;
}

/// Re-synthesizes gains only when the root estimate has moved more than
/// `tolerance` in the sup norm since the cached synthesis.
class GainCache {
public:
    explicit GainCache(double tolerance = 1e-4) : tolerance_(tolerance) {
        if (!(tolerance > 0.0))
            throw std::invalid_argument("GainCache: tolerance must be positive");
    }

    bool refresh(const plant::AgentModel& a, const CVec& lambda,
                 const CVec& observer_poles, const CVec& augmented_poles,
                 const SynthesisOptions& opts = {}) {
        if (have_ && lambda.size() == gains_.lambda.size()) {
            double move = 0.0;
            for (Eigen::Index d = 0; d < lambda.size(); ++d)
                move = std::max(move, std::abs(lambda[d] - gains_.lambda[d]));
            if (move <= tolerance_) return false;
        }
        gains_ = synthesize_gains(a, lambda, observer_poles, augmented_poles, opts);
        have_ = true;
        ++synth_count_;
        return true;
    }

    const CompensatorGains& gains() const {
        if (!have_) throw std::logic_error("GainCache: no gains synthesized yet");
        return gains_;
    }

    bool primed() const { return have_; }
    long synth_count() const { return synth_count_; }
    double tolerance() const { return tolerance_; }

private:
    double tolerance_;
    bool have_ = false;
    long synth_count_ = 0;
    CompensatorGains gains_;
};

} // namespace regnet::synthesis
