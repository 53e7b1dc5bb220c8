#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "regnet/engine.hpp"
#include "regnet/graph.hpp"
#include "regnet/matops.hpp"
#include "regnet/plant.hpp"
#include "regnet/synthesis.hpp"
#include "regnet/types.hpp"

namespace regnet::oracle {

/// Steady-state map of the frozen closed loop: eta = X w0, with X solving
/// X S0 = M X + [P; F Q] for the monitor M assembled from the given gains.
/// The output identity [C  D K] X + Q = 0 is a consequence of that solve,
/// so its residual is reported rather than imposed.
struct RegulatorSolution {
    Mat X;
    double sylvester_residual = 0.0;
    double output_residual = 0.0;
};

inline RegulatorSolution solve_regulator_pair(const plant::AgentModel& a,
                                              const synthesis::CompensatorGains& g,
                                              const Mat& S0) {
    const synthesis::ClosedLoopMonitor mon = synthesis::assemble_closed_loop(a, g);
    const int nn = a.n();
    const int total = static_cast<int>(mon.M.rows());
    if (S0.rows() != S0.cols() || S0.rows() != a.r()) {
        std::ostringstream msg;
        msg << "solve_regulator_pair: S0 is " << S0.rows() << "x" << S0.cols()
            << ", the model takes a " << a.r() << "-dimensional reference";
        throw std::invalid_argument(msg.str());
    }

    Mat R(total, S0.cols());
    R.topRows(nn) = a.P();
    R.bottomRows(total - nn) = g.F * a.Q();

    RegulatorSolution sol;
    sol.X = matops::solve_sylvester(mon.M, S0, R);
    const double scale = std::max({1.0, mon.M.norm(), S0.norm(), R.norm()});
    sol.sylvester_residual = (sol.X * S0 - mon.M * sol.X - R).norm() / scale;

    Mat cdk(a.q(), total);
    cdk.leftCols(nn) = a.C();
    cdk.rightCols(total - nn) = a.D() * g.K();
    sol.output_residual =
        (cdk * sol.X + a.Q()).norm() / std::max(1.0, a.Q().norm());
    return sol;
}

/// Tail max of ||[x; xi](t) - X w0(t)||_inf from a recorded regulation run.
inline double steady_state_crosscheck(const engine::Trajectory& traj, int agent,
                                      const Mat& X, double tail_fraction = 0.1) {
    if (traj.mode != engine::Mode::regulation)
        throw std::invalid_argument(
            "steady_state_crosscheck: needs a regulation-mode trajectory");
    if (!(tail_fraction > 0.0) || tail_fraction > 1.0)
        throw std::invalid_argument(
            "steady_state_crosscheck: tail fraction must lie in (0, 1]");
    if (agent < 0 || agent >= traj.agent_count())
        throw std::out_of_range("steady_state_crosscheck: agent out of range");
    const auto x_it = traj.per_agent.find("x");
    const auto xi_it = traj.per_agent.find("xi");
    const auto w0_it = traj.global_series.find("w0");
    if (x_it == traj.per_agent.end() || xi_it == traj.per_agent.end() ||
        w0_it == traj.global_series.end())
        throw std::invalid_argument(
            "steady_state_crosscheck: trajectory lacks x/xi/w0 series");

    const auto& xs = x_it->second[static_cast<size_t>(agent)];
    const auto& xis = xi_it->second[static_cast<size_t>(agent)];
    const auto& w0s = w0_it->second;
    const double tail_start = traj.times.back() * (1.0 - tail_fraction);
    double worst = 0.0;
    for (size_t s = 0; s < traj.times.size(); ++s) {
        if (traj.times[s] < tail_start - 1e-12) continue;
        Vec eta(xs[s].size() + xis[s].size());
        eta << xs[s], xis[s];
        worst = std::max(worst, (eta - X * w0s[s]).cwiseAbs().maxCoeff());
    }
    return worst;
}

/// Feedforward regulator on the nominal matrices: X, U solving
/// X S0 = A0 X + B0 U + P0 and 0 = C0 X + D0 U + Q0, plus a stabilizing
/// state feedback. u = U w + Ks (x - X w) regulates the nominal plant but
/// has no mechanism to absorb model perturbations.
struct BaselineController {
    Mat X, U, Ks;
    double state_residual = 0.0;
    double output_residual = 0.0;
};

inline BaselineController baseline_regulator_controller(const plant::AgentModel& a,
                                                        const Mat& S0,
                                                        const CVec& feedback_poles) {
    a.validate();
    const int n = a.n(), m = a.m(), q = a.q();
    const int r = static_cast<int>(S0.rows());
    if (S0.cols() != r || a.r() != r) {
        std::ostringstream msg;
        msg << "baseline_regulator_controller: S0 is " << S0.rows() << "x"
            << S0.cols() << ", the model takes a " << a.r()
            << "-dimensional reference";
        throw std::invalid_argument(msg.str());
    }

    const Mat In = Mat::Identity(n, n);
    const Mat Ir = Mat::Identity(r, r);
    Mat sys = Mat::Zero((n + q) * r, (n + m) * r);
    sys.block(0, 0, n * r, n * r) =
        matops::kron(S0.transpose(), In) - matops::kron(Ir, a.A0);
    sys.block(0, n * r, n * r, m * r) = -matops::kron(Ir, a.B0);
    sys.block(n * r, 0, q * r, n * r) = matops::kron(Ir, a.C0);
    sys.block(n * r, n * r, q * r, m * r) = matops::kron(Ir, a.D0);
    Vec rhs((n + q) * r);
    rhs.head(n * r) = Eigen::Map<const Vec>(a.P0.data(), n * r);
    rhs.tail(q * r) = -Eigen::Map<const Vec>(a.Q0.data(), q * r);

    const Vec z = sys.colPivHouseholderQr().solve(rhs);
    const double scale = std::max(1.0, rhs.norm());
    if ((sys * z - rhs).norm() > 1e-8 * scale) {
        std::ostringstream msg;
        msg << "baseline_regulator_controller: the regulator equations have no "
               "solution (residual "
            << (sys * z - rhs).norm() << ")";
        throw std::runtime_error(msg.str());
    }

    BaselineController ctl;
    ctl.X = Eigen::Map<const Mat>(z.data(), n, r);
    ctl.U = Eigen::Map<const Mat>(z.data() + n * r, m, r);
    ctl.Ks = matops::place_poles(a.A0, a.B0, feedback_poles).K;
    ctl.state_residual =
        (ctl.X * S0 - a.A0 * ctl.X - a.B0 * ctl.U - a.P0).norm() / scale;
    ctl.output_residual =
        (a.C0 * ctl.X + a.D0 * ctl.U + a.Q0).norm() / scale;
    return ctl;
}

/// One agent of a baseline comparison run: the (possibly perturbed) plant,
/// the poles for the nominal feedback, and the initial slices. w_init seeds
/// the agent's local copy of the exosystem state.
struct BaselineAgentSpec {
    plant::AgentModel model;
    CVec feedback_poles;  // n of them
    Vec x_init;           // n
    Vec w_init;           // r
};

struct BaselineOptions {
    double h = 1e-3;
    double horizon = 10.0;
    int decimation = 100;
    double tail_fraction = 0.1;
    double divergence_guard = 1e9;
};

struct BaselineSetup {
    std::vector<BaselineAgentSpec> agents;
    Mat S0;
    Vec w0_init;
    BaselineOptions options;
};

struct BaselineResult {
    std::vector<BaselineController> controllers;
    engine::Trajectory trajectory;
    double tail_max_regulation_error = 0.0;
    double tail_max_generator_error = 0.0;
    double tail_start = 0.0;
    long steps = 0;
};

namespace detail {

inline long aligned_count(double t, double h, const char* what) {
    const long s = std::lround(t / h);
    if (std::abs(static_cast<double>(s) * h - t) > 1e-9 * std::max(1.0, std::abs(t))) {
        std::ostringstream msg;
        msg << "run_baseline: " << what << " " << t
            << " is not an integer multiple of the step size " << h;
        throw std::invalid_argument(msg.str());
    }
    return s;
}

inline Mat random_matrix(std::mt19937_64& rng, int rows, int cols) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = gauss(rng);
    return m;
}

} // namespace detail

/// Integrates the plants under the feedforward law with each agent running
/// a local exosystem copy pulled by consensus: w_i' = S0 w_i + sum of
/// neighbor disagreements (node 0 of the graph is the exosystem itself).
/// Same grid rules as the main engine: the horizon and all switch instants
/// must land on step boundaries.
inline BaselineResult run_baseline(const graph::SwitchingDigraph& g,
                                   const BaselineSetup& setup) {
    const BaselineOptions& opt = setup.options;
    const int n_agents = static_cast<int>(setup.agents.size());
    const int r = static_cast<int>(setup.S0.rows());
    if (n_agents == 0) throw std::invalid_argument("run_baseline: no agents");
    if (setup.S0.cols() != r || r == 0)
        throw std::invalid_argument("run_baseline: S0 must be square and nonempty");
    if (static_cast<int>(setup.w0_init.size()) != r)
        throw std::invalid_argument("run_baseline: w0_init does not match S0");
    if (g.node_count() != n_agents + 1) {
        std::ostringstream msg;
        msg << "run_baseline: " << n_agents << " agents need a "
            << n_agents + 1 << "-node graph, got " << g.node_count();
        throw std::invalid_argument(msg.str());
    }
    if (!(opt.h > 0.0) || !(opt.horizon > 0.0))
        throw std::invalid_argument("run_baseline: step and horizon must be positive");
    const long steps = detail::aligned_count(opt.horizon, opt.h, "horizon");
    if (opt.decimation < 1 || steps % opt.decimation != 0)
        throw std::invalid_argument(
            "run_baseline: decimation must evenly divide the step count");
    if (!(opt.tail_fraction > 0.0) || opt.tail_fraction > 1.0)
        throw std::invalid_argument("run_baseline: tail fraction must lie in (0, 1]");
    for (double tv : g.switch_times(opt.horizon))
        if (tv > 0.0) detail::aligned_count(tv, opt.h, "switch instant");

    BaselineResult out;
    std::vector<Mat> A, B, C, D, P, Q;
    std::vector<int> x_off, w_off;
    int cursor = r;  // w0 first
    for (int i = 0; i < n_agents; ++i) {
        const BaselineAgentSpec& spec = setup.agents[static_cast<size_t>(i)];
        try {
            spec.model.validate();
            if (spec.model.r() != r)
                throw std::invalid_argument("model reference dimension mismatch");
            if (static_cast<int>(spec.x_init.size()) != spec.model.n() ||
                static_cast<int>(spec.w_init.size()) != r)
                throw std::invalid_argument("initial slice size mismatch");
            out.controllers.push_back(baseline_regulator_controller(
                spec.model, setup.S0, spec.feedback_poles));
        } catch (const std::invalid_argument& ex) {
            throw std::invalid_argument("run_baseline: agent " +
                                        std::to_string(i + 1) + ": " + ex.what());
        }
        A.push_back(spec.model.A());
        B.push_back(spec.model.B());
        C.push_back(spec.model.C());
        D.push_back(spec.model.D());
        P.push_back(spec.model.P());
        Q.push_back(spec.model.Q());
        x_off.push_back(cursor);
        cursor += spec.model.n();
        w_off.push_back(cursor);
        cursor += r;
    }

    Vec state = Vec::Zero(cursor);
    state.head(r) = setup.w0_init;
    for (int i = 0; i < n_agents; ++i) {
        state.segment(x_off[static_cast<size_t>(i)],
                      setup.agents[static_cast<size_t>(i)].model.n()) =
            setup.agents[static_cast<size_t>(i)].x_init;
        state.segment(w_off[static_cast<size_t>(i)], r) =
            setup.agents[static_cast<size_t>(i)].w_init;
    }

    const Mat* adj = nullptr;
    std::vector<Vec> u_buf, xdev_buf;
    for (int i = 0; i < n_agents; ++i) {
        u_buf.emplace_back(Vec::Zero(setup.agents[static_cast<size_t>(i)].model.m()));
        xdev_buf.emplace_back(
            Vec::Zero(setup.agents[static_cast<size_t>(i)].model.n()));
    }
    auto field = [&](double, const Vec& y, Vec& dy) {
        dy.setZero(y.size());
        const auto w0 = y.head(r);
        dy.head(r).noalias() = setup.S0 * w0;
        for (int i = 0; i < n_agents; ++i) {
            const size_t ui = static_cast<size_t>(i);
            const int n = setup.agents[ui].model.n();
            const auto x = y.segment(x_off[ui], n);
            const auto wi = y.segment(w_off[ui], r);
            Vec& u = u_buf[ui];
            Vec& xdev = xdev_buf[ui];
            xdev.noalias() = x;
            xdev.noalias() -= out.controllers[ui].X * wi;
            u.noalias() = out.controllers[ui].U * wi;
            u.noalias() += out.controllers[ui].Ks * xdev;
            auto dx = dy.segment(x_off[ui], n);
            dx.noalias() = A[ui] * x;
            dx.noalias() += B[ui] * u;
            dx.noalias() += P[ui] * w0;
            auto dw = dy.segment(w_off[ui], r);
            dw.noalias() = setup.S0 * wi;
            const double a0 = (*adj)(i + 1, 0);
            if (a0 > 0.0) dw += a0 * (w0 - wi);
            for (int j = 0; j < n_agents; ++j) {
                const double weight = (*adj)(i + 1, j + 1);
                if (weight > 0.0 && j != i)
                    dw += weight * (y.segment(w_off[static_cast<size_t>(j)], r) - wi);
            }
        }
    };

    engine::Trajectory& traj = out.trajectory;
    traj.mode = engine::Mode::regulation;
    traj.h = opt.h;
    traj.horizon = opt.horizon;
    traj.decimation = opt.decimation;
    for (const char* name : {"w", "werr", "x", "z"})
        traj.per_agent[name].resize(static_cast<size_t>(n_agents));

    out.tail_start = opt.horizon * (1.0 - opt.tail_fraction);
    out.steps = steps;
    engine::Rk4Workspace ws;
    ws.resize(cursor);
    long pending = 0;
    for (long s = 0;; ++s) {
        const double t = static_cast<double>(s) * opt.h;
        if (s >= pending) {
            adj = &g.adjacency_at(t + 0.5 * opt.h);
            const double nxt = g.next_switch_after(t + 0.5 * opt.h);
            pending = std::isfinite(nxt)
                          ? detail::aligned_count(nxt, opt.h, "switch instant")
                          : std::numeric_limits<long>::max();
        }
        if (s % opt.decimation == 0) {
            traj.times.push_back(t);
            const Vec w0 = state.head(r);
            traj.global_series["w0"].push_back(w0);
            const bool in_tail = t >= out.tail_start - 1e-12;
            for (int i = 0; i < n_agents; ++i) {
                const size_t ui = static_cast<size_t>(i);
                const int n = setup.agents[ui].model.n();
                const Vec x = state.segment(x_off[ui], n);
                const Vec wi = state.segment(w_off[ui], r);
                const Vec u = out.controllers[ui].U * wi +
                              out.controllers[ui].Ks * (x - out.controllers[ui].X * wi);
                const Vec z = C[ui] * x + D[ui] * u + Q[ui] * w0;
                traj.per_agent["x"][ui].push_back(x);
                traj.per_agent["w"][ui].push_back(wi);
                traj.per_agent["werr"][ui].push_back(wi - w0);
                traj.per_agent["z"][ui].push_back(z);
                if (in_tail) {
                    out.tail_max_regulation_error = std::max(
                        out.tail_max_regulation_error, z.cwiseAbs().maxCoeff());
                    out.tail_max_generator_error =
                        std::max(out.tail_max_generator_error,
                                 (wi - w0).cwiseAbs().maxCoeff());
                }
            }
        }
        if (s == steps) break;
        engine::rk4_step(t, opt.h, state, field, ws);
        if (!state.allFinite() ||
            state.cwiseAbs().maxCoeff() > opt.divergence_guard) {
            std::ostringstream msg;
            msg << "run_baseline: state diverged at t = "
                << static_cast<double>(s + 1) * opt.h;
            throw std::runtime_error(msg.str());
        }
    }
    return out;
}

/// True when no listed node receives an edge from outside the list.
inline bool reference_closed(const Mat& adjacency, const std::vector<int>& nodes) {
    std::vector<char> inside(static_cast<size_t>(adjacency.rows()), 0);
    for (int v : nodes) {
        if (v < 0 || v >= adjacency.rows())
            throw std::out_of_range("reference_closed: node out of range");
        inside[static_cast<size_t>(v)] = 1;
    }
    for (int v : nodes)
        for (Eigen::Index j = 0; j < adjacency.cols(); ++j)
            if (adjacency(v, j) > 0.0 && !inside[static_cast<size_t>(j)])
                return false;
    return true;
}

/// Outcome of one randomized battery. Instances whose preconditions fail
/// are reported, not scored.
struct LemmaReport {
    std::string name;
    int instances = 0;
    int passes = 0;
    int precondition_violations = 0;
    double worst_tail = 0.0;
    double tolerance = 0.0;
};

/// Cascade stability under vanishing perturbations: x' = (A1(t) + A2(t)) x
/// + A3(t) with A1 switching over symmetric stable snapshots and A2, A3
/// decaying exponentially must drive x to zero.
inline LemmaReport lemma2_battery(int instances, unsigned seed) {
    LemmaReport rep;
    rep.name = "lemma2";
    rep.instances = instances;
    rep.tolerance = 1e-6;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);

    const double h = 1e-3, horizon = 60.0, dwell = 0.5;
    for (int inst = 0; inst < instances; ++inst) {
        const int n = 2 + static_cast<int>(rng() % 3);
        std::vector<Mat> stable;
        for (int k = 0; k < 3; ++k) {
            const Mat G = detail::random_matrix(rng, n, n);
            stable.push_back(-(G * G.transpose() + 0.5 * Mat::Identity(n, n)));
        }
        // unit-norm perturbation: anything the early e^{-0.3t} window lets
        // grow must stay small enough for the -0.5 contraction to flush out
        Mat A2 = detail::random_matrix(rng, n, n);
        A2 /= A2.norm();
        const Vec a3 = detail::random_matrix(rng, n, 1);
        Vec y(n);
        for (int d = 0; d < n; ++d) y[d] = unit(rng);

        auto field = [&](double t, const Vec& state, Vec& dy) {
            const size_t idx =
                static_cast<size_t>(std::floor(t / dwell + 1e-9)) % stable.size();
            dy.noalias() = stable[idx] * state;
            dy.noalias() += std::exp(-0.3 * t) * (A2 * state);
            dy += std::exp(-0.4 * t) * a3;
        };
        engine::Rk4Workspace ws;
        ws.resize(n);
        const long steps = std::lround(horizon / h);
        double tail = 0.0;
        for (long s = 0; s < steps; ++s) {
            engine::rk4_step(static_cast<double>(s) * h, h, y, field, ws);
            if (static_cast<double>(s + 1) * h >= 0.9 * horizon)
                tail = std::max(tail, y.cwiseAbs().maxCoeff());
        }
        rep.worst_tail = std::max(rep.worst_tail, tail);
        if (tail < rep.tolerance) ++rep.passes;
    }
    return rep;
}

namespace detail {

/// Shared core of the generator-convergence batteries: integrates the S/w
/// consensus over a switching digraph and returns the tail error against
/// the reference dynamics (and, for the rootless variant, the pairwise w
/// gap). `exo` selects whether node 0 of the graph is the reference.
struct GeneratorBatteryInstance {
    graph::SwitchingDigraph graph;
    Mat S_ref;
    bool exo = true;                 // node 0 feeds (S_ref, w0)
    std::vector<Mat> S_init;
    std::vector<Vec> w_init;
    Vec w0_init;                     // exo variant only
};

inline double generator_tail_error(const GeneratorBatteryInstance& inst,
                                   double horizon, double h) {
    const int r = static_cast<int>(inst.S_ref.rows());
    const int n_agents = static_cast<int>(inst.S_init.size());
    const int off = inst.exo ? 1 : 0;
    const int slice = r * r + r;
    const int base = inst.exo ? r : 0;
    Vec y = Vec::Zero(base + n_agents * slice);
    if (inst.exo) y.head(r) = inst.w0_init;
    for (int i = 0; i < n_agents; ++i) {
        y.segment(base + i * slice, r * r) =
            Eigen::Map<const Vec>(inst.S_init[static_cast<size_t>(i)].data(), r * r);
        y.segment(base + i * slice + r * r, r) = inst.w_init[static_cast<size_t>(i)];
    }
    const Vec s_ref_vec = Eigen::Map<const Vec>(inst.S_ref.data(), r * r);

    const Mat* adj = nullptr;
    auto field = [&](double, const Vec& state, Vec& dy) {
        dy.setZero(state.size());
        if (inst.exo) dy.head(r).noalias() = inst.S_ref * state.head(r);
        for (int i = 0; i < n_agents; ++i) {
            const int at = base + i * slice;
            const Eigen::Map<const Mat> Si(state.data() + at, r, r);
            const auto Svec = state.segment(at, r * r);
            const auto wi = state.segment(at + r * r, r);
            auto dS = dy.segment(at, r * r);
            auto dw = dy.segment(at + r * r, r);
            dw.noalias() = Si * wi;
            for (int j = 0; j < n_agents; ++j) {
                const double weight = (*adj)(i + off, j + off);
                if (weight <= 0.0 || j == i) continue;
                const int jat = base + j * slice;
                dS += weight * (state.segment(jat, r * r) - Svec);
                dw += weight * (state.segment(jat + r * r, r) - wi);
            }
            if (inst.exo) {
                const double a0 = (*adj)(i + 1, 0);
                if (a0 > 0.0) {
                    dS += a0 * (s_ref_vec - Svec);
                    dw += a0 * (state.head(r) - wi);
                }
            }
        }
    };

    engine::Rk4Workspace ws;
    ws.resize(y.size());
    const long steps = std::lround(horizon / h);
    long pending = 0;
    double tail = 0.0;
    for (long s = 0; s < steps; ++s) {
        const double t = static_cast<double>(s) * h;
        if (s >= pending) {
            adj = &inst.graph.adjacency_at(t + 0.5 * h);
            const double nxt = inst.graph.next_switch_after(t + 0.5 * h);
            pending = std::isfinite(nxt) ? std::lround(nxt / h)
                                         : std::numeric_limits<long>::max();
        }
        engine::rk4_step(t, h, y, field, ws);
        if (static_cast<double>(s + 1) * h < 0.9 * horizon || (s + 1) % 100 != 0)
            continue;
        for (int i = 0; i < n_agents; ++i) {
            const int at = base + i * slice;
            tail = std::max(tail,
                            (y.segment(at, r * r) - s_ref_vec).cwiseAbs().maxCoeff());
            if (inst.exo) {
                tail = std::max(tail, (y.segment(at + r * r, r) - y.head(r))
                                          .cwiseAbs()
                                          .maxCoeff());
            } else {
                for (int j = i + 1; j < n_agents; ++j)
                    tail = std::max(tail, (y.segment(at + r * r, r) -
                                           y.segment(base + j * slice + r * r, r))
                                              .cwiseAbs()
                                              .maxCoeff());
            }
        }
    }
    return tail;
}

} // namespace detail

/// Generator convergence over randomized switching digraphs whose per-period
/// union contains a spanning tree from the reference node: every agent's
/// (S, w) must reach (S0, w0). Cross edges stay an order weaker than the
/// tree — a comparably-weighted feedback cycle can pace the whole cascade
/// and push convergence past any fixed scoring horizon.
inline LemmaReport lemma3_battery(int instances, unsigned seed) {
    LemmaReport rep;
    rep.name = "lemma3";
    rep.instances = instances;
    rep.tolerance = 1e-3;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> weight(1.0, 2.0);
    std::uniform_real_distribution<double> nudge(0.1, 0.4);

    for (int inst = 0; inst < instances; ++inst) {
        const int n_agents = 3 + static_cast<int>(rng() % 4);
        const double omega = 0.5 + 0.75 * (unit(rng) + 1.0);

        std::vector<Mat> snaps(2, Mat::Zero(n_agents + 1, n_agents + 1));
        for (int i = 1; i <= n_agents; ++i) {
            const int parent = static_cast<int>(rng() % static_cast<unsigned>(i));
            snaps[static_cast<size_t>(i % 2)](i, parent) = weight(rng);
        }
        for (size_t k = 0; k < snaps.size(); ++k) {
            const int to = 1 + static_cast<int>(rng() % n_agents);
            const int from = 1 + static_cast<int>(rng() % n_agents);
            if (to != from && snaps[k](to, from) == 0.0)
                snaps[k](to, from) = nudge(rng);
        }

        detail::GeneratorBatteryInstance gi{
            graph::SwitchingDigraph(snaps, {{0, 0.25}, {1, 0.25}}, 0.1, true, true),
            (Mat(2, 2) << 0.0, omega, -omega, 0.0).finished(),
            true,
            {},
            {},
            (Vec(2) << unit(rng), unit(rng)).finished()};
        for (int i = 0; i < n_agents; ++i) {
            gi.S_init.push_back(detail::random_matrix(rng, 2, 2));
            gi.w_init.push_back((Vec(2) << unit(rng), unit(rng)).finished());
        }

        const double tail = detail::generator_tail_error(gi, 100.0, 1e-3);
        rep.worst_tail = std::max(rep.worst_tail, tail);
        if (tail < rep.tolerance) ++rep.passes;
    }
    return rep;
}

/// Rootless variant: a closed set of root agents shares the target dynamics
/// and the remaining agents, reachable from it in the per-period union,
/// must converge to the target with a common generator state. Instances
/// whose root set receives an outside edge violate the premise and are
/// reported instead of scored.
inline LemmaReport lemma5_battery(int instances, unsigned seed,
                                  bool break_closedness = false) {
    LemmaReport rep;
    rep.name = "lemma5";
    rep.instances = instances;
    rep.tolerance = 1e-3;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> weight(1.0, 2.0);
    std::uniform_real_distribution<double> nudge(0.1, 0.4);

    for (int inst = 0; inst < instances; ++inst) {
        const int n_agents = 3 + static_cast<int>(rng() % 4);
        const int n_roots = 1 + static_cast<int>(rng() % 2);
        const double omega = 0.5 + 0.75 * (unit(rng) + 1.0);
        const Mat S_star = (Mat(2, 2) << 0.0, omega, -omega, 0.0).finished();

        std::vector<Mat> snaps(2, Mat::Zero(n_agents, n_agents));
        for (int i = n_roots; i < n_agents; ++i) {
            const int parent = static_cast<int>(rng() % static_cast<unsigned>(i));
            snaps[static_cast<size_t>(i % 2)](i, parent) = weight(rng);
        }
        if (n_roots == 2) snaps[0](1, 0) = weight(rng);
        for (size_t k = 0; k < snaps.size(); ++k) {
            const int to = n_roots + static_cast<int>(
                                         rng() % static_cast<unsigned>(
                                                     n_agents - n_roots));
            const int from = static_cast<int>(rng() % static_cast<unsigned>(n_agents));
            if (to != from && snaps[k](to, from) == 0.0)
                snaps[k](to, from) = nudge(rng);
        }
        if (break_closedness) snaps[0](0, n_agents - 1) = 1.0;

        detail::GeneratorBatteryInstance gi{
            graph::SwitchingDigraph(snaps, {{0, 0.25}, {1, 0.25}}, 0.1, true, false),
            S_star,
            false,
            {},
            {},
            Vec()};

        std::vector<int> roots;
        for (int v = 0; v < n_roots; ++v) roots.push_back(v);
        if (!reference_closed(gi.graph.union_adjacency(0.0, 1.0), roots)) {
            ++rep.precondition_violations;
            continue;
        }

        for (int i = 0; i < n_agents; ++i) {
            gi.S_init.push_back(i < n_roots ? S_star
                                            : detail::random_matrix(rng, 2, 2));
            gi.w_init.push_back((Vec(2) << unit(rng), unit(rng)).finished());
        }
        const double tail = detail::generator_tail_error(gi, 100.0, 1e-3);
        rep.worst_tail = std::max(rep.worst_tail, tail);
        if (tail < rep.tolerance) ++rep.passes;
    }
    return rep;
}

inline std::vector<LemmaReport> lemma_harnesses(int instances = 50,
                                                unsigned seed = 20240817u) {
    return {lemma2_battery(instances, seed), lemma3_battery(instances, seed + 1),
            lemma5_battery(instances, seed + 2)};
}

/// Flat `name.key value` lines, one battery after another.
inline void write_reports(const std::vector<LemmaReport>& reports,
                          std::ostream& os) {
    char num[40];
    for (const LemmaReport& rep : reports) {
        os << rep.name << ".instances " << rep.instances << '\n';
        os << rep.name << ".passes " << rep.passes << '\n';
        os << rep.name << ".precondition_violations " << rep.precondition_violations
           << '\n';
        std::snprintf(num, sizeof num, "%.17g", rep.worst_tail);
        os << rep.name << ".worst_tail " << num << '\n';
        std::snprintf(num, sizeof num, "%.17g", rep.tolerance);
        os << rep.name << ".tolerance " << num << '\n';
    }
}

} // namespace regnet::oracle
