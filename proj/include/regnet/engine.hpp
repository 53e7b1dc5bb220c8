#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "regnet/generator.hpp"
#include "regnet/graph.hpp"
#include "regnet/internal_model.hpp"
#include "regnet/plant.hpp"
#include "regnet/synthesis.hpp"
#include "regnet/types.hpp"

namespace regnet::engine {

enum class Mode { regulation, synchronization };

inline const char* mode_name(Mode m) {
    return m == Mode::regulation ? "regulation" : "synchronization";
}

/// One agent of the network: the plant, the pole sets its compensator is
/// synthesized against, and the agent's slice of the initial state.
struct AgentSpec {
    plant::AgentModel model;
    CVec observer_poles;   // n of them
    CVec augmented_poles;  // n + k q of them
    Vec x_init;            // n
    Vec xi_init;           // n + k q
    Vec w_init;            // r
    Mat S_init;            // r x r
    Vec beta_init;         // floor(k / 2)
    Mat Q_init;            // q x r, synchronization mode only
};

struct EngineOptions {
    double h = 1e-3;
    double horizon = 10.0;
    int decimation = 100;           // record every `decimation` steps
    double tail_fraction = 0.1;     // trailing share of the horizon scored by metrics
    double gain_tolerance = 1e-4;   // root drift that triggers re-synthesis
    double lambda_settle_tol = 1e-3;
    double divergence_guard = 1e9;
    double rho_coefficient = 0.5;
    synthesis::SynthesisOptions synthesis;
};

/// Everything a run needs besides the topology: the agents, the reference
/// dynamics (exosystem matrix with its initial state, or the target the
/// rooted agents carry), and the options.
struct NetworkSetup {
    Mode mode = Mode::regulation;
    std::vector<AgentSpec> agents;
    Mat S_reference;
    Vec w0_init;                       // regulation only
    std::vector<int> reference_nodes;  // synchronization only, 0-based
    EngineOptions options;
};

/// Offsets of one agent's slice inside the flat state vector; S and Q are
/// flattened column-major.
struct AgentLayout {
    int x = 0, xi = 0, w = 0, S = 0, beta = 0, Q = 0;
    int nx = 0, nxi = 0, nbeta = 0, nQ = 0;
};

struct StateLayout {
    int total = 0;
    int w0 = -1;  // exosystem slice, regulation only
    int r = 0;
    std::vector<AgentLayout> agents;

    std::string describe(int index) const {
        if (w0 >= 0 && index >= w0 && index < w0 + r)
            return "exosystem w0[" + std::to_string(index - w0) + "]";
        for (size_t i = 0; i < agents.size(); ++i) {
            const AgentLayout& a = agents[i];
            const std::string tag = "agent " + std::to_string(i + 1) + " ";
            if (index >= a.x && index < a.x + a.nx)
                return tag + "x[" + std::to_string(index - a.x) + "]";
            if (index >= a.xi && index < a.xi + a.nxi)
                return tag + "xi[" + std::to_string(index - a.xi) + "]";
            if (index >= a.w && index < a.w + r)
                return tag + "w[" + std::to_string(index - a.w) + "]";
            if (index >= a.S && index < a.S + r * r)
                return tag + "S[" + std::to_string(index - a.S) + "]";
            if (index >= a.beta && index < a.beta + a.nbeta)
                return tag + "beta[" + std::to_string(index - a.beta) + "]";
            if (a.nQ > 0 && index >= a.Q && index < a.Q + a.nQ)
                return tag + "Q[" + std::to_string(index - a.Q) + "]";
        }
        return "component " + std::to_string(index);
    }
};

/// Scratch for one integration step, reused so the hot loop never allocates.
struct Rk4Workspace {
    Vec k1, k2, k3, k4, stage;

    void resize(Eigen::Index n) {
        k1.resize(n);
        k2.resize(n);
        k3.resize(n);
        k4.resize(n);
        stage.resize(n);
    }
};

/// One classic fourth-order step of y' = f(t, y) in place. `f(t, y, dy)`
/// must fill dy at the size of y.
template <typename Field>
inline void rk4_step(double t, double h, Vec& y, Field&& f, Rk4Workspace& ws) {
    f(t, y, ws.k1);
    ws.stage = y + (0.5 * h) * ws.k1;
    f(t + 0.5 * h, ws.stage, ws.k2);
    ws.stage = y + (0.5 * h) * ws.k2;
    f(t + 0.5 * h, ws.stage, ws.k3);
    ws.stage = y + h * ws.k3;
    f(t + h, ws.stage, ws.k4);
    y += (h / 6.0) * (ws.k1 + 2.0 * ws.k2 + 2.0 * ws.k3 + ws.k4);
}

/// Decimated time series of a run. Per-agent series are keyed by name and
/// indexed [agent][sample] with 0-based agents; the CSV export reports
/// agents 1-based and reserves agent 0 for the global series.
struct Trajectory {
    Mode mode = Mode::regulation;
    double h = 0.0;
    double horizon = 0.0;
    int decimation = 1;
    std::vector<double> times;
    std::map<std::string, std::vector<std::vector<Vec>>> per_agent;
    std::map<std::string, std::vector<Vec>> global_series;

    int agent_count() const {
        return per_agent.empty() ? 0 : static_cast<int>(per_agent.begin()->second.size());
    }
};

/// Tail-window extrema of a run. Entries that do not apply to the run's
/// mode stay NaN and are skipped by the text export.
struct Metrics {
    double h = 0.0;
    double horizon = 0.0;
    long steps = 0;
    long samples = 0;
    int agents = 0;
    double tail_fraction = 0.0;
    double tail_start = 0.0;
    double tail_max_regulation_error = std::numeric_limits<double>::quiet_NaN();
    double tail_max_generator_error = std::numeric_limits<double>::quiet_NaN();
    double tail_max_s_error = std::numeric_limits<double>::quiet_NaN();
    double tail_max_pairwise_output_gap = std::numeric_limits<double>::quiet_NaN();
    double tail_max_error_feedback = std::numeric_limits<double>::quiet_NaN();
    double tail_max_beta_error = std::numeric_limits<double>::quiet_NaN();
    double lambda_convergence_time = -1.0;  // -1 when the roots never settle
    double margin_max = std::numeric_limits<double>::quiet_NaN();
    long synthesis_total = 0;

    std::vector<std::pair<std::string, double>> as_rows() const {
        std::vector<std::pair<std::string, double>> rows;
        auto put = [&rows](const char* key, double v) {
            if (!std::isnan(v)) rows.emplace_back(key, v);
        };
        put("h", h);
        put("horizon", horizon);
        put("steps", static_cast<double>(steps));
        put("samples", static_cast<double>(samples));
        put("agents", static_cast<double>(agents));
        put("tail_fraction", tail_fraction);
        put("tail_start", tail_start);
        put("tail_max_regulation_error", tail_max_regulation_error);
        put("tail_max_generator_error", tail_max_generator_error);
        put("tail_max_s_error", tail_max_s_error);
        put("tail_max_pairwise_output_gap", tail_max_pairwise_output_gap);
        put("tail_max_error_feedback", tail_max_error_feedback);
        put("tail_max_beta_error", tail_max_beta_error);
        put("lambda_convergence_time", lambda_convergence_time);
        put("margin_max", margin_max);
        put("synthesis_total", static_cast<double>(synthesis_total));
        return rows;
    }
};

struct RunResult {
    Trajectory trajectory;
    Metrics metrics;
};

namespace detail {

inline void format_value(char (&buf)[40], double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
}

} // namespace detail

/// Header `t,agent,series,component,value`; one row per recorded component,
/// sample-major, global series first under agent 0, then agents 1..N with
/// their series in name order.
inline void write_csv(const Trajectory& traj, std::ostream& os) {
    os << "t,agent,series,component,value\n";
    char num[40];
    const size_t samples = traj.times.size();
    for (size_t s = 0; s < samples; ++s) {
        char tbuf[40];
        detail::format_value(tbuf, traj.times[s]);
        for (const auto& [name, values] : traj.global_series) {
            const Vec& v = values[s];
            for (Eigen::Index c = 0; c < v.size(); ++c) {
                detail::format_value(num, v[c]);
                os << tbuf << ",0," << name << ',' << c << ',' << num << '\n';
            }
        }
        for (size_t a = 0; a < static_cast<size_t>(traj.agent_count()); ++a) {
            for (const auto& [name, series] : traj.per_agent) {
                const Vec& v = series[a][s];
                for (Eigen::Index c = 0; c < v.size(); ++c) {
                    detail::format_value(num, v[c]);
                    os << tbuf << ',' << (a + 1) << ',' << name << ',' << c << ','
                       << num << '\n';
                }
            }
        }
    }
}

/// Flat `key value` lines, one per metric, in a fixed order.
inline void write_metrics(const Metrics& m, std::ostream& os) {
    char num[40];
    for (const auto& [key, value] : m.as_rows()) {
        detail::format_value(num, value);
        os << key << ' ' << num << '\n';
    }
}

/// Fixed-step integrator for the coupled network: plants, compensators,
/// generator consensus, and the root consensus the gains are scheduled on.
/// Gains and adjacency are frozen over each step and refreshed at step
/// boundaries; switch instants and the horizon must land on the step grid,
/// so no step ever brackets a discontinuity.
class Simulator {
public:
    Simulator(graph::SwitchingDigraph g, NetworkSetup setup)
        : graph_(std::move(g)), setup_(std::move(setup)) {
        validate_options();
        validate_network();
        build_layout();
        build_agents();
        load_initial_state();
        ws_.resize(layout_.total);
    }

    Mode mode() const { return setup_.mode; }
    int agent_count() const { return static_cast<int>(setup_.agents.size()); }
    double time() const { return static_cast<double>(step_index_) * setup_.options.h; }
    long step_index() const { return step_index_; }
    long steps_total() const { return steps_total_; }
    const StateLayout& layout() const { return layout_; }
    const Vec& state() const { return state_; }
    const Vec& beta_target() const { return beta_target_; }
    const CVec& reference_modes() const { return exo_modes_; }
    const internal_model::RootLayout& root_layout() const { return roots_; }
    const EngineOptions& options() const { return setup_.options; }

    const internal_model::AvoidanceGeometry& geometry(int agent) const {
        check_agent(agent);
        return geometry_[static_cast<size_t>(agent)];
    }

    const synthesis::CompensatorGains& gains(int agent) const {
        check_agent(agent);
        return caches_[static_cast<size_t>(agent)].gains();
    }

    long synthesis_total() const {
        long total = 0;
        for (const synthesis::GainCache& c : caches_) total += c.synth_count();
        return total;
    }

    /// Replace the state in place; the next prepare() re-freezes gains.
    void set_state(const Vec& y) {
        if (y.size() != state_.size()) {
            std::ostringstream msg;
            msg << "Simulator::set_state: expected " << state_.size()
                << " components, got " << y.size();
            throw std::invalid_argument(msg.str());
        }
        if (!y.allFinite())
            throw std::invalid_argument("Simulator::set_state: non-finite entries");
        state_ = y;
        prepared_step_ = -1;
    }

    /// Load the adjacency interval covering the current time and
    /// re-synthesize any gains whose consensus roots drifted past the
    /// cache tolerance. step() calls this itself; it is idempotent within
    /// a step.
    void prepare() {
        if (prepared_step_ == step_index_) return;
        if (step_index_ >= pending_switch_step_) load_interval();
        refresh_gains();
        prepared_step_ = step_index_;
    }

    /// Right-hand side of the coupled network under the gains and adjacency
    /// frozen by the last prepare().
    void derivatives(const Vec& y, Vec& dy) const {
        if (prepared_step_ < 0)
            throw std::logic_error("Simulator::derivatives: call prepare() first");
        const int r = layout_.r;
        dy.setZero(layout_.total);
        if (setup_.mode == Mode::regulation)
            dy.segment(layout_.w0, r).noalias() =
                setup_.S_reference * y.segment(layout_.w0, r);
        for (size_t i = 0; i < setup_.agents.size(); ++i) {
            const AgentLayout& L = layout_.agents[i];
            const auto x = y.segment(L.x, L.nx);
            const auto xi = y.segment(L.xi, L.nxi);
            const auto wi = y.segment(L.w, r);
            Vec& u = u_buf_[i];
            Vec& e = e_buf_[i];
            u.noalias() = K_[i] * xi;
            e.noalias() = C_[i] * x;
            e.noalias() += D_[i] * u;
            if (setup_.mode == Mode::regulation) {
                e.noalias() += Qm_[i] * wi;
            } else {
                const Eigen::Map<const Mat> Qi(y.data() + L.Q, L.nQ / r, r);
                e.noalias() += Qi * wi;
            }

            auto dx = dy.segment(L.x, L.nx);
            dx.noalias() = A_[i] * x;
            dx.noalias() += B_[i] * u;
            auto dxi = dy.segment(L.xi, L.nxi);
            dxi.noalias() = E_[i] * xi;
            dxi.noalias() += F_[i] * e;

            const Eigen::Map<const Mat> Si(y.data() + L.S, r, r);
            auto dw = dy.segment(L.w, r);
            dw.noalias() = Si * wi;
            auto dS = dy.segment(L.S, r * r);
            auto dbeta = dy.segment(L.beta, L.nbeta);
            const auto Svec = y.segment(L.S, r * r);
            const auto beta = y.segment(L.beta, L.nbeta);
            for (const auto& [j, weight] : peers_[i]) {
                const AgentLayout& Lj = layout_.agents[static_cast<size_t>(j)];
                dw += weight * (y.segment(Lj.w, r) - wi);
                dS += weight * (y.segment(Lj.S, r * r) - Svec);
                dbeta += weight * (y.segment(Lj.beta, L.nbeta) - beta);
            }
            if (setup_.mode == Mode::regulation) {
                dx.noalias() += P_[i] * y.segment(layout_.w0, r);
                const double a0 = exo_weight_[i];
                if (a0 > 0.0) {
                    dw += a0 * (y.segment(layout_.w0, r) - wi);
                    dS += a0 * (s_reference_vec_ - Svec);
                    dbeta += a0 * (beta_target_ - beta);
                }
            } else {
                auto dQ = dy.segment(L.Q, L.nQ);
                const auto Qvec = y.segment(L.Q, L.nQ);
                for (const auto& [j, weight] : peers_[i]) {
                    const AgentLayout& Lj = layout_.agents[static_cast<size_t>(j)];
                    dQ += weight * (y.segment(Lj.Q, L.nQ) - Qvec);
                }
            }
        }
    }

    /// Advance one step on the fixed grid.
    void step() {
        prepare();
        const double t = time();
        rk4_step(
            t, setup_.options.h, state_,
            [this](double, const Vec& y, Vec& dy) { derivatives(y, dy); }, ws_);
        ++step_index_;
        guard_state();
    }

    /// Integrate from t = 0 to the horizon, recording every `decimation`
    /// steps and scoring the tail window.
    RunResult run() {
        if (step_index_ != 0)
            throw std::logic_error("Simulator::run: the simulator has already stepped");
        const EngineOptions& opt = setup_.options;
        const int n_agents = agent_count();
        const long expected = steps_total_ / opt.decimation + 1;

        RunResult out;
        Trajectory& traj = out.trajectory;
        traj.mode = setup_.mode;
        traj.h = opt.h;
        traj.horizon = opt.horizon;
        traj.decimation = opt.decimation;
        traj.times.reserve(static_cast<size_t>(expected));
        for (const char* name : agent_series_names()) {
            auto& series = traj.per_agent[name];
            series.resize(static_cast<size_t>(n_agents));
            for (auto& per : series) per.reserve(static_cast<size_t>(expected));
        }
        if (setup_.mode == Mode::regulation)
            traj.global_series["w0"].reserve(static_cast<size_t>(expected));

        TailAccumulator acc;
        acc.tail_start = opt.horizon * (1.0 - opt.tail_fraction);
        acc.beta_by_sample.reserve(static_cast<size_t>(expected));

        for (long s = 0;; ++s) {
            prepare();
            if (s % opt.decimation == 0) record_sample(traj, acc);
            if (s == steps_total_) break;
            step();
        }

        Metrics& m = out.metrics;
        m.h = opt.h;
        m.horizon = opt.horizon;
        m.steps = steps_total_;
        m.samples = static_cast<long>(traj.times.size());
        m.agents = n_agents;
        m.tail_fraction = opt.tail_fraction;
        m.tail_start = acc.tail_start;
        m.tail_max_generator_error = acc.generator_error;
        m.tail_max_s_error = acc.s_error;
        m.tail_max_error_feedback = acc.error_feedback;
        m.tail_max_beta_error = acc.beta_error;
        if (setup_.mode == Mode::regulation) {
            m.tail_max_regulation_error = acc.regulation_error;
        } else {
            m.tail_max_pairwise_output_gap = acc.output_gap;
        }
        m.margin_max = acc.margin_max;
        m.synthesis_total = synthesis_total();
        m.lambda_convergence_time = settle_time(traj.times, acc.beta_by_sample,
                                                opt.lambda_settle_tol);
        return out;
    }

private:
    struct TailAccumulator {
        double tail_start = 0.0;
        double regulation_error = 0.0;
        double generator_error = 0.0;
        double s_error = 0.0;
        double output_gap = 0.0;
        double error_feedback = 0.0;
        double beta_error = 0.0;
        double margin_max = -std::numeric_limits<double>::infinity();
        std::vector<double> beta_by_sample;
    };

    void validate_options() {
        const EngineOptions& opt = setup_.options;
        if (!(opt.h > 0.0) || !std::isfinite(opt.h))
            throw std::invalid_argument("Simulator: step size must be positive");
        if (!(opt.horizon > 0.0) || !std::isfinite(opt.horizon))
            throw std::invalid_argument("Simulator: horizon must be positive");
        steps_total_ = aligned_step(opt.horizon, "horizon");
        if (steps_total_ < 1)
            throw std::invalid_argument("Simulator: horizon is shorter than one step");
        if (opt.decimation < 1)
            throw std::invalid_argument("Simulator: decimation must be at least 1");
        if (steps_total_ % opt.decimation != 0) {
            std::ostringstream msg;
            msg << "Simulator: decimation " << opt.decimation
                << " does not divide the " << steps_total_
                << "-step horizon; sampling would be non-uniform";
            throw std::invalid_argument(msg.str());
        }
        if (!(opt.tail_fraction > 0.0) || opt.tail_fraction > 1.0)
            throw std::invalid_argument("Simulator: tail fraction must lie in (0, 1]");
        if (!(opt.divergence_guard > 0.0))
            throw std::invalid_argument("Simulator: divergence guard must be positive");
        for (double tv : graph_.switch_times(opt.horizon))
            if (tv > 0.0) aligned_step(tv, "switch instant");
    }

    void validate_network() {
        const int n_agents = static_cast<int>(setup_.agents.size());
        if (n_agents == 0) throw std::invalid_argument("Simulator: no agents");
        exo_modes_ = internal_model::minimal_polynomial_roots(setup_.S_reference);
        const double scale = std::max(1.0, setup_.S_reference.norm());
        for (Eigen::Index d = 0; d < exo_modes_.size(); ++d)
            if (std::abs(exo_modes_[d].real()) > 1e-7 * scale) {
                std::ostringstream msg;
                msg << "Simulator: reference dynamics must be neutrally stable; "
                       "mode "
                    << exo_modes_[d] << " has a nonzero real part";
                throw std::invalid_argument(msg.str());
            }
        k_ = static_cast<int>(exo_modes_.size());
        roots_ = internal_model::RootLayout::from_degree(k_);
        beta_target_ = roots_.reduce(exo_modes_);

        const int r = static_cast<int>(setup_.S_reference.rows());
        const int expected_nodes =
            n_agents + (setup_.mode == Mode::regulation ? 1 : 0);
        if (graph_.node_count() != expected_nodes) {
            std::ostringstream msg;
            msg << "Simulator: " << mode_name(setup_.mode) << " over " << n_agents
                << " agents needs a " << expected_nodes << "-node graph, got "
                << graph_.node_count();
            throw std::invalid_argument(msg.str());
        }

        if (setup_.mode == Mode::regulation) {
            if (static_cast<int>(setup_.w0_init.size()) != r) {
                std::ostringstream msg;
                msg << "Simulator: w0_init has " << setup_.w0_init.size()
                    << " components, expected " << r;
                throw std::invalid_argument(msg.str());
            }
            if (!setup_.reference_nodes.empty())
                throw std::invalid_argument(
                    "Simulator: reference nodes apply to synchronization mode only");
        }

        for (size_t i = 0; i < setup_.agents.size(); ++i) {
            try {
                validate_agent(setup_.agents[i], r);
            } catch (const std::invalid_argument& ex) {
                throw std::invalid_argument("agent " + std::to_string(i + 1) + ": " +
                                            ex.what());
            } catch (const std::runtime_error& ex) {
                throw std::runtime_error("agent " + std::to_string(i + 1) + ": " +
                                         ex.what());
            }
        }

        if (setup_.mode == Mode::synchronization) {
            generator::GeneratorState init;
            generator::SyncReferenceState ref;
            for (const AgentSpec& a : setup_.agents) {
                init.S.push_back(a.S_init);
                init.w.push_back(a.w_init);
                ref.Q.push_back(a.Q_init);
            }
            ref.reference_nodes = setup_.reference_nodes;
            ref.S_star = setup_.S_reference;
            generator::validate_sync_reference(ref, init);
        }
    }

    void validate_agent(const AgentSpec& spec, int r) const {
        spec.model.validate();
        const int n = spec.model.n();
        const int q = spec.model.q();
        const int v = k_ * q;
        if (spec.model.r() != r) {
            std::ostringstream msg;
            msg << "model takes a " << spec.model.r()
                << "-dimensional reference, the network carries " << r;
            throw std::invalid_argument(msg.str());
        }
        auto want = [](Eigen::Index got, int expect, const char* what) {
            if (static_cast<int>(got) != expect) {
                std::ostringstream msg;
                msg << what << " has " << got << " components, expected " << expect;
                throw std::invalid_argument(msg.str());
            }
        };
        want(spec.x_init.size(), n, "x_init");
        want(spec.xi_init.size(), n + v, "xi_init");
        want(spec.w_init.size(), r, "w_init");
        want(spec.beta_init.size(), roots_.half, "beta_init");
        want(spec.observer_poles.size(), n, "observer_poles");
        want(spec.augmented_poles.size(), n + v, "augmented_poles");
        if (spec.S_init.rows() != r || spec.S_init.cols() != r) {
            std::ostringstream msg;
            msg << "S_init is " << spec.S_init.rows() << "x" << spec.S_init.cols()
                << ", expected " << r << "x" << r;
            throw std::invalid_argument(msg.str());
        }
        if (setup_.mode == Mode::synchronization &&
            (spec.Q_init.rows() != q || spec.Q_init.cols() != r)) {
            std::ostringstream msg;
            msg << "Q_init is " << spec.Q_init.rows() << "x" << spec.Q_init.cols()
                << ", expected " << q << "x" << r;
            throw std::invalid_argument(msg.str());
        }
    }

    void build_layout() {
        const int r = static_cast<int>(setup_.S_reference.rows());
        layout_.r = r;
        int cursor = 0;
        if (setup_.mode == Mode::regulation) {
            layout_.w0 = 0;
            cursor = r;
        }
        for (const AgentSpec& spec : setup_.agents) {
            AgentLayout L;
            L.nx = spec.model.n();
            L.nxi = spec.model.n() + k_ * spec.model.q();
            L.nbeta = roots_.half;
            L.nQ = setup_.mode == Mode::synchronization ? spec.model.q() * r : 0;
            L.x = cursor;
            cursor += L.nx;
            L.xi = cursor;
            cursor += L.nxi;
            L.w = cursor;
            cursor += r;
            L.S = cursor;
            cursor += r * r;
            L.beta = cursor;
            cursor += L.nbeta;
            L.Q = cursor;
            cursor += L.nQ;
            layout_.agents.push_back(L);
        }
        layout_.total = cursor;
    }

    void build_agents() {
        const int r = layout_.r;
        s_reference_vec_ =
            Eigen::Map<const Vec>(setup_.S_reference.data(), r * r);
        for (size_t i = 0; i < setup_.agents.size(); ++i) {
            const AgentSpec& spec = setup_.agents[i];
            try {
                geometry_.push_back(internal_model::make_geometry(
                    exo_modes_, plant::transmission_zeros(spec.model),
                    setup_.options.rho_coefficient));
            } catch (const std::runtime_error& ex) {
                throw std::runtime_error("agent " + std::to_string(i + 1) + ": " +
                                         ex.what());
            }
            caches_.emplace_back(setup_.options.gain_tolerance);
            A_.push_back(spec.model.A());
            B_.push_back(spec.model.B());
            C_.push_back(spec.model.C());
            D_.push_back(spec.model.D());
            P_.push_back(spec.model.P());
            Qm_.push_back(spec.model.Q());
            K_.emplace_back();
            E_.emplace_back();
            F_.emplace_back();
            u_buf_.emplace_back(Vec::Zero(spec.model.m()));
            e_buf_.emplace_back(Vec::Zero(spec.model.q()));
            peers_.emplace_back();
            exo_weight_.push_back(0.0);
        }
    }

    void load_initial_state() {
        const int r = layout_.r;
        state_ = Vec::Zero(layout_.total);
        if (setup_.mode == Mode::regulation)
            state_.segment(layout_.w0, r) = setup_.w0_init;
        for (size_t i = 0; i < setup_.agents.size(); ++i) {
            const AgentSpec& spec = setup_.agents[i];
            const AgentLayout& L = layout_.agents[i];
            state_.segment(L.x, L.nx) = spec.x_init;
            state_.segment(L.xi, L.nxi) = spec.xi_init;
            state_.segment(L.w, r) = spec.w_init;
            state_.segment(L.S, r * r) =
                Eigen::Map<const Vec>(spec.S_init.data(), r * r);
            state_.segment(L.beta, L.nbeta) = spec.beta_init;
            if (L.nQ > 0)
                state_.segment(L.Q, L.nQ) =
                    Eigen::Map<const Vec>(spec.Q_init.data(), L.nQ);
        }
        if (!state_.allFinite())
            throw std::invalid_argument("Simulator: non-finite initial state");
    }

    long aligned_step(double t, const char* what) const {
        const double h = setup_.options.h;
        const long s = std::lround(t / h);
        if (std::abs(static_cast<double>(s) * h - t) > 1e-9 * std::max(1.0, std::abs(t))) {
            std::ostringstream msg;
            msg << "Simulator: " << what << " " << t
                << " is not an integer multiple of the step size " << h;
            throw std::invalid_argument(msg.str());
        }
        return s;
    }

    void load_interval() {
        const double mid = time() + 0.5 * setup_.options.h;
        const Mat& a = graph_.adjacency_at(mid);
        const int off = setup_.mode == Mode::regulation ? 1 : 0;
        for (size_t i = 0; i < setup_.agents.size(); ++i) {
            peers_[i].clear();
            const int row = static_cast<int>(i) + off;
            for (size_t j = 0; j < setup_.agents.size(); ++j) {
                const double weight = a(row, static_cast<int>(j) + off);
                if (weight > 0.0 && i != j)
                    peers_[i].emplace_back(static_cast<int>(j), weight);
            }
            if (setup_.mode == Mode::regulation) exo_weight_[i] = a(row, 0);
        }
        const double nxt = graph_.next_switch_after(mid);
        pending_switch_step_ = std::isfinite(nxt)
                                   ? aligned_step(nxt, "switch instant")
                                   : std::numeric_limits<long>::max();
    }

    void refresh_gains() {
        for (size_t i = 0; i < setup_.agents.size(); ++i) {
            const AgentLayout& L = layout_.agents[i];
            const Vec beta = state_.segment(L.beta, L.nbeta);
            const Vec alpha = roots_.alphas(beta, geometry_[i], false);
            const CVec lambda = roots_.expand(beta, alpha);
            bool renewed = false;
            try {
                renewed = caches_[i].refresh(
                    setup_.agents[i].model, lambda, setup_.agents[i].observer_poles,
                    setup_.agents[i].augmented_poles, setup_.options.synthesis);
            } catch (const std::exception& ex) {
                std::ostringstream msg;
                msg << "agent " << i + 1 << " gain synthesis failed at t = "
                    << time() << ": " << ex.what();
                throw std::runtime_error(msg.str());
            }
            if (renewed || K_[i].size() == 0) {
                const synthesis::CompensatorGains& g = caches_[i].gains();
                K_[i] = g.K();
                E_[i] = g.E;
                F_[i] = g.F;
            }
        }
    }

    void guard_state() {
        const double guard = setup_.options.divergence_guard;
        if (state_.allFinite() && state_.cwiseAbs().maxCoeff() <= guard) return;
        for (Eigen::Index idx = 0; idx < state_.size(); ++idx) {
            const double v = state_[idx];
            if (std::isfinite(v) && std::abs(v) <= guard) continue;
            std::ostringstream msg;
            msg << "state diverged at t = " << time() << ": "
                << layout_.describe(static_cast<int>(idx)) << " = " << v
                << " (guard " << guard << ")";
            throw std::runtime_error(msg.str());
        }
    }

    std::vector<const char*> agent_series_names() const {
        if (setup_.mode == Mode::regulation)
            return {"K", "alpha", "beta", "e", "margin", "w", "werr", "x", "xi", "z"};
        return {"K", "Qw", "alpha", "beta", "e", "margin", "w", "x", "xi", "y"};
    }

    void record_sample(Trajectory& traj, TailAccumulator& acc) {
        const int r = layout_.r;
        const double t = time();
        const bool in_tail = t >= acc.tail_start - 1e-12;
        traj.times.push_back(t);

        const Vec w0 = setup_.mode == Mode::regulation
                           ? Vec(state_.segment(layout_.w0, r))
                           : Vec();
        if (setup_.mode == Mode::regulation)
            traj.global_series["w0"].push_back(w0);

        double beta_err = 0.0;
        std::vector<Vec> outputs;  // y (sync) per agent, for the pairwise gap
        if (setup_.mode == Mode::synchronization)
            outputs.reserve(setup_.agents.size());

        for (size_t i = 0; i < setup_.agents.size(); ++i) {
            const AgentLayout& L = layout_.agents[i];
            const Vec x = state_.segment(L.x, L.nx);
            const Vec xi = state_.segment(L.xi, L.nxi);
            const Vec wi = state_.segment(L.w, r);
            const Vec beta = state_.segment(L.beta, L.nbeta);
            const Eigen::Map<const Mat> Si(state_.data() + L.S, r, r);
            const Vec u = K_[i] * xi;
            const Vec alpha = roots_.alphas(beta, geometry_[i], false);
            const synthesis::ClosedLoopMonitor mon =
                synthesis::assemble_closed_loop(setup_.agents[i].model,
                                                caches_[i].gains());

            Vec e;
            auto push = [&](const char* name, Vec v) {
                traj.per_agent[name][i].push_back(std::move(v));
            };
            push("K", Eigen::Map<const Vec>(K_[i].data(), K_[i].size()));
            push("alpha", alpha);
            push("beta", beta);
            push("margin", (Vec(1) << mon.margin).finished());
            push("w", wi);
            push("x", x);
            push("xi", xi);
            if (setup_.mode == Mode::regulation) {
                const Vec z = C_[i] * x + D_[i] * u + Qm_[i] * w0;
                e = C_[i] * x + D_[i] * u + Qm_[i] * wi;
                const Vec werr = wi - w0;
                if (in_tail) {
                    acc.regulation_error =
                        std::max(acc.regulation_error, z.cwiseAbs().maxCoeff());
                    acc.generator_error =
                        std::max(acc.generator_error, werr.cwiseAbs().maxCoeff());
                }
                push("z", z);
                push("werr", werr);
            } else {
                const Eigen::Map<const Mat> Qi(state_.data() + L.Q, L.nQ / r, r);
                const Vec y = C_[i] * x + D_[i] * u;
                const Vec Qw = Qi * wi;
                e = y + Qw;
                outputs.push_back(y);
                push("y", y);
                push("Qw", Qw);
            }
            push("e", e);

            const double agent_beta_err =
                (beta - beta_target_).cwiseAbs().maxCoeff();
            beta_err = std::max(beta_err, agent_beta_err);
            acc.margin_max = std::max(acc.margin_max, mon.margin);
            if (in_tail) {
                acc.error_feedback =
                    std::max(acc.error_feedback, e.cwiseAbs().maxCoeff());
                acc.s_error = std::max(
                    acc.s_error,
                    (Si - setup_.S_reference).cwiseAbs().maxCoeff());
                acc.beta_error = std::max(acc.beta_error, agent_beta_err);
            }
        }

        if (setup_.mode == Mode::synchronization && in_tail) {
            for (size_t i = 0; i < setup_.agents.size(); ++i) {
                const AgentLayout& Li = layout_.agents[i];
                for (size_t j = i + 1; j < setup_.agents.size(); ++j) {
                    const AgentLayout& Lj = layout_.agents[j];
                    acc.output_gap = std::max(
                        acc.output_gap,
                        (outputs[i] - outputs[j]).cwiseAbs().maxCoeff());
                    acc.generator_error = std::max(
                        acc.generator_error,
                        (state_.segment(Li.w, r) - state_.segment(Lj.w, r))
                            .cwiseAbs()
                            .maxCoeff());
                }
            }
        }
        acc.beta_by_sample.push_back(beta_err);
    }

    static double settle_time(const std::vector<double>& times,
                              const std::vector<double>& beta_by_sample,
                              double tol) {
        if (times.empty()) return -1.0;
        size_t last_bad = times.size();
        for (size_t s = times.size(); s-- > 0;)
            if (beta_by_sample[s] > tol) {
                last_bad = s;
                break;
            }
        if (last_bad == times.size()) return times.front();
        if (last_bad + 1 >= times.size()) return -1.0;
        return times[last_bad + 1];
    }

    void check_agent(int agent) const {
        if (agent < 0 || agent >= agent_count()) {
            std::ostringstream msg;
            msg << "Simulator: agent index " << agent << " out of range [0, "
                << agent_count() << ")";
            throw std::out_of_range(msg.str());
        }
    }

    graph::SwitchingDigraph graph_;
    NetworkSetup setup_;
    StateLayout layout_;
    internal_model::RootLayout roots_;
    CVec exo_modes_;
    Vec beta_target_;
    Vec s_reference_vec_;
    int k_ = 0;

    std::vector<internal_model::AvoidanceGeometry> geometry_;
    std::vector<synthesis::GainCache> caches_;
    std::vector<Mat> A_, B_, C_, D_, P_, Qm_;
    std::vector<Mat> K_, E_, F_;
    mutable std::vector<Vec> u_buf_, e_buf_;
    std::vector<std::vector<std::pair<int, double>>> peers_;
    std::vector<double> exo_weight_;

    Vec state_;
    Rk4Workspace ws_;
    long step_index_ = 0;
    long steps_total_ = 0;
    long prepared_step_ = -1;
    long pending_switch_step_ = 0;
};

inline RunResult run(const graph::SwitchingDigraph& g, const NetworkSetup& setup) {
    return Simulator(g, setup).run();
}

/// Interval during which one consensus root of one agent detoured off the
/// axis. Agents are 1-based to match the CSV export.
struct ActivationEvent {
    int agent = 0;
    int root = 0;
    double t_begin = 0.0;
    double t_end = 0.0;
};

struct ActivationTrace {
    std::vector<ActivationEvent> events;
    long mismatches = 0;  // recorded detour disagrees with the recomputed rule
};

/// Replays the recorded root estimates through the detour rule and checks
/// the recorded detours against it: a detour must be active exactly when
/// the estimate sits closer than rho to a blocked axis point.
inline ActivationTrace alpha_activation_trace(
    const Trajectory& traj,
    const std::vector<internal_model::AvoidanceGeometry>& geometry) {
    const auto beta_it = traj.per_agent.find("beta");
    const auto alpha_it = traj.per_agent.find("alpha");
    if (beta_it == traj.per_agent.end() || alpha_it == traj.per_agent.end())
        throw std::invalid_argument(
            "alpha_activation_trace: trajectory lacks beta/alpha series");
    if (static_cast<int>(geometry.size()) != traj.agent_count()) {
        std::ostringstream msg;
        msg << "alpha_activation_trace: " << geometry.size()
            << " geometries for " << traj.agent_count() << " agents";
        throw std::invalid_argument(msg.str());
    }

    ActivationTrace trace;
    const size_t samples = traj.times.size();
    for (size_t a = 0; a < geometry.size(); ++a) {
        const auto& beta = beta_it->second[a];
        const auto& alpha = alpha_it->second[a];
        if (beta.size() != samples || alpha.size() != samples)
            throw std::invalid_argument(
                "alpha_activation_trace: series length mismatch");
        const int half = samples == 0 ? 0 : static_cast<int>(beta.front().size());
        const int n_roots = samples == 0 ? 0 : static_cast<int>(alpha.front().size());
        for (int d = 0; d < n_roots; ++d) {
            bool open = false;
            ActivationEvent ev;
            for (size_t s = 0; s < samples; ++s) {
                const double b = d < half ? beta[s][d] : 0.0;
                const double gamma =
                    internal_model::gamma_distance(b, geometry[a].imaginary_zeros);
                const bool predicted = gamma < geometry[a].rho;
                const bool recorded = alpha[s][d] > 0.0;
                if (recorded != predicted) ++trace.mismatches;
                if (recorded && !open) {
                    open = true;
                    ev = ActivationEvent{static_cast<int>(a) + 1, d, traj.times[s],
                                         traj.times[s]};
                } else if (recorded) {
                    ev.t_end = traj.times[s];
                }
                if (!recorded && open) {
                    open = false;
                    trace.events.push_back(ev);
                }
            }
            if (open) trace.events.push_back(ev);
        }
    }
    return trace;
}

} // namespace regnet::engine
