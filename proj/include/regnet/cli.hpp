#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include "regnet/builtin_scenarios.hpp"
#include "regnet/engine.hpp"
#include "regnet/oracle.hpp"
#include "regnet/scenario.hpp"

namespace regnet::cli {

enum class LogLevel { quiet = 0, info = 1, debug = 2 };

inline LogLevel log_level() {
    const char* env = std::getenv("REGNET_LOG");
    if (!env) return LogLevel::info;
    const std::string v(env);
    if (v == "quiet") return LogLevel::quiet;
    if (v == "debug") return LogLevel::debug;
    return LogLevel::info;
}

/// Bundled names win; anything else is read as a file path.
inline scenario::ScenarioConfig resolve_scenario(const std::string& ref) {
    if (scenario::is_builtin(ref)) return scenario::builtin(ref);
    return scenario::load_scenario_file(ref);
}

namespace detail {

inline std::string format_complex(Complex z) {
    std::ostringstream os;
    if (std::abs(z.imag()) < 1e-12) {
        os << z.real();
    } else if (std::abs(z.real()) < 1e-12) {
        os << z.imag() << 'j';
    } else {
        os << z.real() << (z.imag() >= 0 ? "+" : "-") << std::abs(z.imag()) << 'j';
    }
    return os.str();
}

inline std::string format_zero_set(const CVec& zeros) {
    if (zeros.size() == 0) return "none";
    std::ostringstream os;
    for (Eigen::Index d = 0; d < zeros.size(); ++d) {
        if (d) os << ", ";
        os << format_complex(zeros[d]);
    }
    return os.str();
}

inline engine::Metrics baseline_metrics(const oracle::BaselineResult& res,
                                        const scenario::ScenarioConfig& cfg) {
    engine::Metrics m;
    m.h = cfg.integrator.h;
    m.horizon = cfg.integrator.horizon;
    m.steps = res.steps;
    m.samples = static_cast<long>(res.trajectory.times.size());
    m.agents = static_cast<int>(cfg.agents.size());
    m.tail_fraction = cfg.integrator.tail_fraction;
    m.tail_start = res.tail_start;
    m.tail_max_regulation_error = res.tail_max_regulation_error;
    m.tail_max_generator_error = res.tail_max_generator_error;
    // this controller has no consensus roots to settle
    m.lambda_convergence_time = std::numeric_limits<double>::quiet_NaN();
    return m;
}

inline bool write_text_file(const std::filesystem::path& path, const std::string& text,
                            std::ostream& err) {
    std::ofstream f(path);
    f << text;
    f.flush();
    if (!f) {
        err << "cannot write " << path.string() << '\n';
        return false;
    }
    return true;
}

} // namespace detail

inline int cmd_validate(const std::string& ref, bool allow_violations,
                        std::ostream& out, std::ostream& err) {
    scenario::ScenarioConfig cfg;
    try {
        cfg = resolve_scenario(ref);
    } catch (const std::exception& ex) {
        err << "validate: " << ex.what() << '\n';
        return 2;
    }
    scenario::ValidationReport rep;
    try {
        rep = scenario::validate_scenario(cfg);
    } catch (const std::exception& ex) {
        err << "validate: " << ex.what() << '\n';
        return 2;
    }
    if (log_level() >= LogLevel::info)
        out << "scenario '" << cfg.name << "': " << cfg.agents.size() << " agents, "
            << engine::mode_name(cfg.mode) << " mode\n";
    scenario::write_report(rep, out);
    if (rep.hard_ok()) return 0;
    return allow_violations ? 0 : 1;
}

inline int cmd_run(const std::string& ref, const std::string& out_dir,
                   std::optional<std::uint64_t> seed_override, bool allow_violations,
                   std::ostream& out, std::ostream& err) {
    const LogLevel lvl = log_level();
    scenario::ScenarioConfig cfg;
    try {
        cfg = resolve_scenario(ref);
    } catch (const std::exception& ex) {
        err << "run: " << ex.what() << '\n';
        return 2;
    }

    try {
        const scenario::ValidationReport rep = scenario::validate_scenario(cfg);
        if (!rep.hard_ok()) {
            scenario::write_report(rep, err);
            if (!allow_violations) {
                err << "run: structural checks failed; pass --allow-violations to "
                       "run anyway\n";
                return 2;
            }
        }
    } catch (const std::exception& ex) {
        err << "run: " << ex.what() << '\n';
        return 2;
    }

    if (lvl >= LogLevel::info)
        out << "running '" << cfg.name << "': " << cfg.agents.size() << " agents, "
            << engine::mode_name(cfg.mode) << " mode, horizon "
            << cfg.integrator.horizon << " s\n";

    engine::Trajectory trajectory;
    engine::Metrics metrics;
    try {
        if (cfg.controller == scenario::Controller::proposed) {
            engine::RunResult res = engine::run(scenario::build_graph(cfg),
                                                scenario::build_engine_setup(cfg, seed_override));
            trajectory = std::move(res.trajectory);
            metrics = res.metrics;
        } else {
            oracle::BaselineResult res = oracle::run_baseline(
                scenario::build_graph(cfg), scenario::build_baseline_setup(cfg, seed_override));
            metrics = detail::baseline_metrics(res, cfg);
            trajectory = std::move(res.trajectory);
        }
    } catch (const std::exception& ex) {
        err << "run: " << ex.what() << '\n';
        return 2;
    }

    const std::filesystem::path dir(out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        err << "run: cannot create " << dir.string() << ": " << ec.message() << '\n';
        return 2;
    }
    {
        std::ofstream csv(dir / "trajectory.csv");
        engine::write_csv(trajectory, csv);
        csv.flush();
        if (!csv) {
            err << "run: cannot write " << (dir / "trajectory.csv").string() << '\n';
            return 2;
        }
    }
    {
        std::ofstream mtx(dir / "metrics.txt");
        engine::write_metrics(metrics, mtx);
        mtx.flush();
        if (!mtx) {
            err << "run: cannot write " << (dir / "metrics.txt").string() << '\n';
            return 2;
        }
    }
    if (lvl >= LogLevel::info)
        out << "wrote " << (dir / "trajectory.csv").string() << " ("
            << trajectory.times.size() << " samples) and "
            << (dir / "metrics.txt").string() << '\n';

    bool all_met = true;
    const auto rows = metrics.as_rows();
    for (const auto& [key, bound] : cfg.thresholds) {
        double value = std::numeric_limits<double>::quiet_NaN();
        bool found = false;
        for (const auto& [rk, rv] : rows)
            if (rk == key) {
                value = rv;
                found = true;
                break;
            }
        const bool met = found && value <= bound;
        all_met = all_met && met;
        out << (met ? "   ok  " : " FAIL  ") << key << ' ';
        if (found)
            out << value;
        else
            out << "(not produced by this run)";
        out << " <= " << bound << '\n';
    }
    if (!cfg.thresholds.empty())
        out << (all_met ? "all thresholds met\n" : "thresholds missed\n");
    return all_met ? 0 : 1;
}

inline int cmd_zeros(const std::string& ref, std::ostream& out, std::ostream& err) {
    scenario::ScenarioConfig cfg;
    try {
        cfg = resolve_scenario(ref);
    } catch (const std::exception& ex) {
        err << "zeros: " << ex.what() << '\n';
        return 2;
    }
    scenario::ReferenceShape shape;
    try {
        shape = scenario::reference_shape(cfg.S_reference);
    } catch (const std::exception& ex) {
        err << "zeros: reference dynamics: " << ex.what() << '\n';
        return 2;
    }
    out << "reference modes: " << detail::format_zero_set(shape.modes) << '\n';
    for (size_t i = 0; i < cfg.agents.size(); ++i) {
        const plant::AgentModel& model = cfg.agents[i].model;
        plant::ZeroOptions zopts;
        if (model.m() > model.q())
            for (Eigen::Index d = 0; d < shape.modes.size(); ++d)
                zopts.sweep_candidates.push_back(shape.modes[d]);
        plant::ZeroSet zs;
        try {
            zs = plant::transmission_zeros(model, true, zopts);
        } catch (const std::exception& ex) {
            err << "zeros: agent " << i + 1 << ": " << ex.what() << '\n';
            return 2;
        }
        out << "agent " << i + 1 << ": unstable zeros {"
            << detail::format_zero_set(zs.open_rhp()) << "}; imaginary zeros {"
            << detail::format_zero_set(zs.imaginary) << "}; ";
        try {
            out << "detour radius "
                << internal_model::semicircle_radius(shape.modes, zs,
                                                     cfg.rho_coefficient)
                << '\n';
        } catch (const std::exception& ex) {
            out << "no detour radius: " << ex.what() << '\n';
        }
    }
    return 0;
}

inline int cmd_gen_large(int agents, const std::string& out_path, std::ostream& out,
                         std::ostream& err) {
    if (agents < 1) {
        err << "gen-large: --agents must be positive\n";
        return 2;
    }
    const std::string text =
        scenario::serialize_scenario(scenario::large_regulation_scenario(agents));
    if (out_path.empty()) {
        out << text;
        return 0;
    }
    if (!detail::write_text_file(out_path, text, err)) return 2;
    if (log_level() >= LogLevel::info)
        out << "wrote " << out_path << " (" << agents << " agents)\n";
    return 0;
}

} // namespace regnet::cli
