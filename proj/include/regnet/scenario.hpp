#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "regnet/engine.hpp"
#include "regnet/graph.hpp"
#include "regnet/internal_model.hpp"
#include "regnet/oracle.hpp"
#include "regnet/plant.hpp"
#include "regnet/types.hpp"

namespace regnet::scenario {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

/// One initial-value slice of a scenario: an explicit literal, or a seeded
/// entrywise uniform draw realized when the run is built.
struct InitSpec {
    enum class Kind { vector_literal, matrix_literal, uniform };
    Kind kind = Kind::vector_literal;
    Mat value;              // literal payload; vectors as a single column
    double lo = 0.0, hi = 0.0;

    static InitSpec vector(const Vec& v) {
        InitSpec s;
        s.kind = Kind::vector_literal;
        s.value = v;
        return s;
    }
    static InitSpec matrix(const Mat& m) {
        InitSpec s;
        s.kind = Kind::matrix_literal;
        s.value = m;
        return s;
    }
    static InitSpec uniform(double lo, double hi) {
        InitSpec s;
        s.kind = Kind::uniform;
        s.lo = lo;
        s.hi = hi;
        return s;
    }

    bool randomized() const { return kind == Kind::uniform; }

    Vec realize_vector(int size, std::mt19937_64& rng, const std::string& what) const {
        if (kind == Kind::matrix_literal)
            throw std::invalid_argument(what + ": expected a vector, got a matrix literal");
        if (kind == Kind::uniform) {
            std::uniform_real_distribution<double> dist(lo, hi);
            Vec v(size);
            for (int d = 0; d < size; ++d) v[d] = dist(rng);
            return v;
        }
        if (value.rows() != size) {
            std::ostringstream msg;
            msg << what << ": expected " << size << " entries, got " << value.rows();
            throw std::invalid_argument(msg.str());
        }
        return value.col(0);
    }

    Mat realize_matrix(int rows, int cols, std::mt19937_64& rng,
                       const std::string& what) const {
        if (kind == Kind::vector_literal)
            throw std::invalid_argument(what + ": expected a matrix, got a vector literal");
        if (kind == Kind::uniform) {
            std::uniform_real_distribution<double> dist(lo, hi);
            Mat m(rows, cols);
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j) m(i, j) = dist(rng);
            return m;
        }
        if (value.rows() != rows || value.cols() != cols) {
            std::ostringstream msg;
            msg << what << ": expected " << rows << "x" << cols << ", got "
                << value.rows() << "x" << value.cols();
            throw std::invalid_argument(msg.str());
        }
        return value;
    }
};

enum class Controller { proposed, baseline };

struct AgentConfig {
    plant::AgentModel model;
    CVec observer_poles;    // proposed controller
    CVec augmented_poles;   // proposed controller
    CVec feedback_poles;    // baseline controller
    InitSpec x_init, xi_init, w_init, S_init, beta_init, Q_init;
};

struct GraphConfig {
    double epsilon = 0.5;
    bool periodic = false;
    std::vector<Mat> snapshots;
    std::vector<graph::ScheduleEntry> schedule;
};

struct IntegratorConfig {
    double h = 1e-3;
    double horizon = 10.0;
    int decimation = 100;
    double tail_fraction = 0.1;
    double gain_tolerance = 1e-4;
    double divergence_guard = 1e9;
};

/// Full description of one run: plants, network, reference, controller
/// family, integration grid, and the thresholds its metrics must meet.
struct ScenarioConfig {
    std::string name;
    engine::Mode mode = engine::Mode::regulation;
    Controller controller = Controller::proposed;
    std::optional<std::uint64_t> seed;
    double rho_coefficient = 0.5;
    GraphConfig graph;
    Mat S_reference;
    InitSpec w0_init;                    // regulation only
    std::vector<int> reference_agents;   // synchronization only, 0-based
    IntegratorConfig integrator;
    std::map<std::string, double> thresholds;
    std::vector<AgentConfig> agents;

    bool any_randomized() const {
        if (mode == engine::Mode::regulation && w0_init.randomized()) return true;
        for (const AgentConfig& a : agents)
            if (a.x_init.randomized() || a.xi_init.randomized() ||
                a.w_init.randomized() || a.S_init.randomized() ||
                a.beta_init.randomized() || a.Q_init.randomized())
                return true;
        return false;
    }
};

namespace detail {

inline const char* const kMetricNames[] = {
    "tail_max_regulation_error", "tail_max_generator_error", "tail_max_s_error",
    "tail_max_pairwise_output_gap", "tail_max_error_feedback",
    "tail_max_beta_error", "lambda_convergence_time", "margin_max",
    "synthesis_total"};

inline std::invalid_argument fail(const std::string& where, const std::string& what) {
    return std::invalid_argument(where + ": " + what);
}

inline void reject_unknown(const Json& obj, std::initializer_list<const char*> allowed,
                           const std::string& where) {
    for (const auto& [key, unused] : obj.items()) {
        (void)unused;
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) {
                return key == a;
            }) == allowed.end())
            throw fail(where, "unrecognized field '" + key + "'");
    }
}

inline const Json& require(const Json& obj, const char* key, const std::string& where) {
    const auto it = obj.find(key);
    if (it == obj.end()) throw fail(where, std::string("missing field '") + key + "'");
    return *it;
}

inline double number_from(const Json& j, const std::string& where) {
    if (!j.is_number()) throw fail(where, "expected a number");
    return j.get<double>();
}

inline Vec vector_from(const Json& j, const std::string& where) {
    if (!j.is_array()) throw fail(where, "expected an array of numbers");
    Vec v(static_cast<Eigen::Index>(j.size()));
    Eigen::Index d = 0;
    for (const Json& entry : j) v[d++] = number_from(entry, where);
    return v;
}

inline Mat matrix_from(const Json& j, const std::string& where) {
    if (!j.is_array() || j.empty() || !j.front().is_array())
        throw fail(where, "expected an array of rows");
    const Eigen::Index cols = static_cast<Eigen::Index>(j.front().size());
    Mat m(static_cast<Eigen::Index>(j.size()), cols);
    Eigen::Index i = 0;
    for (const Json& row : j) {
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            throw fail(where, "rows have inconsistent lengths");
        Eigen::Index k = 0;
        for (const Json& entry : row) m(i, k++) = number_from(entry, where);
        ++i;
    }
    return m;
}

/// Pole lists mix plain numbers (real poles) and [re, im] pairs.
inline CVec poles_from(const Json& j, const std::string& where) {
    if (!j.is_array()) throw fail(where, "expected an array of poles");
    CVec p(static_cast<Eigen::Index>(j.size()));
    Eigen::Index d = 0;
    for (const Json& entry : j) {
        if (entry.is_number()) {
            p[d++] = Complex{entry.get<double>(), 0.0};
        } else if (entry.is_array() && entry.size() == 2) {
            p[d++] = Complex{number_from(entry[0], where), number_from(entry[1], where)};
        } else {
            throw fail(where, "each pole is a number or a [re, im] pair");
        }
    }
    return p;
}

inline InitSpec init_from(const Json& j, const std::string& where) {
    if (j.is_object()) {
        reject_unknown(j, {"uniform"}, where);
        const Json& range = require(j, "uniform", where);
        if (!range.is_array() || range.size() != 2)
            throw fail(where, "'uniform' takes a [lo, hi] pair");
        const double lo = number_from(range[0], where);
        const double hi = number_from(range[1], where);
        if (!(lo < hi)) throw fail(where, "uniform range needs lo < hi");
        return InitSpec::uniform(lo, hi);
    }
    if (j.is_array() && !j.empty() && j.front().is_array())
        return InitSpec::matrix(matrix_from(j, where));
    if (j.is_array()) return InitSpec::vector(vector_from(j, where));
    throw fail(where, "expected a vector, a matrix, or {\"uniform\": [lo, hi]}");
}

inline Json poles_to_json(const CVec& p) {
    Json out = Json::array();
    for (Eigen::Index d = 0; d < p.size(); ++d) {
        if (p[d].imag() == 0.0)
            out.push_back(p[d].real());
        else
            out.push_back(Json::array({p[d].real(), p[d].imag()}));
    }
    return out;
}

inline Json matrix_to_json(const Mat& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

inline Json vector_to_json(const Mat& column) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < column.rows(); ++i) out.push_back(column(i, 0));
    return out;
}

inline Json init_to_json(const InitSpec& s) {
    switch (s.kind) {
        case InitSpec::Kind::uniform:
            return Json{{"uniform", Json::array({s.lo, s.hi})}};
        case InitSpec::Kind::matrix_literal:
            return matrix_to_json(s.value);
        case InitSpec::Kind::vector_literal:
        default:
            return vector_to_json(s.value);
    }
}

} // namespace detail

/// Degree of the reference's minimal polynomial and the derived sizes every
/// consistency check needs.
struct ReferenceShape {
    int r = 0;       // generator dimension
    int k = 0;       // minimal polynomial degree
    int half = 0;    // independent consensus roots
    CVec modes;      // canonical root list
    internal_model::RootLayout layout;
};

inline ReferenceShape reference_shape(const Mat& S_reference) {
    ReferenceShape shape;
    shape.r = static_cast<int>(S_reference.rows());
    shape.modes = internal_model::minimal_polynomial_roots(S_reference);
    shape.k = static_cast<int>(shape.modes.size());
    shape.layout = internal_model::RootLayout::from_degree(shape.k);
    shape.half = shape.layout.half;
    return shape;
}

inline ScenarioConfig parse_scenario(const std::string& text) {
    const Json root = Json::parse(text);
    if (!root.is_object()) throw detail::fail("scenario", "top level must be an object");
    detail::reject_unknown(root,
                           {"name", "mode", "controller", "seed", "rho_coefficient",
                            "graph", "reference", "integrator", "thresholds", "agents"},
                           "scenario");

    ScenarioConfig cfg;
    cfg.name = detail::require(root, "name", "scenario").get<std::string>();
    if (cfg.name.empty()) throw detail::fail("name", "must not be empty");

    const std::string mode = detail::require(root, "mode", "scenario").get<std::string>();
    if (mode == "regulation")
        cfg.mode = engine::Mode::regulation;
    else if (mode == "synchronization")
        cfg.mode = engine::Mode::synchronization;
    else
        throw detail::fail("mode", "expected 'regulation' or 'synchronization'");

    if (root.contains("controller")) {
        const std::string ctl = root["controller"].get<std::string>();
        if (ctl == "proposed")
            cfg.controller = Controller::proposed;
        else if (ctl == "baseline")
            cfg.controller = Controller::baseline;
        else
            throw detail::fail("controller", "expected 'proposed' or 'baseline'");
    }
    if (cfg.controller == Controller::baseline && cfg.mode != engine::Mode::regulation)
        throw detail::fail("controller", "the baseline controller is regulation-only");

    if (root.contains("seed")) {
        if (!root["seed"].is_number_unsigned())
            throw detail::fail("seed", "expected a non-negative integer");
        cfg.seed = root["seed"].get<std::uint64_t>();
    }
    if (root.contains("rho_coefficient")) {
        cfg.rho_coefficient = detail::number_from(root["rho_coefficient"], "rho_coefficient");
        if (!(cfg.rho_coefficient > 0.0) || !(cfg.rho_coefficient < 1.0))
            throw detail::fail("rho_coefficient", "must lie in (0, 1)");
    }

    {
        const Json& g = detail::require(root, "graph", "scenario");
        detail::reject_unknown(g, {"epsilon", "periodic", "snapshots", "schedule"},
                               "graph");
        cfg.graph.epsilon = detail::number_from(detail::require(g, "epsilon", "graph"),
                                                "graph.epsilon");
        cfg.graph.periodic = detail::require(g, "periodic", "graph").get<bool>();
        const Json& snaps = detail::require(g, "snapshots", "graph");
        if (!snaps.is_array() || snaps.empty())
            throw detail::fail("graph.snapshots", "expected a nonempty array");
        for (size_t s = 0; s < snaps.size(); ++s)
            cfg.graph.snapshots.push_back(detail::matrix_from(
                snaps[s], "graph.snapshots[" + std::to_string(s) + "]"));
        const Json& sched = detail::require(g, "schedule", "graph");
        if (!sched.is_array() || sched.empty())
            throw detail::fail("graph.schedule", "expected a nonempty array");
        for (size_t s = 0; s < sched.size(); ++s) {
            const std::string where = "graph.schedule[" + std::to_string(s) + "]";
            const Json& entry = sched[s];
            detail::reject_unknown(entry, {"snapshot", "dwell"}, where);
            graph::ScheduleEntry e;
            e.snapshot = detail::require(entry, "snapshot", where).get<int>();
            e.dwell = detail::number_from(detail::require(entry, "dwell", where), where);
            if (e.snapshot < 0 ||
                e.snapshot >= static_cast<int>(cfg.graph.snapshots.size()))
                throw detail::fail(where, "snapshot index out of range");
            cfg.graph.schedule.push_back(e);
        }
    }

    ReferenceShape shape;
    {
        const Json& ref = detail::require(root, "reference", "scenario");
        cfg.S_reference = detail::matrix_from(detail::require(ref, "S", "reference"),
                                              "reference.S");
        if (cfg.S_reference.rows() != cfg.S_reference.cols())
            throw detail::fail("reference.S", "must be square");
        try {
            shape = reference_shape(cfg.S_reference);
        } catch (const std::exception& ex) {
            throw detail::fail("reference.S", ex.what());
        }
        if (cfg.mode == engine::Mode::regulation) {
            detail::reject_unknown(ref, {"S", "w0_init"}, "reference");
            cfg.w0_init = detail::init_from(detail::require(ref, "w0_init", "reference"),
                                            "reference.w0_init");
            if (cfg.w0_init.kind == InitSpec::Kind::vector_literal &&
                cfg.w0_init.value.rows() != shape.r)
                throw detail::fail("reference.w0_init", "size does not match S");
        } else {
            detail::reject_unknown(ref, {"S", "agents"}, "reference");
            const Json& members = detail::require(ref, "agents", "reference");
            if (!members.is_array() || members.empty())
                throw detail::fail("reference.agents", "expected a nonempty array");
            for (const Json& m : members) {
                if (!m.is_number_integer())
                    throw detail::fail("reference.agents", "expected agent numbers");
                cfg.reference_agents.push_back(m.get<int>() - 1);
            }
            std::sort(cfg.reference_agents.begin(), cfg.reference_agents.end());
            if (std::adjacent_find(cfg.reference_agents.begin(),
                                   cfg.reference_agents.end()) !=
                cfg.reference_agents.end())
                throw detail::fail("reference.agents", "duplicate agent");
        }
    }

    if (root.contains("integrator")) {
        const Json& in = root["integrator"];
        detail::reject_unknown(in,
                               {"h", "horizon", "decimation", "tail_fraction",
                                "gain_tolerance", "divergence_guard"},
                               "integrator");
        IntegratorConfig& ic = cfg.integrator;
        if (in.contains("h")) ic.h = detail::number_from(in["h"], "integrator.h");
        if (in.contains("horizon"))
            ic.horizon = detail::number_from(in["horizon"], "integrator.horizon");
        if (in.contains("decimation")) ic.decimation = in["decimation"].get<int>();
        if (in.contains("tail_fraction"))
            ic.tail_fraction =
                detail::number_from(in["tail_fraction"], "integrator.tail_fraction");
        if (in.contains("gain_tolerance"))
            ic.gain_tolerance =
                detail::number_from(in["gain_tolerance"], "integrator.gain_tolerance");
        if (in.contains("divergence_guard"))
            ic.divergence_guard =
                detail::number_from(in["divergence_guard"], "integrator.divergence_guard");
        if (!(ic.h > 0.0) || !(ic.horizon > 0.0) || ic.decimation < 1)
            throw detail::fail("integrator", "h, horizon, and decimation must be positive");
    }

    if (root.contains("thresholds")) {
        for (const auto& [key, value] : root["thresholds"].items()) {
            const bool known =
                std::find_if(std::begin(detail::kMetricNames),
                             std::end(detail::kMetricNames), [&](const char* m) {
                                 return key == m;
                             }) != std::end(detail::kMetricNames);
            if (!known)
                throw detail::fail("thresholds", "'" + key + "' is not a metric");
            cfg.thresholds[key] = detail::number_from(value, "thresholds." + key);
        }
    }

    const Json& agents = detail::require(root, "agents", "scenario");
    if (!agents.is_array() || agents.empty())
        throw detail::fail("agents", "expected a nonempty array");
    const bool baseline = cfg.controller == Controller::baseline;
    const bool sync = cfg.mode == engine::Mode::synchronization;
    for (size_t i = 0; i < agents.size(); ++i) {
        const std::string where = "agents[" + std::to_string(i) + "]";
        const Json& a = agents[i];
        AgentConfig ac;
        if (baseline)
            detail::reject_unknown(a,
                                   {"A", "B", "C", "D", "P", "Q", "dA", "dB", "dC", "dD",
                                    "dP", "dQ", "feedback_poles", "x_init", "w_init"},
                                   where);
        else if (sync)
            detail::reject_unknown(a,
                                   {"A", "B", "C", "D", "P", "Q", "dA", "dB", "dC", "dD",
                                    "dP", "dQ", "observer_poles", "augmented_poles",
                                    "x_init", "xi_init", "w_init", "S_init", "beta_init",
                                    "Q_init"},
                                   where);
        else
            detail::reject_unknown(a,
                                   {"A", "B", "C", "D", "P", "Q", "dA", "dB", "dC", "dD",
                                    "dP", "dQ", "observer_poles", "augmented_poles",
                                    "x_init", "xi_init", "w_init", "S_init",
                                    "beta_init"},
                                   where);

        ac.model.A0 = detail::matrix_from(detail::require(a, "A", where), where + ".A");
        ac.model.B0 = detail::matrix_from(detail::require(a, "B", where), where + ".B");
        ac.model.C0 = detail::matrix_from(detail::require(a, "C", where), where + ".C");
        ac.model.D0 = detail::matrix_from(detail::require(a, "D", where), where + ".D");
        ac.model.P0 = detail::matrix_from(detail::require(a, "P", where), where + ".P");
        ac.model.Q0 = detail::matrix_from(detail::require(a, "Q", where), where + ".Q");
        auto optional_matrix = [&](const char* key, Mat& out) {
            if (a.contains(key))
                out = detail::matrix_from(a[key], where + "." + key);
        };
        optional_matrix("dA", ac.model.dA);
        optional_matrix("dB", ac.model.dB);
        optional_matrix("dC", ac.model.dC);
        optional_matrix("dD", ac.model.dD);
        optional_matrix("dP", ac.model.dP);
        optional_matrix("dQ", ac.model.dQ);
        ac.model.zero_missing_perturbations();
        try {
            ac.model.validate();
        } catch (const std::invalid_argument& ex) {
            throw detail::fail(where, ex.what());
        }
        const int n = ac.model.n();
        if (ac.model.r() != shape.r)
            throw detail::fail(where, "P/Q column count does not match the reference");

        auto init_field = [&](const char* key) {
            return detail::init_from(detail::require(a, key, where), where + "." + key);
        };
        auto check_vec = [&](const InitSpec& s, int size, const char* key) {
            if (s.kind == InitSpec::Kind::vector_literal && s.value.rows() != size) {
                std::ostringstream msg;
                msg << "expected " << size << " entries, got " << s.value.rows();
                throw detail::fail(where + "." + key, msg.str());
            }
            if (s.kind == InitSpec::Kind::matrix_literal)
                throw detail::fail(where + "." + key, "expected a vector");
        };
        auto check_mat = [&](const InitSpec& s, int rows, int cols, const char* key) {
            if (s.kind == InitSpec::Kind::vector_literal)
                throw detail::fail(where + "." + key, "expected a matrix");
            if (s.kind == InitSpec::Kind::matrix_literal &&
                (s.value.rows() != rows || s.value.cols() != cols)) {
                std::ostringstream msg;
                msg << "expected " << rows << "x" << cols << ", got " << s.value.rows()
                    << "x" << s.value.cols();
                throw detail::fail(where + "." + key, msg.str());
            }
        };

        ac.x_init = init_field("x_init");
        check_vec(ac.x_init, n, "x_init");
        if (baseline) {
            ac.feedback_poles =
                detail::poles_from(detail::require(a, "feedback_poles", where),
                                   where + ".feedback_poles");
            if (static_cast<int>(ac.feedback_poles.size()) != n)
                throw detail::fail(where + ".feedback_poles",
                                   "pole count must match the state dimension");
            ac.w_init = init_field("w_init");
            check_vec(ac.w_init, shape.r, "w_init");
        } else {
            ac.observer_poles =
                detail::poles_from(detail::require(a, "observer_poles", where),
                                   where + ".observer_poles");
            if (static_cast<int>(ac.observer_poles.size()) != n)
                throw detail::fail(where + ".observer_poles",
                                   "pole count must match the state dimension");
            ac.augmented_poles =
                detail::poles_from(detail::require(a, "augmented_poles", where),
                                   where + ".augmented_poles");
            const int expected = n + shape.k * ac.model.q();
            if (static_cast<int>(ac.augmented_poles.size()) != expected) {
                std::ostringstream msg;
                msg << "expected " << expected << " poles for the augmented pair, got "
                    << ac.augmented_poles.size();
                throw detail::fail(where + ".augmented_poles", msg.str());
            }
            ac.xi_init = init_field("xi_init");
            check_vec(ac.xi_init, expected, "xi_init");
            ac.w_init = init_field("w_init");
            check_vec(ac.w_init, shape.r, "w_init");
            ac.S_init = init_field("S_init");
            check_mat(ac.S_init, shape.r, shape.r, "S_init");
            ac.beta_init = init_field("beta_init");
            check_vec(ac.beta_init, shape.half, "beta_init");
            if (sync) {
                ac.Q_init = init_field("Q_init");
                check_mat(ac.Q_init, ac.model.q(), shape.r, "Q_init");
            }
        }
        cfg.agents.push_back(std::move(ac));
    }

    const int n_agents = static_cast<int>(cfg.agents.size());
    const int expected_nodes =
        cfg.mode == engine::Mode::regulation ? n_agents + 1 : n_agents;
    for (size_t s = 0; s < cfg.graph.snapshots.size(); ++s) {
        const Mat& snap = cfg.graph.snapshots[s];
        if (snap.rows() != expected_nodes || snap.cols() != expected_nodes) {
            std::ostringstream msg;
            msg << "snapshot " << s << " is " << snap.rows() << "x" << snap.cols()
                << "; " << n_agents << " agents need " << expected_nodes << "x"
                << expected_nodes;
            throw detail::fail("graph.snapshots", msg.str());
        }
    }
    for (int v : cfg.reference_agents)
        if (v < 0 || v >= n_agents)
            throw detail::fail("reference.agents", "agent number out of range");

    if (cfg.any_randomized() && !cfg.seed)
        throw detail::fail("seed",
                           "required because some initial values are randomized");
    return cfg;
}

/// Canonical form: fixed key order, all integrator knobs explicit, poles as
/// numbers when real. parse(serialize(cfg)) reproduces cfg exactly, so two
/// configs are semantically equal iff their serializations match.
inline std::string serialize_scenario(const ScenarioConfig& cfg) {
    auto to_ordered = [](const Json& j) { return OrderedJson(j); };
    OrderedJson root;
    root["name"] = cfg.name;
    root["mode"] =
        cfg.mode == engine::Mode::regulation ? "regulation" : "synchronization";
    root["controller"] =
        cfg.controller == Controller::proposed ? "proposed" : "baseline";
    if (cfg.seed) root["seed"] = *cfg.seed;
    root["rho_coefficient"] = cfg.rho_coefficient;

    OrderedJson g;
    g["epsilon"] = cfg.graph.epsilon;
    g["periodic"] = cfg.graph.periodic;
    OrderedJson snaps = OrderedJson::array();
    for (const Mat& snap : cfg.graph.snapshots)
        snaps.push_back(to_ordered(detail::matrix_to_json(snap)));
    g["snapshots"] = std::move(snaps);
    OrderedJson sched = OrderedJson::array();
    for (const graph::ScheduleEntry& e : cfg.graph.schedule) {
        OrderedJson entry;
        entry["snapshot"] = e.snapshot;
        entry["dwell"] = e.dwell;
        sched.push_back(std::move(entry));
    }
    g["schedule"] = std::move(sched);
    root["graph"] = std::move(g);

    OrderedJson ref;
    ref["S"] = to_ordered(detail::matrix_to_json(cfg.S_reference));
    if (cfg.mode == engine::Mode::regulation) {
        ref["w0_init"] = to_ordered(detail::init_to_json(cfg.w0_init));
    } else {
        OrderedJson members = OrderedJson::array();
        for (int v : cfg.reference_agents) members.push_back(v + 1);
        ref["agents"] = std::move(members);
    }
    root["reference"] = std::move(ref);

    OrderedJson in;
    in["h"] = cfg.integrator.h;
    in["horizon"] = cfg.integrator.horizon;
    in["decimation"] = cfg.integrator.decimation;
    in["tail_fraction"] = cfg.integrator.tail_fraction;
    in["gain_tolerance"] = cfg.integrator.gain_tolerance;
    in["divergence_guard"] = cfg.integrator.divergence_guard;
    root["integrator"] = std::move(in);

    if (!cfg.thresholds.empty()) {
        OrderedJson th;
        for (const auto& [key, value] : cfg.thresholds) th[key] = value;
        root["thresholds"] = std::move(th);
    }

    OrderedJson agents = OrderedJson::array();
    const bool baseline = cfg.controller == Controller::baseline;
    const bool sync = cfg.mode == engine::Mode::synchronization;
    for (const AgentConfig& a : cfg.agents) {
        OrderedJson ja;
        ja["A"] = to_ordered(detail::matrix_to_json(a.model.A0));
        ja["B"] = to_ordered(detail::matrix_to_json(a.model.B0));
        ja["C"] = to_ordered(detail::matrix_to_json(a.model.C0));
        ja["D"] = to_ordered(detail::matrix_to_json(a.model.D0));
        ja["P"] = to_ordered(detail::matrix_to_json(a.model.P0));
        ja["Q"] = to_ordered(detail::matrix_to_json(a.model.Q0));
        auto put_perturbation = [&](const char* key, const Mat& m) {
            if (!m.isZero(0.0)) ja[key] = to_ordered(detail::matrix_to_json(m));
        };
        put_perturbation("dA", a.model.dA);
        put_perturbation("dB", a.model.dB);
        put_perturbation("dC", a.model.dC);
        put_perturbation("dD", a.model.dD);
        put_perturbation("dP", a.model.dP);
        put_perturbation("dQ", a.model.dQ);
        if (baseline) {
            ja["feedback_poles"] = to_ordered(detail::poles_to_json(a.feedback_poles));
            ja["x_init"] = to_ordered(detail::init_to_json(a.x_init));
            ja["w_init"] = to_ordered(detail::init_to_json(a.w_init));
        } else {
            ja["observer_poles"] = to_ordered(detail::poles_to_json(a.observer_poles));
            ja["augmented_poles"] = to_ordered(detail::poles_to_json(a.augmented_poles));
            ja["x_init"] = to_ordered(detail::init_to_json(a.x_init));
            ja["xi_init"] = to_ordered(detail::init_to_json(a.xi_init));
            ja["w_init"] = to_ordered(detail::init_to_json(a.w_init));
            ja["S_init"] = to_ordered(detail::init_to_json(a.S_init));
            ja["beta_init"] = to_ordered(detail::init_to_json(a.beta_init));
            if (sync) ja["Q_init"] = to_ordered(detail::init_to_json(a.Q_init));
        }
        agents.push_back(std::move(ja));
    }
    root["agents"] = std::move(agents);
    return root.dump(2) + "\n";
}

inline ScenarioConfig load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scenario file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_scenario(buf.str());
    } catch (const std::invalid_argument& ex) {
        throw std::invalid_argument(path + ": " + ex.what());
    } catch (const Json::parse_error& ex) {
        throw std::invalid_argument(path + ": " + ex.what());
    }
}

inline graph::SwitchingDigraph build_graph(const ScenarioConfig& cfg) {
    return graph::SwitchingDigraph(cfg.graph.snapshots, cfg.graph.schedule,
                                   cfg.graph.epsilon, cfg.graph.periodic,
                                   cfg.mode == engine::Mode::regulation);
}

/// Realizes every randomized slice with one generator in a fixed order
/// (reference first, then agents in listed order, slices in field order),
/// so a seed pins the whole run.
inline engine::NetworkSetup build_engine_setup(
    const ScenarioConfig& cfg, std::optional<std::uint64_t> seed_override = {}) {
    if (cfg.controller != Controller::proposed)
        throw std::logic_error("build_engine_setup: scenario uses the baseline controller");
    const ReferenceShape shape = reference_shape(cfg.S_reference);
    std::mt19937_64 rng(seed_override ? *seed_override : cfg.seed.value_or(0));

    engine::NetworkSetup setup;
    setup.mode = cfg.mode;
    setup.S_reference = cfg.S_reference;
    setup.reference_nodes = cfg.reference_agents;
    setup.options.h = cfg.integrator.h;
    setup.options.horizon = cfg.integrator.horizon;
    setup.options.decimation = cfg.integrator.decimation;
    setup.options.tail_fraction = cfg.integrator.tail_fraction;
    setup.options.gain_tolerance = cfg.integrator.gain_tolerance;
    setup.options.divergence_guard = cfg.integrator.divergence_guard;
    setup.options.rho_coefficient = cfg.rho_coefficient;

    if (cfg.mode == engine::Mode::regulation)
        setup.w0_init = cfg.w0_init.realize_vector(shape.r, rng, "reference.w0_init");

    for (size_t i = 0; i < cfg.agents.size(); ++i) {
        const AgentConfig& a = cfg.agents[i];
        const std::string where = "agents[" + std::to_string(i) + "]";
        const int xi = a.model.n() + shape.k * a.model.q();
        engine::AgentSpec spec;
        spec.model = a.model;
        spec.observer_poles = a.observer_poles;
        spec.augmented_poles = a.augmented_poles;
        spec.x_init = a.x_init.realize_vector(a.model.n(), rng, where + ".x_init");
        spec.xi_init = a.xi_init.realize_vector(xi, rng, where + ".xi_init");
        spec.w_init = a.w_init.realize_vector(shape.r, rng, where + ".w_init");
        spec.S_init = a.S_init.realize_matrix(shape.r, shape.r, rng, where + ".S_init");
        spec.beta_init = a.beta_init.realize_vector(shape.half, rng, where + ".beta_init");
        if (cfg.mode == engine::Mode::synchronization)
            spec.Q_init = a.Q_init.realize_matrix(a.model.q(), shape.r, rng,
                                                  where + ".Q_init");
        setup.agents.push_back(std::move(spec));
    }
    return setup;
}

inline oracle::BaselineSetup build_baseline_setup(
    const ScenarioConfig& cfg, std::optional<std::uint64_t> seed_override = {}) {
    if (cfg.controller != Controller::baseline)
        throw std::logic_error("build_baseline_setup: scenario uses the proposed controller");
    const ReferenceShape shape = reference_shape(cfg.S_reference);
    std::mt19937_64 rng(seed_override ? *seed_override : cfg.seed.value_or(0));

    oracle::BaselineSetup setup;
    setup.S0 = cfg.S_reference;
    setup.options.h = cfg.integrator.h;
    setup.options.horizon = cfg.integrator.horizon;
    setup.options.decimation = cfg.integrator.decimation;
    setup.options.tail_fraction = cfg.integrator.tail_fraction;
    setup.options.divergence_guard = cfg.integrator.divergence_guard;
    setup.w0_init = cfg.w0_init.realize_vector(shape.r, rng, "reference.w0_init");

    for (size_t i = 0; i < cfg.agents.size(); ++i) {
        const AgentConfig& a = cfg.agents[i];
        const std::string where = "agents[" + std::to_string(i) + "]";
        oracle::BaselineAgentSpec spec;
        spec.model = a.model;
        spec.feedback_poles = a.feedback_poles;
        spec.x_init = a.x_init.realize_vector(a.model.n(), rng, where + ".x_init");
        spec.w_init = a.w_init.realize_vector(shape.r, rng, where + ".w_init");
        setup.agents.push_back(std::move(spec));
    }
    return setup;
}

/// One line of the structural report. Hard lines gate the run; soft lines
/// are informational.
struct CheckLine {
    std::string label;
    bool ok = false;
    bool hard = true;
    std::string note;
};

struct ValidationReport {
    std::vector<CheckLine> lines;

    bool hard_ok() const {
        for (const CheckLine& line : lines)
            if (line.hard && !line.ok) return false;
        return true;
    }
};

namespace detail {

inline std::vector<char> reachable_from(const Mat& adjacency,
                                        const std::vector<int>& sources) {
    std::vector<char> seen(static_cast<size_t>(adjacency.rows()), 0);
    std::vector<int> stack;
    for (int v : sources) {
        seen[static_cast<size_t>(v)] = 1;
        stack.push_back(v);
    }
    while (!stack.empty()) {
        const int v = stack.back();
        stack.pop_back();
        for (Eigen::Index i = 0; i < adjacency.rows(); ++i)
            if (adjacency(i, v) > 0.0 && !seen[static_cast<size_t>(i)]) {
                seen[static_cast<size_t>(i)] = 1;
                stack.push_back(static_cast<int>(i));
            }
    }
    return seen;
}

inline std::string complex_list(const CVec& v) {
    std::ostringstream os;
    for (Eigen::Index d = 0; d < v.size(); ++d) {
        if (d) os << " ";
        os << v[d].real() << (v[d].imag() >= 0 ? "+" : "") << v[d].imag() << "j";
    }
    return os.str();
}

} // namespace detail

/// Structural health of a scenario: reference neutrality, topology
/// reachability, per-agent stabilizability/detectability/rank checks, and
/// the imaginary-axis zero situation (informational: the detour radius
/// handles those, or there is no radius and the line turns hard).
inline ValidationReport validate_scenario(const ScenarioConfig& cfg) {
    ValidationReport rep;
    auto add = [&](std::string label, bool ok, bool hard, std::string note = "") {
        rep.lines.push_back({std::move(label), ok, hard, std::move(note)});
    };

    ReferenceShape shape;
    bool shape_ok = true;
    try {
        shape = reference_shape(cfg.S_reference);
        double worst = 0.0;
        for (Eigen::Index d = 0; d < shape.modes.size(); ++d)
            worst = std::max(worst, std::abs(shape.modes[d].real()));
        shape_ok = worst <= 1e-9 * std::max(1.0, cfg.S_reference.norm());
        add("reference dynamics neutrally stable", shape_ok, true,
            shape_ok ? "modes " + detail::complex_list(shape.modes)
                     : "off-axis modes " + detail::complex_list(shape.modes));
    } catch (const std::exception& ex) {
        shape_ok = false;
        add("reference dynamics neutrally stable", false, true, ex.what());
    }

    const graph::SwitchingDigraph g = build_graph(cfg);
    const double window = cfg.graph.periodic
                              ? g.period()
                              : std::max(g.period(), cfg.integrator.horizon);
    const Mat uni = g.union_adjacency(0.0, window);
    if (cfg.mode == engine::Mode::regulation) {
        const bool rooted = graph::contains_spanning_tree(uni, 0);
        add("union topology spans the network from the exosystem", rooted, true);
    } else {
        const bool closed = oracle::reference_closed(uni, cfg.reference_agents);
        add("reference agents form a closed set", closed, true,
            closed ? "" : "an outside edge feeds a reference agent");
        const std::vector<char> seen =
            detail::reachable_from(uni, cfg.reference_agents);
        bool all = true;
        for (char c : seen) all = all && c != 0;
        add("union topology reaches every agent from the reference set", all, true);

        bool anchored = true;
        std::string why;
        for (int v : cfg.reference_agents) {
            const AgentConfig& a = cfg.agents[static_cast<size_t>(v)];
            if (a.S_init.kind != InitSpec::Kind::matrix_literal ||
                !a.S_init.value.isApprox(cfg.S_reference, 1e-12)) {
                anchored = false;
                why = "agent " + std::to_string(v + 1) + " does not start on S";
                break;
            }
            Vec target;
            if (shape_ok) target = shape.layout.reduce(shape.modes);
            if (a.beta_init.kind != InitSpec::Kind::vector_literal ||
                (shape_ok && !a.beta_init.value.col(0).isApprox(target, 1e-12))) {
                anchored = false;
                why = "agent " + std::to_string(v + 1) +
                      " does not start on the reduced target roots";
                break;
            }
        }
        add("reference agents start exactly on the target dynamics", anchored, true,
            why);
    }

    plant::ExosystemModel exo;
    exo.S0 = cfg.S_reference;
    for (size_t i = 0; i < cfg.agents.size(); ++i) {
        const std::string who = "agent " + std::to_string(i + 1);
        const AgentConfig& a = cfg.agents[i];
        plant::AssumptionReport ar;
        try {
            ar = plant::check_assumptions(a.model, exo);
        } catch (const std::exception& ex) {
            add(who + ": structural checks", false, true, ex.what());
            continue;
        }
        add(who + ": stabilizable", ar.stabilizable, true,
            ar.stabilizable ? ""
                            : "uncontrollable unstable modes " +
                                  detail::complex_list(Eigen::Map<const CVec>(
                                      ar.stabilizability_failures.data(),
                                      static_cast<Eigen::Index>(
                                          ar.stabilizability_failures.size()))));
        add(who + ": detectable", ar.detectable, true);
        add(who + ": full rank at the reference modes", ar.rank_at_exosystem_modes,
            true);

        if (ar.no_imaginary_zeros) {
            add(who + ": imaginary-axis transmission zeros", true, false, "none");
        } else {
            plant::ZeroOptions zopts;
            if (a.model.m() > a.model.q())
                for (Eigen::Index d = 0; d < shape.modes.size(); ++d)
                    zopts.sweep_candidates.push_back(shape.modes[d]);
            try {
                const double rho = internal_model::semicircle_radius(
                    shape.modes, plant::transmission_zeros(a.model, true, zopts),
                    cfg.rho_coefficient);
                std::ostringstream note;
                note << detail::complex_list(ar.imaginary_zeros)
                     << "; handled by the semicircle detour (rho = " << rho << ")";
                add(who + ": imaginary-axis transmission zeros", false, false,
                    note.str());
            } catch (const std::exception& ex) {
                add(who + ": imaginary-axis transmission zeros", false, true, ex.what());
            }
        }

        if (cfg.controller == Controller::baseline) {
            try {
                oracle::baseline_regulator_controller(a.model, cfg.S_reference,
                                                      a.feedback_poles);
                add(who + ": nominal regulator equations solvable", true, true);
            } catch (const std::exception& ex) {
                add(who + ": nominal regulator equations solvable", false, true,
                    ex.what());
            }
        }
    }

    for (const auto& [key, unused] : cfg.thresholds) {
        (void)unused;
        const bool sync = cfg.mode == engine::Mode::synchronization;
        const bool baseline = cfg.controller == Controller::baseline;
        bool applies = true;
        if (key == "tail_max_regulation_error") applies = !sync;
        if (key == "tail_max_pairwise_output_gap" || key == "tail_max_error_feedback")
            applies = sync;
        if (baseline)
            applies = key == "tail_max_regulation_error" ||
                      key == "tail_max_generator_error";
        if (!applies)
            add("threshold '" + key + "' applies to this run", false, true,
                "this controller/mode never produces the metric");
    }
    return rep;
}

inline void write_report(const ValidationReport& rep, std::ostream& os) {
    for (const CheckLine& line : rep.lines) {
        os << (line.ok ? "   ok  " : (line.hard ? " FAIL  " : " note  "))
           << line.label;
        if (!line.note.empty()) os << " -- " << line.note;
        os << '\n';
    }
    os << (rep.hard_ok() ? "structurally sound\n" : "hard checks failed\n");
}

} // namespace regnet::scenario
