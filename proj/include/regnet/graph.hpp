#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "regnet/types.hpp"

namespace regnet::graph {

/// One entry of a switching schedule: hold `snapshot` for `dwell` seconds.
struct ScheduleEntry {
    int snapshot = 0;
    double dwell = 0.0;
};

/// Piecewise-constant directed communication topology.
///
/// adjacency(i, j) is the weight node i places on information received from
/// node j, so an edge j -> i exists exactly when adjacency(i, j) > 0. Every
/// nonzero weight must be at least `epsilon`. The active snapshot is a
/// right-continuous function of time: at a switch instant the new snapshot
/// is already in force. Periodic schedules wrap; aperiodic ones hold their
/// last snapshot beyond the end of the schedule.
class SwitchingDigraph {
public:
    SwitchingDigraph(std::vector<Mat> snapshots, std::vector<ScheduleEntry> schedule,
                     double epsilon, bool periodic, bool reference_node)
        : snapshots_(std::move(snapshots)),
          schedule_(std::move(schedule)),
          epsilon_(epsilon),
          periodic_(periodic),
          reference_node_(reference_node) {
        if (snapshots_.empty())
            throw std::invalid_argument("SwitchingDigraph: no snapshots given");
        if (schedule_.empty())
            throw std::invalid_argument("SwitchingDigraph: empty schedule");
        if (epsilon_ <= 0.0)
            throw std::invalid_argument("SwitchingDigraph: epsilon must be positive");

        nodes_ = static_cast<int>(snapshots_.front().rows());
        for (size_t s = 0; s < snapshots_.size(); ++s) {
            const Mat& a = snapshots_[s];
            if (a.rows() != nodes_ || a.cols() != nodes_) {
                std::ostringstream msg;
                msg << "SwitchingDigraph: snapshot " << s << " is " << a.rows() << "x"
                    << a.cols() << ", expected " << nodes_ << "x" << nodes_;
                throw std::invalid_argument(msg.str());
            }
            for (int i = 0; i < nodes_; ++i) {
                if (a(i, i) != 0.0) {
                    std::ostringstream msg;
                    msg << "SwitchingDigraph: snapshot " << s << " has a self-loop at node "
                        << i;
                    throw std::invalid_argument(msg.str());
                }
                for (int j = 0; j < nodes_; ++j) {
                    const double w = a(i, j);
                    if (w < 0.0 || (w > 0.0 && w < epsilon_)) {
                        std::ostringstream msg;
                        msg << "SwitchingDigraph: snapshot " << s << " weight (" << i
                            << "," << j << ") = " << w
                            << " is outside {0} U [epsilon, inf)";
                        throw std::invalid_argument(msg.str());
                    }
                }
            }
            if (reference_node_ && a.row(0).cwiseAbs().sum() != 0.0) {
                std::ostringstream msg;
                msg << "SwitchingDigraph: snapshot " << s
                    << " feeds information into the reference node 0";
                throw std::invalid_argument(msg.str());
            }
        }

        boundaries_.reserve(schedule_.size() + 1);
        boundaries_.push_back(0.0);
        for (const ScheduleEntry& e : schedule_) {
            if (e.snapshot < 0 || e.snapshot >= static_cast<int>(snapshots_.size()))
                throw std::invalid_argument("SwitchingDigraph: schedule names a missing snapshot");
            if (!(e.dwell > 0.0))
                throw std::invalid_argument("SwitchingDigraph: dwell times must be positive");
            boundaries_.push_back(boundaries_.back() + e.dwell);
        }
    }

    int node_count() const { return nodes_; }
    double epsilon() const { return epsilon_; }
    bool periodic() const { return periodic_; }
    bool has_reference_node() const { return reference_node_; }
    double period() const { return boundaries_.back(); }
    int snapshot_count() const { return static_cast<int>(snapshots_.size()); }
    const Mat& snapshot(int s) const { return snapshots_.at(static_cast<size_t>(s)); }
    const std::vector<ScheduleEntry>& schedule() const { return schedule_; }

    const Mat& adjacency_at(double t) const {
        if (t < 0.0)
            throw std::invalid_argument("SwitchingDigraph: negative time");
        return snapshots_[static_cast<size_t>(schedule_[segment_index(t)].snapshot)];
    }

    /// First switch instant strictly after t (infinity when none remains).
    double next_switch_after(double t) const {
        if (t < 0.0)
            throw std::invalid_argument("SwitchingDigraph: negative time");
        const double T = period();
        if (periodic_) {
            const double cycles = std::floor(t / T);
            double local = t - cycles * T;
            for (size_t k = 1; k < boundaries_.size(); ++k)
                if (boundaries_[k] > local + 1e-12) return cycles * T + boundaries_[k];
            return (cycles + 1.0) * T + boundaries_[1];
        }
        for (size_t k = 1; k < boundaries_.size(); ++k)
            if (boundaries_[k] > t + 1e-12) return boundaries_[k];
        return std::numeric_limits<double>::infinity();
    }

    /// Entrywise maximum of all snapshots active anywhere in [t0, t1).
    Mat union_adjacency(double t0, double t1) const {
        if (!(t1 > t0))
            throw std::invalid_argument("SwitchingDigraph: empty union window");
        Mat u = Mat::Zero(nodes_, nodes_);
        double t = t0;
        for (int guard = 0; guard < 4 * static_cast<int>(schedule_.size()) + 8; ++guard) {
            u = u.cwiseMax(adjacency_at(t));
            const double nxt = next_switch_after(t);
            if (nxt >= t1 || !std::isfinite(nxt)) return u;
            t = nxt;
            if (periodic_ && t - t0 >= period()) return u;   // a full cycle covers everything
        }
        return u;
    }

    /// Switch instants inside [0, horizon), deduplicated.
    std::vector<double> switch_times(double horizon) const {
        std::vector<double> out;
        double t = 0.0;
        while (t < horizon) {
            out.push_back(t);
            const double nxt = next_switch_after(t);
            if (!std::isfinite(nxt)) break;
            t = nxt;
        }
        return out;
    }

private:
    size_t segment_index(double t) const {
        const double T = period();
        double local = t;
        if (periodic_) {
            local = std::fmod(t, T);
            if (local < 0.0) local += T;
        } else if (local >= T) {
            return schedule_.size() - 1;
        }
        // right-continuous: segment k covers [boundaries_[k], boundaries_[k+1])
        const auto it = std::upper_bound(boundaries_.begin(), boundaries_.end(), local);
        size_t k = static_cast<size_t>(std::distance(boundaries_.begin(), it));
        if (k > 0) --k;
        if (k >= schedule_.size()) k = schedule_.size() - 1;
        return k;
    }

    std::vector<Mat> snapshots_;
    std::vector<ScheduleEntry> schedule_;
    std::vector<double> boundaries_;
    double epsilon_;
    bool periodic_;
    bool reference_node_;
    int nodes_ = 0;
};

/// In-degree Laplacian L = D - A with D = diag(row sums of A).
inline Mat laplacian(const Mat& adjacency) {
    if (adjacency.rows() != adjacency.cols())
        throw std::invalid_argument("laplacian: adjacency must be square");
    Mat L = -adjacency;
    for (Eigen::Index i = 0; i < adjacency.rows(); ++i)
        L(i, i) = adjacency.row(i).sum();
    return L;
}

/// Laplacian with the reference row and column removed.
inline Mat reduced_laplacian(const Mat& L) {
    if (L.rows() != L.cols() || L.rows() < 2)
        throw std::invalid_argument("reduced_laplacian: need at least two nodes");
    return L.bottomRightCorner(L.rows() - 1, L.cols() - 1);
}

namespace detail {

inline std::vector<std::vector<int>> successors(const Mat& adjacency) {
    const int n = static_cast<int>(adjacency.rows());
    std::vector<std::vector<int>> succ(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            if (adjacency(i, j) > 0.0) succ[static_cast<size_t>(j)].push_back(i);
    return succ;
}

inline int count_reachable(const std::vector<std::vector<int>>& succ, int from) {
    std::vector<bool> seen(succ.size(), false);
    std::vector<int> stack{from};
    seen[static_cast<size_t>(from)] = true;
    int count = 0;
    while (!stack.empty()) {
        const int v = stack.back();
        stack.pop_back();
        ++count;
        for (int w : succ[static_cast<size_t>(v)])
            if (!seen[static_cast<size_t>(w)]) {
                seen[static_cast<size_t>(w)] = true;
                stack.push_back(w);
            }
    }
    return count;
}

} // namespace detail

/// True when the digraph contains a spanning tree: some node (the given root
/// when specified) reaches every other node along directed edges.
inline bool contains_spanning_tree(const Mat& adjacency,
                                   std::optional<int> root = std::nullopt) {
    const int n = static_cast<int>(adjacency.rows());
    if (n == 0) return false;
    const auto succ = detail::successors(adjacency);
    if (root) {
        if (*root < 0 || *root >= n)
            throw std::invalid_argument("contains_spanning_tree: root out of range");
        return detail::count_reachable(succ, *root) == n;
    }
    for (int v = 0; v < n; ++v)
        if (detail::count_reachable(succ, v) == n) return true;
    return false;
}

/// Tarjan's strongly connected components; returned in reverse topological
/// order of the condensation.
inline std::vector<std::vector<int>> strongly_connected_components(const Mat& adjacency) {
    const int n = static_cast<int>(adjacency.rows());
    const auto succ = detail::successors(adjacency);
    std::vector<int> index(static_cast<size_t>(n), -1), low(static_cast<size_t>(n), 0);
    std::vector<bool> onStack(static_cast<size_t>(n), false);
    std::vector<int> stack;
    std::vector<std::vector<int>> comps;
    int counter = 0;

    // iterative Tarjan to stay safe on deep graphs
    struct Frame { int v; size_t child; };
    for (int start = 0; start < n; ++start) {
        if (index[static_cast<size_t>(start)] != -1) continue;
        std::vector<Frame> call{{start, 0}};
        index[static_cast<size_t>(start)] = low[static_cast<size_t>(start)] = counter++;
        stack.push_back(start);
        onStack[static_cast<size_t>(start)] = true;
        while (!call.empty()) {
            Frame& f = call.back();
            const auto& kids = succ[static_cast<size_t>(f.v)];
            if (f.child < kids.size()) {
                const int w = kids[f.child++];
                if (index[static_cast<size_t>(w)] == -1) {
                    index[static_cast<size_t>(w)] = low[static_cast<size_t>(w)] = counter++;
                    stack.push_back(w);
                    onStack[static_cast<size_t>(w)] = true;
                    call.push_back({w, 0});
                } else if (onStack[static_cast<size_t>(w)]) {
                    low[static_cast<size_t>(f.v)] =
                        std::min(low[static_cast<size_t>(f.v)], index[static_cast<size_t>(w)]);
                }
            } else {
                if (low[static_cast<size_t>(f.v)] == index[static_cast<size_t>(f.v)]) {
                    std::vector<int> comp;
                    while (true) {
                        const int w = stack.back();
                        stack.pop_back();
                        onStack[static_cast<size_t>(w)] = false;
                        comp.push_back(w);
                        if (w == f.v) break;
                    }
                    std::sort(comp.begin(), comp.end());
                    comps.push_back(std::move(comp));
                }
                const int v = f.v;
                call.pop_back();
                if (!call.empty())
                    low[static_cast<size_t>(call.back().v)] =
                        std::min(low[static_cast<size_t>(call.back().v)],
                                 low[static_cast<size_t>(v)]);
            }
        }
    }
    return comps;
}

/// Result of a windowed connectivity check. `horizon_limited` flags that an
/// aperiodic schedule could only be checked up to its final switch time.
struct WindowedCheck {
    bool holds = false;
    bool horizon_limited = false;
    double failing_window_start = -1.0;
    explicit operator bool() const { return holds; }
};

namespace detail {

// Window starts where the union over [t, t+T) can change: every switch
// boundary and every point T before one.
inline std::vector<double> critical_starts(const SwitchingDigraph& g, double T) {
    std::vector<double> starts;
    const double period = g.period();
    const double horizon = g.periodic() ? period : std::max(period - T, 0.0);
    for (double b : g.switch_times(period)) {
        if (b <= horizon + 1e-12) starts.push_back(b);
        double pre = b - T;
        if (g.periodic()) {
            pre = std::fmod(pre, period);
            if (pre < 0.0) pre += period;
            starts.push_back(pre);
        } else if (pre >= 0.0 && pre <= horizon + 1e-12) {
            starts.push_back(pre);
        }
    }
    starts.push_back(0.0);
    std::sort(starts.begin(), starts.end());
    starts.erase(std::unique(starts.begin(), starts.end(),
                             [](double a, double b) { return std::abs(a - b) < 1e-12; }),
                 starts.end());
    return starts;
}

} // namespace detail

/// Uniform joint connectivity: every window [t, t+T) must have a union
/// digraph containing a spanning tree (rooted at `root` when given).
inline WindowedCheck uniformly_contains_spanning_tree(const SwitchingDigraph& g,
                                                      std::optional<int> root,
                                                      double T) {
    if (!(T > 0.0))
        throw std::invalid_argument("uniformly_contains_spanning_tree: window must be positive");
    WindowedCheck result;
    result.horizon_limited = !g.periodic();
    for (double t : detail::critical_starts(g, T)) {
        if (!contains_spanning_tree(g.union_adjacency(t, t + T), root)) {
            result.holds = false;
            result.failing_window_start = t;
            return result;
        }
    }
    result.holds = true;
    return result;
}

/// Root-set connectivity: in every window union the condensation must have a
/// single source component and that component must be exactly `root_set`.
inline WindowedCheck rooted_component_check(const SwitchingDigraph& g,
                                            std::vector<int> root_set, double T) {
    if (!(T > 0.0))
        throw std::invalid_argument("rooted_component_check: window must be positive");
    if (root_set.empty())
        throw std::invalid_argument("rooted_component_check: empty root set");
    std::sort(root_set.begin(), root_set.end());
    for (int v : root_set)
        if (v < 0 || v >= g.node_count())
            throw std::invalid_argument("rooted_component_check: root set node out of range");

    WindowedCheck result;
    result.horizon_limited = !g.periodic();
    for (double t : detail::critical_starts(g, T)) {
        const Mat u = g.union_adjacency(t, t + T);
        const auto comps = strongly_connected_components(u);
        std::vector<int> compOf(static_cast<size_t>(g.node_count()), -1);
        for (size_t c = 0; c < comps.size(); ++c)
            for (int v : comps[c]) compOf[static_cast<size_t>(v)] = static_cast<int>(c);
        std::vector<bool> hasInbound(comps.size(), false);
        for (int i = 0; i < g.node_count(); ++i)
            for (int j = 0; j < g.node_count(); ++j)
                if (u(i, j) > 0.0 && compOf[static_cast<size_t>(i)] != compOf[static_cast<size_t>(j)])
                    hasInbound[static_cast<size_t>(compOf[static_cast<size_t>(i)])] = true;
        int sources = 0;
        std::vector<int> sourceComp;
        for (size_t c = 0; c < comps.size(); ++c)
            if (!hasInbound[c]) {
                ++sources;
                sourceComp = comps[c];
            }
        if (sources != 1 || sourceComp != root_set) {
            result.holds = false;
            result.failing_window_start = t;
            return result;
        }
    }
    result.holds = true;
    return result;
}

} // namespace regnet::graph
