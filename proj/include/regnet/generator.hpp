#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <regnet/internal_model.hpp>
#include <regnet/types.hpp>

namespace regnet::generator {

/// Per-agent estimates of the reference dynamics and signal: S_i tracks the
/// generating matrix, w_i the generated signal.
struct GeneratorState {
    std::vector<Mat> S;
    std::vector<Vec> w;

    int agents() const { return static_cast<int>(S.size()); }
};

struct GeneratorDerivatives {
    std::vector<Mat> dS;
    std::vector<Vec> dw;
};

/// Reference fed into row 0 of the adjacency when one node is the actual
/// exosystem rather than another estimating agent.
struct ExosystemFeed {
    Mat S0;
    Vec w0;
};

namespace detail {

inline int checked_dimension(const GeneratorState& state) {
    if (state.S.empty() || state.S.size() != state.w.size())
        throw std::invalid_argument("generator: empty state or S/w count mismatch");
    const Eigen::Index r = state.S.front().rows();
    for (size_t i = 0; i < state.S.size(); ++i) {
        if (state.S[i].rows() != r || state.S[i].cols() != r)
            throw std::invalid_argument("generator: agent " + std::to_string(i + 1) +
                                        " has a mismatched S dimension");
        if (state.w[i].size() != r)
            throw std::invalid_argument("generator: agent " + std::to_string(i + 1) +
                                        " has a mismatched w dimension");
    }
    return static_cast<int>(r);
}

} // namespace detail

/// Vector field of the coupled consensus estimator
///   dS_i = sum_j a_ij (S_j - S_i)
///   dw_i = S_i w_i + sum_j a_ij (w_j - w_i).
/// With an exosystem feed, adjacency row/column 0 belongs to the exosystem
/// (the j-sum starts at node 0 and agent i reads adjacency row i); without
/// one, the adjacency covers the agents alone.
inline GeneratorDerivatives generator_derivatives(const GeneratorState& state,
                                                  const Mat& adjacency,
                                                  const std::optional<ExosystemFeed>& exo) {
    const int r = detail::checked_dimension(state);
    const int n = state.agents();
    const int offset = exo.has_value() ? 1 : 0;
    if (adjacency.rows() != n + offset || adjacency.cols() != n + offset)
        throw std::invalid_argument("generator_derivatives: adjacency is " +
                                    std::to_string(adjacency.rows()) + "x" +
                                    std::to_string(adjacency.cols()) + ", expected " +
                                    std::to_string(n + offset) + " nodes");
    if (exo && (exo->S0.rows() != r || exo->S0.cols() != r || exo->w0.size() != r))
        throw std::invalid_argument("generator_derivatives: exosystem dimension mismatch");

    GeneratorDerivatives d;
    d.dS.resize(static_cast<size_t>(n));
    d.dw.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const size_t a = static_cast<size_t>(i);
        Mat dS = Mat::Zero(r, r);
        Vec dw = state.S[a] * state.w[a];
        const int row = i + offset;
        if (exo) {
            const double w0j = adjacency(row, 0);
            if (w0j > 0.0) {
                dS += w0j * (exo->S0 - state.S[a]);
                dw += w0j * (exo->w0 - state.w[a]);
            }
        }
        for (int j = 0; j < n; ++j) {
            const double aij = adjacency(row, j + offset);
            if (aij > 0.0) {
                const size_t b = static_cast<size_t>(j);
                dS += aij * (state.S[b] - state.S[a]);
                dw += aij * (state.w[b] - state.w[a]);
            }
        }
        d.dS[a] = std::move(dS);
        d.dw[a] = std::move(dw);
    }
    return d;
}

/// Output-map estimates plus the reference-root configuration for the
/// synchronization problem: rooted agents start exactly at the target
/// dynamics S*, everyone consents on the q x r maps Q_i.
struct SyncReferenceState {
    std::vector<Mat> Q;
    std::vector<int> reference_nodes;
    Mat S_star;
};

struct SyncDerivatives {
    GeneratorDerivatives generator;
    std::vector<Mat> dQ;
};

/// Rejects rooted agents whose initial dynamics differ from the shared
/// target; convergence to S* hinges on them agreeing exactly.
inline void validate_sync_reference(const SyncReferenceState& ref,
                                    const GeneratorState& initial) {
    const int n = initial.agents();
    detail::checked_dimension(initial);
    if (ref.reference_nodes.empty())
        throw std::invalid_argument("sync reference: the root set is empty");
    if (ref.Q.size() != static_cast<size_t>(n))
        throw std::invalid_argument("sync reference: Q count does not match the agents");
    const Eigen::Index q = ref.Q.front().rows();
    const Eigen::Index r = ref.Q.front().cols();
    for (size_t i = 0; i < ref.Q.size(); ++i)
        if (ref.Q[i].rows() != q || ref.Q[i].cols() != r)
            throw std::invalid_argument("sync reference: agent " + std::to_string(i + 1) +
                                        " has a mismatched Q dimension");
    if (r != initial.S.front().rows())
        throw std::invalid_argument("sync reference: Q columns do not match the "
                                    "generator dimension");
    if (ref.S_star.rows() != r || ref.S_star.cols() != r)
        throw std::invalid_argument("sync reference: S* dimension mismatch");
    for (int node : ref.reference_nodes) {
        if (node < 0 || node >= n)
            throw std::invalid_argument("sync reference: root node " +
                                        std::to_string(node + 1) + " is out of range");
        if ((initial.S[static_cast<size_t>(node)] - ref.S_star).norm() != 0.0)
            throw std::invalid_argument(
                "sync reference: rooted agents must share the same initial dynamics, "
                "agent " + std::to_string(node + 1) + " differs from the target");
    }
}

/// Synchronization-mode vector field: the generator consensus without an
/// exosystem node, plus dQ_i = sum_j a_ij (Q_j - Q_i).
inline SyncDerivatives sync_reference_derivatives(const GeneratorState& state,
                                                  const std::vector<Mat>& Q,
                                                  const Mat& adjacency) {
    const int n = state.agents();
    if (Q.size() != static_cast<size_t>(n))
        throw std::invalid_argument("sync_reference_derivatives: Q count mismatch");
    SyncDerivatives d;
    d.generator = generator_derivatives(state, adjacency, std::nullopt);
    d.dQ.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const size_t a = static_cast<size_t>(i);
        Mat dQ = Mat::Zero(Q[a].rows(), Q[a].cols());
        for (int j = 0; j < n; ++j) {
            const double aij = adjacency(i, j);
            if (aij > 0.0) dQ += aij * (Q[static_cast<size_t>(j)] - Q[a]);
        }
        d.dQ[a] = std::move(dQ);
    }
    return d;
}

/// When the reference dynamics are nonderogatory and already in companion
/// form, agreeing on the half root vector reproduces the whole matrix, so
/// the network can exchange just beta_hat instead of all of S_i.
struct CompanionReduction {
    bool active = false;
    CVec roots;      // canonical minimal-polynomial roots when active
    Vec beta_hat;    // reduced payload, one entry per conjugate pair
    internal_model::RootLayout layout;
};

/// Companion matrix with the given conjugate-closed roots: superdiagonal of
/// ones, last row the negated polynomial coefficients.
inline Mat companion_from_roots(const CVec& roots) {
    return internal_model::build_internal_model(roots, 1).Gp;
}

inline CompanionReduction companion_mode_reduction(const Mat& S0, double tol = 1e-9) {
    CompanionReduction red;
    const int r = static_cast<int>(S0.rows());
    if (r == 0 || S0.cols() != r) return red;

    for (int i = 0; i + 1 < r; ++i)
        for (int j = 0; j < r; ++j) {
            const double want = (j == i + 1) ? 1.0 : 0.0;
            if (std::abs(S0(i, j) - want) > tol) return red;
        }

    try {
        const CVec roots = internal_model::minimal_polynomial_roots(S0, tol);
        if (static_cast<int>(roots.size()) != r) return red;
        red.layout = internal_model::RootLayout::from_degree(r);
        red.beta_hat = red.layout.reduce(roots);
        for (int d = 0; d < red.layout.half; ++d)
            if (std::abs(roots[d].real()) > 1e-7) return red;
        red.roots = roots;
        red.active = true;
    } catch (const std::exception&) {
        red = CompanionReduction{};
    }
    return red;
}

/// Companion reconstruction of an agent's S from its consensus half vector.
inline Mat reduced_mode_S(const Vec& beta_hat, const internal_model::RootLayout& layout) {
    const Vec alpha = Vec::Zero(layout.alpha_size());
    return companion_from_roots(layout.expand(beta_hat, alpha));
}

} // namespace regnet::generator
