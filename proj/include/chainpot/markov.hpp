#ifndef CHAINPOT_MARKOV_HPP
#define CHAINPOT_MARKOV_HPP

#include "chainpot/types.hpp"

#include <algorithm>
#include <numeric>

// Stochastic-kernel algebra: classification, stationary measures, duality
// and induction on subsets. Everything is dense linear algebra; chains here
// are small enough that direct LU solves beat any iterative scheme.

namespace chainpot {

// --- classification ------------------------------------------------------

namespace detail {

// Strongly connected components of the positive-entry digraph (Kosaraju,
// iterative so deep chains cannot overflow the stack).
inline std::vector<std::vector<int>> strongly_connected_components(const MatrixXd& A) {
    const int n = static_cast<int>(A.rows());
    std::vector<std::vector<int>> fwd(n), bwd(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (A(i, j) > 0.0) {
                fwd[i].push_back(j);
                bwd[j].push_back(i);
            }

    std::vector<int> order;
    order.reserve(n);
    std::vector<char> seen(n, 0);
    for (int s = 0; s < n; ++s) {
        if (seen[s]) continue;
        // pair: node, next child index
        std::vector<std::pair<int, size_t>> stack{{s, 0}};
        seen[s] = 1;
        while (!stack.empty()) {
            auto& [u, k] = stack.back();
            if (k < fwd[u].size()) {
                int v = fwd[u][k++];
                if (!seen[v]) {
                    seen[v] = 1;
                    stack.emplace_back(v, 0);
                }
            } else {
                order.push_back(u);
                stack.pop_back();
            }
        }
    }

    std::vector<std::vector<int>> comps;
    std::vector<char> done(n, 0);
    for (int t = n - 1; t >= 0; --t) {
        int s = order[t];
        if (done[s]) continue;
        std::vector<int> comp, stack{s};
        done[s] = 1;
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            comp.push_back(u);
            for (int v : bwd[u])
                if (!done[v]) {
                    done[v] = 1;
                    stack.push_back(v);
                }
        }
        std::sort(comp.begin(), comp.end());
        comps.push_back(std::move(comp));
    }
    return comps;
}

// Period of one closed class: gcd of (level(u) + 1 - level(v)) over its edges.
inline long long class_period(const MatrixXd& A, const std::vector<int>& comp) {
    const int n = static_cast<int>(A.rows());
    std::vector<int> level(n, -1);
    std::vector<char> in_comp(n, 0);
    for (int i : comp) in_comp[i] = 1;
    std::vector<int> queue{comp[0]};
    level[comp[0]] = 0;
    for (size_t q = 0; q < queue.size(); ++q) {
        int u = queue[q];
        for (int v = 0; v < n; ++v) {
            if (A(u, v) > 0.0 && in_comp[v] && level[v] < 0) {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    long long g = 0;
    for (int u : comp)
        for (int v : comp)
            if (A(u, v) > 0.0) g = std::gcd(g, static_cast<long long>(level[u] + 1 - level[v]));
    return g == 0 ? 1 : std::llabs(g);
}

}  // namespace detail

inline ChainClassification classify(const StochasticKernel& P) {
    auto comps = detail::strongly_connected_components(P.rows);
    ChainClassification cls;
    cls.irreducible = comps.size() == 1;
    const int n = P.size();
    // a class is recurrent iff no positive edge leaves it
    std::vector<int> comp_of(n, -1);
    for (size_t c = 0; c < comps.size(); ++c)
        for (int i : comps[c]) comp_of[i] = static_cast<int>(c);
    for (size_t c = 0; c < comps.size(); ++c) {
        bool closed = true;
        for (int i : comps[c])
            for (int j = 0; j < n && closed; ++j)
                if (P.rows(i, j) > 0.0 && comp_of[j] != static_cast<int>(c)) closed = false;
        if (closed) cls.recurrent_classes.push_back(comps[c]);
    }
    long long period = 1;
    for (const auto& rc : cls.recurrent_classes) {
        long long p = detail::class_period(P.rows, rc);
        period = std::lcm(period, p);
    }
    cls.period = period;
    return cls;
}

inline void require_irreducible(const StochasticKernel& P, const char* who) {
    if (!classify(P).irreducible)
        throw Error(ErrorCode::reducible, std::string(who) + " requires an irreducible kernel");
}

// --- stationary measure ---------------------------------------------------

// Unique probability vector with pi P = pi, by direct solve of the
// transposed balance equations with one row replaced by normalization.
inline Measure stationary_measure(const StochasticKernel& P) {
    require_irreducible(P, "stationary_measure");
    const int n = P.size();
    MatrixXd A = P.rows.transpose() - MatrixXd::Identity(n, n);
    A.row(n - 1).setOnes();
    VectorXd b = VectorXd::Zero(n);
    b(n - 1) = 1.0;
    VectorXd pi = A.fullPivLu().solve(b);
    pi /= pi.sum();
    double residual = (P.rows.transpose() * pi - pi).cwiseAbs().sum();
    if (residual > 1e-10)
        throw Error(ErrorCode::invalid_argument,
                    "stationary solve residual " + std::to_string(residual));
    return Measure{pi, true};
}

// --- duality ---------------------------------------------------------------

// Time reversal w.r.t. pi: L(i,j) = pi_j P(j,i) / pi_i. Satisfies
// <Pf, g>_pi = <f, Lg>_pi, so L is the transfer operator of the chain's
// canonical-space shift.
inline StochasticKernel dual_kernel(const StochasticKernel& P, const Measure& pi) {
    const int n = P.size();
    if (pi.weights.size() != n)
        throw Error(ErrorCode::invalid_argument, "dual_kernel: measure size mismatch");
    for (int i = 0; i < n; ++i)
        if (!(pi.weights(i) > 0))
            throw Error(ErrorCode::zero_mass_state, "state " + P.states[i] + " has zero mass");
    VectorXd piv = pi.weights / pi.weights.sum();
    double stat_residual = (P.rows.transpose() * piv - piv).cwiseAbs().maxCoeff();
    if (stat_residual > 1e-8)
        throw Error(ErrorCode::invalid_argument,
                    "dual_kernel: measure is not stationary (residual " +
                        std::to_string(stat_residual) + ")");
    MatrixXd L(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) L(i, j) = piv(j) * P.rows(j, i) / piv(i);
    return validate_kernel(P.states, std::move(L));
}

// --- induced kernel ---------------------------------------------------------

// First-return kernel on a subset, in closed form:
//   P_S = P_SS + P_SC (I - P_CC)^{-1} P_CS.
// Irreducibility of P keeps the spectral radius of P_CC below one.
inline StochasticKernel induced_kernel(const StochasticKernel& P, const SubsetMask& mask) {
    if (mask.size() != P.size())
        throw Error(ErrorCode::invalid_argument, "induced_kernel: mask size mismatch");
    auto S = mask.indices();
    if (S.empty()) throw Error(ErrorCode::empty_subset, "induced_kernel: empty subset");
    require_irreducible(P, "induced_kernel");

    std::vector<std::string> labels;
    labels.reserve(S.size());
    for (int i : S) labels.push_back(P.states[i]);

    auto C = mask.complement();
    if (C.empty()) return StochasticKernel{labels, P.rows};

    MatrixXd Q = submatrix(P.rows, C, C);
    MatrixXd IQ = MatrixXd::Identity(Q.rows(), Q.cols()) - Q;
    Eigen::FullPivLU<MatrixXd> lu(IQ);
    if (!lu.isInvertible())
        throw Error(ErrorCode::singular_complement_block,
                    "subset is not reachable from part of its complement");
    MatrixXd X = lu.solve(submatrix(P.rows, C, S));
    MatrixXd B = submatrix(P.rows, S, S) + submatrix(P.rows, S, C) * X;
    double worst = (B.rowwise().sum().array() - 1.0).abs().maxCoeff();
    if (worst > tol::row_sum_error)
        throw Error(ErrorCode::singular_complement_block,
                    "induced rows lose mass (deviation " + std::to_string(worst) + ")");
    return validate_kernel(std::move(labels), std::move(B));
}

struct InducedSystem {
    SubsetMask mask;
    StochasticKernel kernel;    // states relabelled to the subset
    Measure pi_restricted;      // unnormalized: keeps mass pi(S)
    std::vector<int> indices;   // subset index -> original index
};

inline InducedSystem induce(const StochasticKernel& P, const Measure& pi, const SubsetMask& mask) {
    InducedSystem sys;
    sys.mask = mask;
    sys.kernel = induced_kernel(P, mask);
    sys.indices = mask.indices();
    sys.pi_restricted = Measure{subvector(pi.weights, sys.indices), false};
    return sys;
}

// --- return times ------------------------------------------------------------

struct ReturnTimeTable {
    // probs(i, t-1) = P(first hit of the subset at time t | X_0 = state i),
    // one row per state of the full chain, t = 1..horizon.
    MatrixXd probs;
    VectorXd tail;          // 1 - sum of each row
    double rho;             // spectral radius of the masked block P_CC
    double tail_bound;      // max over rows of the exact remaining mass
};

namespace detail {

// Growth-rate estimate of the Perron value of a nonnegative matrix.
inline double spectral_radius_nonneg(const MatrixXd& Q) {
    if (Q.rows() == 0) return 0.0;
    VectorXd x = VectorXd::Ones(Q.rows());
    double rho = 0.0;
    for (int it = 0; it < 2000; ++it) {
        VectorXd y = Q * x;
        double ny = y.cwiseAbs().maxCoeff();
        if (ny == 0.0) return 0.0;
        double estimate = ny / x.cwiseAbs().maxCoeff();
        y /= ny;
        if (it > 20 && std::abs(estimate - rho) < 1e-13 * std::max(1.0, estimate)) {
            rho = estimate;
            break;
        }
        rho = estimate;
        x = y;
    }
    return rho;
}

}  // namespace detail

inline ReturnTimeTable return_time_distribution(const StochasticKernel& P, const SubsetMask& mask,
                                                int horizon) {
    if (horizon < 1) throw Error(ErrorCode::invalid_argument, "horizon must be >= 1");
    auto S = mask.indices();
    if (S.empty()) throw Error(ErrorCode::empty_subset, "return_time_distribution: empty subset");
    require_irreducible(P, "return_time_distribution");
    const int n = P.size();
    auto C = mask.complement();

    MatrixXd probs(n, horizon);
    VectorXd in_mask = VectorXd::Zero(n);
    for (int i : S) in_mask(i) = 1.0;
    probs.col(0) = P.rows * in_mask;

    MatrixXd Q = submatrix(P.rows, C, C);
    MatrixXd PC(n, static_cast<Eigen::Index>(C.size()));
    for (size_t j = 0; j < C.size(); ++j) PC.col(static_cast<Eigen::Index>(j)) = P.rows.col(C[j]);
    if (!C.empty()) {
        VectorXd w = submatrix(P.rows, C, S).rowwise().sum();  // hit the subset next step
        for (int t = 2; t <= horizon; ++t) {
            probs.col(t - 1) = PC * w;
            w = Q * w;
        }
    } else {
        for (int t = 2; t <= horizon; ++t) probs.col(t - 1).setZero();
    }

    ReturnTimeTable table;
    table.probs = std::move(probs);
    table.tail = (1.0 - table.probs.rowwise().sum().array()).max(0.0);
    table.rho = detail::spectral_radius_nonneg(Q);
    table.tail_bound = table.tail.maxCoeff();
    return table;
}

// Expected first-return time from each subset state, via absorbing solve.
// Kac: sum over the subset of pi(w) E_w[phi] = full mass of pi.
inline VectorXd expected_return_times(const StochasticKernel& P, const SubsetMask& mask) {
    auto S = mask.indices();
    if (S.empty()) throw Error(ErrorCode::empty_subset, "expected_return_times: empty subset");
    require_irreducible(P, "expected_return_times");
    auto C = mask.complement();
    VectorXd out(static_cast<Eigen::Index>(S.size()));
    if (C.empty()) {
        out.setOnes();
        return out;
    }
    MatrixXd Q = submatrix(P.rows, C, C);
    MatrixXd IQ = MatrixXd::Identity(Q.rows(), Q.cols()) - Q;
    VectorXd t = IQ.partialPivLu().solve(VectorXd::Ones(Q.rows()));
    MatrixXd PSC = submatrix(P.rows, S, C);
    out = VectorXd::Ones(static_cast<Eigen::Index>(S.size())) + PSC * t;
    return out;
}

}  // namespace chainpot

#endif  // CHAINPOT_MARKOV_HPP
