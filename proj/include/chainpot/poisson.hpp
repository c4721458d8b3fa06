#ifndef CHAINPOT_POISSON_HPP
#define CHAINPOT_POISSON_HPP

#include "chainpot/markov.hpp"
#include "chainpot/types.hpp"

// Poisson equation (I - P) f = g on finite chains: potential kernels,
// solution extension with the maximum principle, weighted induction and the
// non-localized correction series.

namespace chainpot {

// Right inverse of (I - P) on centered observables, realized through the
// fundamental matrix Z = (I - P + 1 pi)^{-1}:  Gamma = Z - 1 pi.
// Maps centered to centered; Gamma(0) = 0.
struct PotentialKernel {
    MatrixXd gamma;
    std::string kernel_id;

    VectorXd apply(const VectorXd& g) const { return gamma * g; }
};

inline MatrixXd fundamental_matrix(const StochasticKernel& P, const Measure& pi) {
    const int n = P.size();
    VectorXd piv = pi.weights / pi.mass();
    MatrixXd A = MatrixXd::Identity(n, n) - P.rows + VectorXd::Ones(n) * piv.transpose();
    return A.partialPivLu().inverse();
}

inline PotentialKernel potential_kernel(const StochasticKernel& P, const Measure& pi) {
    require_irreducible(P, "potential_kernel");
    const int n = P.size();
    VectorXd piv = pi.weights / pi.mass();
    MatrixXd Z = fundamental_matrix(P, pi);
    PotentialKernel K;
    K.gamma = Z - VectorXd::Ones(n) * piv.transpose();
    K.kernel_id = kernel_digest(P);
    return K;
}

struct PoissonSolution {
    Observable f;  // the pi-centered representative
    Observable g;
    std::string kernel_id;
    double residual = 0.0;  // max |(I-P)f - g|
};

// Unique centered solution of (I - P) f = g for centered g.
inline PoissonSolution solve_poisson(const StochasticKernel& P, const Measure& pi,
                                     const Observable& g) {
    require_irreducible(P, "solve_poisson");
    require_centered(pi, g.values, "solve_poisson: g");
    PotentialKernel K = potential_kernel(P, pi);
    VectorXd f = K.apply(g.values);
    // re-center to kill solver rounding; solutions are unique up to constants
    f.array() -= pi.weights.dot(f) / pi.mass();
    PoissonSolution sol;
    sol.f = Observable{f, true};
    sol.g = g;
    sol.kernel_id = K.kernel_id;
    sol.residual = ((f - P.rows * f) - g.values).cwiseAbs().maxCoeff();
    double scale = std::max(1.0, g.values.cwiseAbs().maxCoeff());
    if (sol.residual > tol::identity_check * scale)
        throw Error(ErrorCode::invalid_argument,
                    "poisson solve residual " + std::to_string(sol.residual));
    return sol;
}

inline void require_supported(const VectorXd& g, const SubsetMask& mask, const char* who) {
    double scale = std::max(1.0, g.cwiseAbs().maxCoeff());
    for (int i : mask.complement())
        if (std::abs(g(i)) > 1e-12 * scale)
            throw Error(ErrorCode::support_violation,
                        std::string(who) + ": g is nonzero off the subset at index " +
                            std::to_string(i));
}

struct InductionReport {
    VectorXd lhs;  // (I - P_S) f|_S
    VectorXd rhs;  // g|_S
    double max_abs_gap = 0.0;
    bool pass = false;
};

// Solve (I-P)f = g on the full chain, then check the induced equation
// (I - P_S) f|_S = g|_S by an independent induced-kernel computation.
inline InductionReport verify_poisson_induction(const StochasticKernel& P, const Measure& pi,
                                                const SubsetMask& mask, const Observable& g) {
    require_supported(g.values, mask, "verify_poisson_induction");
    PoissonSolution sol = solve_poisson(P, pi, g);
    StochasticKernel PS = induced_kernel(P, mask);
    auto S = mask.indices();
    VectorXd fS = subvector(sol.f.values, S);
    InductionReport rep;
    rep.lhs = fS - PS.rows * fS;
    rep.rhs = subvector(g.values, S);
    rep.max_abs_gap = (rep.lhs - rep.rhs).cwiseAbs().maxCoeff();
    rep.pass = rep.max_abs_gap <= tol::identity_check;
    return rep;
}

// Harmonic extension of an induced solution back to the full chain:
// f = f_S on S, f = (I - P_CC)^{-1} P_CS f_S off S. The sup norm is attained
// on S (maximum principle), and (I - P) f = g on all states.
inline Observable extend_solution(const StochasticKernel& P, const Measure& pi,
                                  const SubsetMask& mask, const VectorXd& f_S,
                                  const Observable& g) {
    (void)pi;
    auto S = mask.indices();
    if (S.empty()) throw Error(ErrorCode::empty_subset, "extend_solution: empty subset");
    if (static_cast<Eigen::Index>(S.size()) != f_S.size())
        throw Error(ErrorCode::invalid_argument, "extend_solution: f_S size mismatch");
    require_irreducible(P, "extend_solution");
    require_supported(g.values, mask, "extend_solution");

    StochasticKernel PS = induced_kernel(P, mask);
    VectorXd gS = subvector(g.values, S);
    double scale = std::max(1.0, std::max(f_S.cwiseAbs().maxCoeff(), gS.cwiseAbs().maxCoeff()));
    double induced_res = (f_S - PS.rows * f_S - gS).cwiseAbs().maxCoeff();
    if (induced_res > tol::identity_check * scale)
        throw Error(ErrorCode::not_induced_solution,
                    "f_S does not solve the induced equation (residual " +
                        std::to_string(induced_res) + ")");

    const int n = P.size();
    VectorXd f(n);
    for (size_t i = 0; i < S.size(); ++i) f(S[i]) = f_S(static_cast<Eigen::Index>(i));
    auto C = mask.complement();
    if (!C.empty()) {
        MatrixXd Q = submatrix(P.rows, C, C);
        MatrixXd IQ = MatrixXd::Identity(Q.rows(), Q.cols()) - Q;
        VectorXd fC = IQ.partialPivLu().solve(submatrix(P.rows, C, S) * f_S);
        for (size_t i = 0; i < C.size(); ++i) f(C[i]) = fC(static_cast<Eigen::Index>(i));
    }

    double res = ((f - P.rows * f) - g.values).cwiseAbs().maxCoeff();
    if (res > tol::identity_check * scale)
        throw Error(ErrorCode::invalid_argument, "extension residual " + std::to_string(res));
    return Observable{f, false};
}

// Weighted operators: L_phi(f) = L(e^phi f), with statewise real log-weights.
struct WeightedKernelSpec {
    Observable phi;  // log-weight per state, must be <= 0 pointwise
};

// Induced weighted operator in closed form. With M = diag(e^phi) P, a path
// leaving w accumulates the weights of the states it departs from, which is
// the Birkhoff sum of phi up to the return time:
//   W_S = M_SS + M_SC (I - M_CC)^{-1} M_CS.
// For phi = 0 this is the plain induced kernel; for constant phi = -s each
// return-time-k path picks up e^{-sk}.
inline MatrixXd weighted_induced_operator(const StochasticKernel& P, const SubsetMask& mask,
                                          const WeightedKernelSpec& spec) {
    if (spec.phi.values.size() != P.size())
        throw Error(ErrorCode::invalid_argument, "weighted_induced_operator: phi size mismatch");
    double mx = spec.phi.values.maxCoeff();
    if (mx > 0.0)
        throw Error(ErrorCode::weight_positive, "max phi = " + std::to_string(mx));
    auto S = mask.indices();
    if (S.empty()) throw Error(ErrorCode::empty_subset, "weighted_induced_operator: empty subset");
    require_irreducible(P, "weighted_induced_operator");

    MatrixXd M = spec.phi.values.array().exp().matrix().asDiagonal() * P.rows;
    auto C = mask.complement();
    if (C.empty()) return submatrix(M, S, S);
    MatrixXd Q = submatrix(M, C, C);
    MatrixXd IQ = MatrixXd::Identity(Q.rows(), Q.cols()) - Q;
    Eigen::FullPivLU<MatrixXd> lu(IQ);
    if (!lu.isInvertible())
        throw Error(ErrorCode::singular_complement_block, "weighted masked block is singular");
    return submatrix(M, S, S) + submatrix(M, S, C) * lu.solve(submatrix(M, C, S));
}

// Correction term when g is not supported on the inducing set: with
// (I - P) f = g,
//   (I - P_S) f|_S = g|_S + c,   c(w) = E_w[ sum_{k=1}^{phi-1} g(X_k) ].
// The series over the sets {phi = k} is evaluated with an explicit horizon
// from the masked spectral radius and cross-checked against the closed form
// c = P_SC (I - P_CC)^{-1} g_C, which is what gets returned.
inline Observable nonlocalized_correction(const StochasticKernel& P, const Measure& pi,
                                          const SubsetMask& mask, const Observable& g) {
    require_irreducible(P, "nonlocalized_correction");
    require_centered(pi, g.values, "nonlocalized_correction: g");
    auto S = mask.indices();
    if (S.empty()) throw Error(ErrorCode::empty_subset, "nonlocalized_correction: empty subset");
    auto C = mask.complement();
    VectorXd c = VectorXd::Zero(static_cast<Eigen::Index>(S.size()));
    if (C.empty()) return Observable{c, false};

    MatrixXd Q = submatrix(P.rows, C, C);
    MatrixXd PSC = submatrix(P.rows, S, C);
    VectorXd gC = subvector(g.values, C);

    MatrixXd IQ = MatrixXd::Identity(Q.rows(), Q.cols()) - Q;
    VectorXd closed = PSC * IQ.partialPivLu().solve(gC);

    double scale = std::max(1.0, g.values.cwiseAbs().maxCoeff());
    double rho = detail::spectral_radius_nonneg(Q);
    long horizon = 64;
    if (rho > 0.0 && rho < 1.0)
        horizon = std::min<long>(200000, std::max<long>(8, static_cast<long>(
                                     std::ceil(std::log(1e-14) / std::log(rho)))));
    VectorXd term = gC, acc = VectorXd::Zero(gC.size());
    for (long k = 0; k < horizon; ++k) {
        acc += term;
        term = Q * term;
    }
    VectorXd series = PSC * acc;
    if ((series - closed).cwiseAbs().maxCoeff() > 1e-9 * scale)
        throw Error(ErrorCode::invalid_argument,
                    "correction series disagrees with its closed form");
    return Observable{closed, false};
}

}  // namespace chainpot

#endif  // CHAINPOT_POISSON_HPP
