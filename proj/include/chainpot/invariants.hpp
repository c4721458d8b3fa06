#ifndef CHAINPOT_INVARIANTS_HPP
#define CHAINPOT_INVARIANTS_HPP

#include "chainpot/markov.hpp"
#include "chainpot/poisson.hpp"
#include "chainpot/types.hpp"

#include <Eigen/Eigenvalues>

#include <array>

// Green-Kubo bilinear form, excursion moment analysis, coboundary algebra
// and the degree-3 trilinear form tau^3, each by several independent routes.
//
// Correlation orientation, fixed once for the whole module: observables sit
// on states, the chain runs forward, and
//     E[f(X_0) g(X_n)] = <f, P^n g>_pi,
// where <a, b>_pi = sum_i pi_i a_i b_i. The transfer operator of the shift
// encoding is the time-reversed kernel L = dual_kernel(P, pi), with
// <Pf, g>_pi = <f, Lg>_pi; transfer-operator sums over L^n are evaluated
// through that duality.

namespace chainpot {

enum class GkMethod { resolvent, series, excursion, monte_carlo };

inline const char* method_name(GkMethod m) {
    switch (m) {
        case GkMethod::resolvent: return "resolvent";
        case GkMethod::series: return "series";
        case GkMethod::excursion: return "excursion";
        case GkMethod::monte_carlo: return "monte_carlo";
    }
    return "?";
}

struct GreenKuboResult {
    double value = 0.0;
    GkMethod method = GkMethod::resolvent;
    double truncation_error_bound = 0.0;
};

struct Tau3Result {
    double value = 0.0;
    GkMethod method = GkMethod::resolvent;
    double truncation_error_bound = 0.0;
};

namespace detail {

struct GkContext {
    VectorXd pi;        // stationary probability
    MatrixXd P;         // forward kernel
    MatrixXd L;         // time reversal
    MatrixXd Z;         // (I - P + 1 pi)^{-1}
    MatrixXd ZL;        // (I - L + 1 pi)^{-1}

    double dot(const VectorXd& a, const VectorXd& b) const {
        return (pi.array() * a.array() * b.array()).sum();
    }
};

inline GkContext make_context(const StochasticKernel& P, const Measure& pi) {
    GkContext ctx;
    ctx.pi = pi.weights / pi.mass();
    ctx.P = P.rows;
    ctx.L = dual_kernel(P, pi).rows;
    const int n = P.size();
    MatrixXd onepi = VectorXd::Ones(n) * ctx.pi.transpose();
    ctx.Z = (MatrixXd::Identity(n, n) - ctx.P + onepi).partialPivLu().inverse();
    ctx.ZL = (MatrixXd::Identity(n, n) - ctx.L + onepi).partialPivLu().inverse();
    return ctx;
}

// Modulus of the second-largest eigenvalue; 1.0 signals a periodic chain.
inline double second_eigenvalue_modulus(const MatrixXd& P) {
    Eigen::EigenSolver<MatrixXd> es(P, false);
    double rho2 = 0.0;
    int near_one = 0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        double m = std::abs(es.eigenvalues()(i));
        if (m > 1.0 - 1e-9) {
            ++near_one;
            continue;
        }
        rho2 = std::max(rho2, m);
    }
    return near_one > 1 ? 1.0 : rho2;
}

inline void require_aperiodic(const StochasticKernel& P, const char* who) {
    auto cls = classify(P);
    if (!cls.irreducible) throw Error(ErrorCode::reducible, std::string(who));
    if (cls.period != 1)
        throw Error(ErrorCode::periodic,
                    std::string(who) + ": chain has period " + std::to_string(cls.period) +
                        "; use the resolvent method");
}

}  // namespace detail

// --- Green-Kubo, exact resolvent route -----------------------------------

// sigma^2(f, g) = <f,g> + sum_{n>=1} [<f, P^n g> + <g, P^n f>]
//              = <Zf, g> + <f, Zg> - <f, g>     on centered pairs.
// Symmetric by construction; valid for periodic chains as the Cesaro value.
inline GreenKuboResult green_kubo_resolvent(const StochasticKernel& P, const Measure& pi,
                                            const Observable& f, const Observable& g) {
    require_irreducible(P, "green_kubo_resolvent");
    require_centered(pi, f.values, "green_kubo_resolvent: f");
    require_centered(pi, g.values, "green_kubo_resolvent: g");
    auto ctx = detail::make_context(P, pi);
    VectorXd Zf = ctx.Z * f.values, Zg = ctx.Z * g.values;
    GreenKuboResult r;
    r.value = ctx.dot(Zf, g.values) + ctx.dot(f.values, Zg) - ctx.dot(f.values, g.values);
    r.method = GkMethod::resolvent;
    return r;
}

// Partial-sum route; refuses periodic chains (the limit is only Cesaro there).
inline GreenKuboResult green_kubo_series(const StochasticKernel& P, const Measure& pi,
                                         const Observable& f, const Observable& g,
                                         double tolerance = 1e-9) {
    detail::require_aperiodic(P, "green_kubo_series");
    require_centered(pi, f.values, "green_kubo_series: f");
    require_centered(pi, g.values, "green_kubo_series: g");
    VectorXd piv = pi.weights / pi.mass();
    auto dot = [&piv](const VectorXd& a, const VectorXd& b) {
        return (piv.array() * a.array() * b.array()).sum();
    };
    double rho2 = detail::second_eigenvalue_modulus(P.rows);
    if (rho2 >= 1.0 - 1e-12)
        throw Error(ErrorCode::periodic, "green_kubo_series: no spectral gap");

    double value = dot(f.values, g.values);
    long N = 16;
    if (rho2 > 0.0) {
        double scale = std::max(1e-300, dot(f.values, f.values) * dot(g.values, g.values));
        N = static_cast<long>(
            std::ceil(std::log(tolerance * (1.0 - rho2) / std::sqrt(scale)) / std::log(rho2)));
        N = std::min<long>(std::max<long>(N, 16), 200000);
    }
    VectorXd pf = f.values, pg = g.values;
    double amp = 0.0;  // observed |term| / rho2^n, covers non-normal transients
    for (long n = 1; n <= N; ++n) {
        pf = P.rows * pf;
        pg = P.rows * pg;
        double term = dot(f.values, pg) + dot(g.values, pf);
        value += term;
        if (rho2 > 0.0) amp = std::max(amp, std::abs(term) / std::pow(rho2, static_cast<double>(n)));
    }
    GreenKuboResult r;
    r.value = value;
    r.method = GkMethod::series;
    r.truncation_error_bound =
        rho2 > 0.0 ? amp * std::pow(rho2, static_cast<double>(N + 1)) / (1.0 - rho2) : 0.0;
    return r;
}

// --- excursion moments -----------------------------------------------------

// Moments of S = sum_{k=0}^{phi-1} f(X_k) over one excursion from the subset,
// by first-step analysis on the complement: with Q = P_CC,
//   u1 = (I-Q)^{-1} f_C
//   u2 = (I-Q)^{-1} (f^2 + 2 f (Q u1))
//   u3 = (I-Q)^{-1} (f^3 + 3 f^2 (Q u1) + 3 f (Q u2))
// then one explicit first step from each subset state. The joint table
// j(w, w') = E_w[S 1_{X_phi = w'}] comes from per-target absorbing solves.
struct ExcursionMoments {
    std::vector<std::string> subset_states;
    VectorXd m1, m2, m3;
    MatrixXd joint;
};

inline ExcursionMoments excursion_moments(const StochasticKernel& P, const Measure& pi,
                                          const SubsetMask& mask, const Observable& f) {
    (void)pi;
    require_irreducible(P, "excursion_moments");
    auto S = mask.indices();
    if (S.empty()) throw Error(ErrorCode::empty_subset, "excursion_moments: empty subset");
    auto C = mask.complement();

    ExcursionMoments out;
    for (int i : S) out.subset_states.push_back(P.states[static_cast<size_t>(i)]);
    VectorXd fS = subvector(f.values, S);

    if (C.empty()) {
        out.m1 = fS;
        out.m2 = fS.array().square();
        out.m3 = fS.array().cube();
        out.joint = fS.asDiagonal() * P.rows;
        return out;
    }

    MatrixXd Q = submatrix(P.rows, C, C);
    MatrixXd PSC = submatrix(P.rows, S, C);
    MatrixXd PCS = submatrix(P.rows, C, S);
    VectorXd fC = subvector(f.values, C);
    Eigen::PartialPivLU<MatrixXd> lu(MatrixXd::Identity(Q.rows(), Q.cols()) - Q);

    VectorXd u1 = lu.solve(fC);
    VectorXd qu1 = Q * u1;
    VectorXd u2 = lu.solve((fC.array().square() + 2.0 * fC.array() * qu1.array()).matrix());
    VectorXd qu2 = Q * u2;
    VectorXd u3 = lu.solve((fC.array().cube() + 3.0 * fC.array().square() * qu1.array() +
                            3.0 * fC.array() * qu2.array())
                               .matrix());

    VectorXd p1 = PSC * u1, p2 = PSC * u2, p3 = PSC * u3;
    out.m1 = fS + p1;
    out.m2 = (fS.array().square() + 2.0 * fS.array() * p1.array() + p2.array()).matrix();
    out.m3 = (fS.array().cube() + 3.0 * fS.array().square() * p1.array() +
              3.0 * fS.array() * p2.array() + p3.array())
                 .matrix();

    MatrixXd H = lu.solve(PCS);                       // H(x, w') = P_x(hit at w')
    MatrixXd PS = submatrix(P.rows, S, S) + PSC * H;  // induced kernel
    MatrixXd W = lu.solve(fC.asDiagonal() * H);       // E_x[S'' 1_{target}]
    out.joint = fS.asDiagonal() * PS + PSC * W;
    return out;
}

// E_w[S_f * S_g] over one excursion, same first-step scheme bilinearly.
inline VectorXd excursion_cross_moment(const StochasticKernel& P, const SubsetMask& mask,
                                       const Observable& f, const Observable& g) {
    require_irreducible(P, "excursion_cross_moment");
    auto S = mask.indices();
    if (S.empty()) throw Error(ErrorCode::empty_subset, "excursion_cross_moment: empty subset");
    auto C = mask.complement();
    VectorXd fS = subvector(f.values, S), gS = subvector(g.values, S);
    if (C.empty()) return (fS.array() * gS.array()).matrix();

    MatrixXd Q = submatrix(P.rows, C, C);
    MatrixXd PSC = submatrix(P.rows, S, C);
    VectorXd fC = subvector(f.values, C), gC = subvector(g.values, C);
    Eigen::PartialPivLU<MatrixXd> lu(MatrixXd::Identity(Q.rows(), Q.cols()) - Q);
    VectorXd uf = lu.solve(fC), ug = lu.solve(gC);
    VectorXd quf = Q * uf, qug = Q * ug;
    VectorXd ufg = lu.solve((fC.array() * gC.array() + fC.array() * qug.array() +
                             gC.array() * quf.array())
                                .matrix());
    VectorXd pf = PSC * uf, pg = PSC * ug, pfg = PSC * ufg;
    return (fS.array() * gS.array() + fS.array() * pg.array() + gS.array() * pf.array() +
            pfg.array())
        .matrix();
}

// --- induced Green-Kubo (excursion route) ------------------------------------

// sigma^2 of the excursion sums on the induced system, with the unnormalized
// restricted measure (total mass pi(S)):
//   value = sum_w pi(w) m2(w)
//         + 2 sum_{n>=1} sum_{w,w'} pi(w) j(w,w') (P_S^{n-1} m1)(w'),
// the n-series folded through the induced fundamental matrix. Kac makes m1
// centered for the induced stationary law, so the fold is exact.
inline GreenKuboResult green_kubo_induced(const StochasticKernel& P, const Measure& pi,
                                          const SubsetMask& mask, const Observable& f) {
    require_centered(pi, f.values, "green_kubo_induced: f");
    ExcursionMoments mom = excursion_moments(P, pi, mask, f);
    auto S = mask.indices();
    VectorXd piS = subvector(pi.weights, S) / pi.mass();
    StochasticKernel PS = induced_kernel(P, mask);
    const auto s = static_cast<Eigen::Index>(S.size());

    GreenKuboResult r;
    r.method = GkMethod::excursion;
    r.value = piS.dot(mom.m2);
    if (s > 1) {
        VectorXd pihat = piS / piS.sum();
        MatrixXd A = MatrixXd::Identity(s, s) - PS.rows + VectorXd::Ones(s) * pihat.transpose();
        VectorXd m1c = mom.m1;
        m1c.array() -= pihat.dot(mom.m1);  // strip the Kac-level rounding
        VectorXd v = A.partialPivLu().solve(m1c);
        r.value += 2.0 * piS.dot(mom.joint * v);
    }
    return r;
}

// Single-site induced bilinear form: with one inducing state the excursion
// pairs (S_a, S_b) are i.i.d., so sigma^2(B; Sigma a, Sigma b) = pi(w) E[S_a S_b]
// provided at least one of the excursion sums has zero mean.
inline double induced_sigma2_single_site(const StochasticKernel& P, const Measure& pi,
                                         const SubsetMask& mask, const Observable& a,
                                         const Observable& b) {
    if (mask.count() != 1)
        throw Error(ErrorCode::subset_not_singleton, "induced_sigma2_single_site");
    ExcursionMoments ma = excursion_moments(P, pi, mask, a);
    ExcursionMoments mb = excursion_moments(P, pi, mask, b);
    auto S = mask.indices();
    double piw = pi.weights(S[0]) / pi.mass();
    double mean_a = piw * ma.m1(0), mean_b = piw * mb.m1(0);  // Kac integrals
    if (std::abs(mean_a) > 1e-8 && std::abs(mean_b) > 1e-8)
        throw Error(ErrorCode::not_centered,
                    "induced_sigma2_single_site: both excursion sums have nonzero mean");
    return piw * excursion_cross_moment(P, mask, a, b)(0);
}

// --- coboundary algebra -----------------------------------------------------

// State-function representative of a coboundary shift of f by u. The actual
// invariance statement lives on path space (u applied one step ahead minus
// u now); green_kubo_shifted below evaluates that object exactly.
inline Observable coboundary_shift(const StochasticKernel& P, const Measure& pi,
                                   const Observable& f, const Observable& u) {
    detail::require_aperiodic(P, "coboundary_shift");
    (void)pi;
    Observable out;
    out.values = f.values + u.values - P.rows * u.values;
    out.centered = f.centered;
    return out;
}

// Exact lagged-correlation evaluation of sigma^2(f + u(X_1) - u(X_0), g):
//   lag 0:   <f,g> + <Pu - u, g>
//   F first: sum_{n>=1} [<f,P^n g> + <u,P^{n-1}g> - <u,P^n g>]
//   g first: sum_{n>=1} [<g,P^n f> + <g,P^{n+1}u> - <g,P^n u>]
// all three folded through the fundamental matrix. The coboundary pieces are
// individually nonzero and cancel analytically.
inline GreenKuboResult green_kubo_shifted(const StochasticKernel& P, const Measure& pi,
                                          const Observable& f, const Observable& u,
                                          const Observable& g) {
    detail::require_aperiodic(P, "green_kubo_shifted");
    require_centered(pi, f.values, "green_kubo_shifted: f");
    require_centered(pi, g.values, "green_kubo_shifted: g");
    auto ctx = detail::make_context(P, pi);
    VectorXd u0 = u.values;
    u0.array() -= ctx.pi.dot(u.values);  // coboundaries ignore constants
    const VectorXd& fv = f.values;
    const VectorXd& gv = g.values;

    VectorXd Zg = ctx.Z * gv, Zf = ctx.Z * fv, Zu = ctx.Z * u0;
    double lag0 = ctx.dot(fv, gv) + ctx.dot(ctx.P * u0 - u0, gv);
    double f_first = ctx.dot(fv, Zg - gv) + ctx.dot(u0, Zg) - ctx.dot(u0, Zg - gv);
    double g_first = ctx.dot(gv, Zf - fv) + ctx.dot(gv, Zu - u0 - ctx.P * u0) -
                     ctx.dot(gv, Zu - u0);
    GreenKuboResult r;
    r.value = lag0 + f_first + g_first;
    r.method = GkMethod::resolvent;
    return r;
}

// sigma^2 of the pure path coboundary against itself; zero up to rounding.
inline double green_kubo_coboundary_diag(const StochasticKernel& P, const Measure& pi,
                                         const Observable& u) {
    detail::require_aperiodic(P, "green_kubo_coboundary_diag");
    auto ctx = detail::make_context(P, pi);
    VectorXd u0 = u.values;
    u0.array() -= ctx.pi.dot(u.values);
    VectorXd Zu = ctx.Z * u0;
    VectorXd Pu = ctx.P * u0;
    double lag0 = 2.0 * ctx.dot(u0, u0) - 2.0 * ctx.dot(u0, Pu);
    // sum_{n>=1} [2<u,P^n u> - <u,P^{n+1}u> - <u,P^{n-1}u>]
    double tail = 2.0 * ctx.dot(u0, Zu - u0) - ctx.dot(u0, Zu - u0 - Pu) - ctx.dot(u0, Zu);
    return lag0 + 2.0 * tail;
}

// Telescoping partial sums of the coboundary correlation series. Both return
// the partial sum, its closed form, and the gap; the identities are exact at
// every horizon.
struct TelescopingCheck {
    double partial_sum = 0.0;
    double closed_form = 0.0;
    double gap = 0.0;
};

// sum_{n=0}^{N} of the correlations of (u one step ahead minus u) at time 0
// against g at time n;  closed form <g, Pu> - <u, P^N g>.
inline TelescopingCheck telescoping_forward(const StochasticKernel& P, const Measure& pi,
                                            const Observable& g, const Observable& u, int N) {
    VectorXd piv = pi.weights / pi.mass();
    auto dot = [&piv](const VectorXd& a, const VectorXd& b) {
        return (piv.array() * a.array() * b.array()).sum();
    };
    TelescopingCheck out;
    VectorXd Png = g.values;  // P^n g, n = 0
    out.partial_sum = dot(g.values, P.rows * u.values) - dot(u.values, g.values);
    for (int n = 1; n <= N; ++n) {
        VectorXd prev = Png;
        Png = P.rows * Png;
        out.partial_sum += dot(u.values, prev) - dot(u.values, Png);
    }
    out.closed_form = dot(g.values, P.rows * u.values) - dot(u.values, Png);
    out.gap = std::abs(out.partial_sum - out.closed_form);
    return out;
}

// sum_{n=0}^{N} of the correlations of g at time 0 against the coboundary at
// time n;  closed form <g, P^{N+1} u> - <g, u>.
inline TelescopingCheck telescoping_backward(const StochasticKernel& P, const Measure& pi,
                                             const Observable& g, const Observable& u, int N) {
    VectorXd piv = pi.weights / pi.mass();
    auto dot = [&piv](const VectorXd& a, const VectorXd& b) {
        return (piv.array() * a.array() * b.array()).sum();
    };
    TelescopingCheck out;
    VectorXd Pnu = u.values;  // P^n u
    out.partial_sum = 0.0;
    for (int n = 0; n <= N; ++n) {
        VectorXd next = P.rows * Pnu;
        out.partial_sum += dot(g.values, next) - dot(g.values, Pnu);
        Pnu = next;
    }
    out.closed_form = dot(g.values, Pnu) - dot(g.values, u.values);
    out.gap = std::abs(out.partial_sum - out.closed_form);
    return out;
}

// --- tau^3 -------------------------------------------------------------------

// f (x) g := fg - H * integral(fg dm), the centering product used by the
// degree-3 analysis; requires H of unit m-integral.
inline Observable boxtimes(const Observable& f, const Observable& g, const Observable& H,
                           const Measure& m) {
    double hm = m.weights.dot(H.values);
    if (std::abs(hm - 1.0) > 1e-10)
        throw Error(ErrorCode::h_not_unit_mass, "integral of H = " + std::to_string(hm));
    double fg = m.weights.dot((f.values.array() * g.values.array()).matrix());
    Observable out;
    out.values = (f.values.array() * g.values.array()).matrix() - fg * H.values;
    out.centered = true;
    return out;
}

namespace detail {

// The four term families of the degree-3 form for one ordering (f, g, h).
// Double sums fold exactly: centered outer factors kill the Perron direction,
// so sum_{n>=1} P^n f = (Z-I) f and sum_{m>=1} L^m h = (ZL-I) h.
struct Tau3Terms {
    double a0, a1_1, a2_1, a3_11;  // n,m >= 1 family (Definition form)
    double a1_0, a2_0, a3_00;      // n,m >= 0 family (shifted-index form)
};

inline Tau3Terms tau3_terms(const GkContext& ctx, const VectorXd& f, const VectorXd& g,
                            const VectorXd& h) {
    Tau3Terms t{};
    VectorXd ZLh = ctx.ZL * h;
    VectorXd Zf_m_f = ctx.Z * f - f;   // sum_{n>=1} P^n f
    VectorXd Zf = ctx.Z * f;           // sum_{n>=0} P^n f
    VectorXd fg = (f.array() * g.array()).matrix();
    VectorXd gh = (g.array() * h.array()).matrix();

    t.a0 = ctx.dot(fg, h);
    t.a1_1 = ctx.dot(fg, ZLh - h);
    t.a2_1 = ctx.dot(Zf_m_f, gh);
    t.a3_11 = ctx.dot(Zf_m_f, (g.array() * (ZLh - h).array()).matrix());
    t.a1_0 = ctx.dot(fg, ZLh);
    t.a2_0 = ctx.dot(Zf, gh);
    t.a3_00 = ctx.dot(Zf, (g.array() * ZLh.array()).matrix());
    return t;
}

inline std::array<std::array<int, 3>, 6> permutations3() {
    return {{{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
}

inline GkContext tau3_context(const StochasticKernel& P, const Measure& pi, const Observable& f,
                              const Observable& g, const Observable& h, const char* who) {
    require_aperiodic(P, who);
    require_centered(pi, f.values, who);
    require_centered(pi, g.values, who);
    require_centered(pi, h.values, who);
    return make_context(P, pi);
}

}  // namespace detail

// Definition form: sum over all orderings of
//   (1/6) A0 + (1/2) A_{1,1} + (1/2) A_{2,1} + A_{3,1,1}.
inline Tau3Result tau3_series(const StochasticKernel& P, const Measure& pi, const Observable& f,
                              const Observable& g, const Observable& h, double /*tolerance*/ = 1e-9) {
    auto ctx = detail::tau3_context(P, pi, f, g, h, "tau3_series");
    const VectorXd* obs[3] = {&f.values, &g.values, &h.values};
    Tau3Result r;
    r.method = GkMethod::series;
    for (const auto& p : detail::permutations3()) {
        auto t = detail::tau3_terms(ctx, *obs[p[0]], *obs[p[1]], *obs[p[2]]);
        r.value += t.a0 / 6.0 + t.a1_1 / 2.0 + t.a2_1 / 2.0 + t.a3_11;
    }
    return r;
}

// Shifted-index form (sums from zero, signs flipped):
//   (1/6) A0 - (1/2) A_{1,0} - (1/2) A_{2,0} + A_{3,0,0}.
inline Tau3Result tau3_shifted_form(const StochasticKernel& P, const Measure& pi,
                                    const Observable& f, const Observable& g, const Observable& h,
                                    double /*tolerance*/ = 1e-9) {
    auto ctx = detail::tau3_context(P, pi, f, g, h, "tau3_shifted_form");
    const VectorXd* obs[3] = {&f.values, &g.values, &h.values};
    Tau3Result r;
    r.method = GkMethod::series;
    for (const auto& p : detail::permutations3()) {
        auto t = detail::tau3_terms(ctx, *obs[p[0]], *obs[p[1]], *obs[p[2]]);
        r.value += t.a0 / 6.0 - t.a1_0 / 2.0 - t.a2_0 / 2.0 + t.a3_00;
    }
    return r;
}

// tau^3 through the bilinear form: sigma^2(fg, h) plus the lag-product series
//   sum_{n>=1} [sigma^2(f * g after n steps, h) + sigma^2(g * f after n steps, h)].
// The lag products live on state pairs; their correlations against h are
// evaluated as matrix expressions and the outer sum is truncated with a
// reported geometric bound.
inline Tau3Result tau3_via_sigma(const StochasticKernel& P, const Measure& pi, const Observable& f,
                                 const Observable& g, const Observable& h,
                                 double tolerance = 1e-10) {
    auto ctx = detail::tau3_context(P, pi, f, g, h, "tau3_via_sigma");
    const VectorXd& fv = f.values;
    const VectorXd& gv = g.values;
    const VectorXd& hv = h.values;

    VectorXd wZh = ctx.Z * hv - hv;    // sum_{k>=1} P^k h
    VectorXd uZh = ctx.ZL * hv - hv;   // sum_{k>=1} L^k h

    // n = 0: sigma^2(fg, h)
    VectorXd fg = (fv.array() * gv.array()).matrix();
    double value = ctx.dot(fg, hv) + ctx.dot(fg, wZh) + ctx.dot(uZh, fg);

    double rho2 = detail::second_eigenvalue_modulus(P.rows);
    const long N_max = 4000;
    double rho_for_n = std::max(rho2, 1e-6);
    long horizon = 64;
    if (rho2 > 0.0 && rho2 < 1.0) {
        horizon = static_cast<long>(std::ceil(std::log(tolerance * (1.0 - rho2)) / std::log(rho2)));
        horizon = std::min<long>(std::max<long>(horizon, 24), N_max);
    }
    std::vector<VectorXd> Pg(static_cast<size_t>(horizon) + 1), Pf(static_cast<size_t>(horizon) + 1),
        Lf(static_cast<size_t>(horizon) + 1), Lg(static_cast<size_t>(horizon) + 1);
    Pg[0] = gv;
    Pf[0] = fv;
    Lf[0] = fv;
    Lg[0] = gv;
    for (long k = 1; k <= horizon; ++k) {
        Pg[static_cast<size_t>(k)] = ctx.P * Pg[static_cast<size_t>(k - 1)];
        Pf[static_cast<size_t>(k)] = ctx.P * Pf[static_cast<size_t>(k - 1)];
        Lf[static_cast<size_t>(k)] = ctx.L * Lf[static_cast<size_t>(k - 1)];
        Lg[static_cast<size_t>(k)] = ctx.L * Lg[static_cast<size_t>(k - 1)];
    }

    double amp = 0.0;
    for (long m = 1; m <= horizon; ++m) {
        const VectorXd& Pmg = Pg[static_cast<size_t>(m)];
        const VectorXd& Pmf = Pf[static_cast<size_t>(m)];
        // sigma^2(f * g after m, h)
        double term = ctx.dot((fv.array() * hv.array()).matrix(), Pmg);
        for (long k = 1; k <= m; ++k)
            term += ctx.dot(Lf[static_cast<size_t>(k)],
                            (hv.array() * Pg[static_cast<size_t>(m - k)].array()).matrix());
        term += ctx.dot(Lf[static_cast<size_t>(m)], (gv.array() * wZh.array()).matrix());
        term += ctx.dot(uZh, (fv.array() * Pmg.array()).matrix());
        // sigma^2(g * f after m, h)
        double term2 = ctx.dot((gv.array() * hv.array()).matrix(), Pmf);
        for (long k = 1; k <= m; ++k)
            term2 += ctx.dot(Lg[static_cast<size_t>(k)],
                             (hv.array() * Pf[static_cast<size_t>(m - k)].array()).matrix());
        term2 += ctx.dot(Lg[static_cast<size_t>(m)], (fv.array() * wZh.array()).matrix());
        term2 += ctx.dot(uZh, (gv.array() * Pmf.array()).matrix());

        value += term + term2;
        if (rho2 > 0.0)
            amp = std::max(amp, (std::abs(term) + std::abs(term2)) /
                                    std::pow(rho_for_n, static_cast<double>(m)));
    }

    Tau3Result r;
    r.value = value;
    r.method = GkMethod::series;
    r.truncation_error_bound =
        rho2 > 0.0 ? amp * std::pow(rho_for_n, static_cast<double>(horizon + 1)) / (1.0 - rho_for_n)
                   : 0.0;
    return r;
}

// --- quasi-invariance of tau^3 under induction (single inducing state) -------

// With one inducing state the excursion sums are i.i.d., so the induced
// degree-3 form is pi(w) E[S^3] and the correction reduces to
//   -3 sigma^2(B; Sigma f, Sigma f) * sigma^2(B; Sigma f, phi),
// with the unit-mass excursion weight H equal to the return time.
struct Tau3InvarianceReport {
    double lhs = 0.0;          // tau^3 on the full chain
    double tau3_induced = 0.0; // pi(w) E[S^3]
    double correction = 0.0;
    double rhs = 0.0;
    double gap = 0.0;
    bool pass = false;
};

inline Tau3InvarianceReport tau3_quasi_invariance_check(const StochasticKernel& P,
                                                        const Measure& pi, const SubsetMask& mask,
                                                        const Observable& f) {
    if (mask.count() != 1)
        throw Error(ErrorCode::subset_not_singleton, "tau3_quasi_invariance_check");
    require_centered(pi, f.values, "tau3_quasi_invariance_check: f");

    Tau3InvarianceReport rep;
    rep.lhs = tau3_series(P, pi, f, f, f).value;

    ExcursionMoments mom = excursion_moments(P, pi, mask, f);
    auto S = mask.indices();
    double piw = pi.weights(S[0]) / pi.mass();
    rep.tau3_induced = piw * mom.m3(0);

    double sigma2_B = piw * mom.m2(0);
    Observable ones{VectorXd::Ones(P.size()), false};
    double sigma2_B_phi = piw * excursion_cross_moment(P, mask, f, ones)(0);
    rep.correction = -3.0 * sigma2_B * sigma2_B_phi;
    rep.rhs = rep.tau3_induced + rep.correction;
    rep.gap = std::abs(rep.lhs - rep.rhs);
    rep.pass = rep.gap <= 1e-9;
    return rep;
}

}  // namespace chainpot

#endif  // CHAINPOT_INVARIANTS_HPP
