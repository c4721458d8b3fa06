#ifndef CHAINPOT_LATTICE_HPP
#define CHAINPOT_LATTICE_HPP

#include "chainpot/invariants.hpp"
#include "chainpot/markov.hpp"
#include "chainpot/rng.hpp"
#include "chainpot/trajectory.hpp"
#include "chainpot/types.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <array>
#include <numeric>

// Z^d extensions (d = 1, 2) of a finite driving chain: the walk position
// advances by F(driving state) each step. Return probabilities by exact
// dynamic programming, the potential-kernel series for hitting probabilities,
// an absorbing-solve oracle for d = 1, and Monte Carlo.

namespace chainpot {

using LatticePoint = std::array<int, 2>;  // (x, y); y = 0 in dimension 1

struct LatticeModel {
    StochasticKernel driving;
    std::vector<LatticePoint> steps;  // one step per driving state
    int dim = 1;
};

inline LatticeModel make_lattice_model(StochasticKernel driving, std::vector<LatticePoint> steps,
                                       int dim) {
    if (dim != 1 && dim != 2)
        throw Error(ErrorCode::invalid_argument, "lattice dimension must be 1 or 2");
    if (static_cast<int>(steps.size()) != driving.size())
        throw Error(ErrorCode::invalid_argument, "one lattice step required per driving state");
    require_irreducible(driving, "make_lattice_model");
    if (dim == 1)
        for (auto& s : steps) s[1] = 0;
    return LatticeModel{std::move(driving), std::move(steps), dim};
}

inline int max_step(const LatticeModel& model) {
    int m = 0;
    for (const auto& s : model.steps) m = std::max({m, std::abs(s[0]), std::abs(s[1])});
    return std::max(m, 1);
}

inline void require_centered_walk(const LatticeModel& model, const Measure& pi) {
    for (int axis = 0; axis < model.dim; ++axis) {
        double drift = 0.0;
        for (int i = 0; i < model.driving.size(); ++i)
            drift += pi.weights(i) / pi.mass() * model.steps[static_cast<size_t>(i)][axis];
        if (std::abs(drift) > 1e-12)
            throw Error(ErrorCode::non_centered_walk,
                        "mean drift " + std::to_string(drift) + " on axis " + std::to_string(axis));
    }
}

namespace detail {

// Green-Kubo variance of the step observable, per axis; sizes the DP window.
inline double walk_sigma2(const LatticeModel& model, const Measure& pi) {
    double worst = 1.0;
    for (int axis = 0; axis < model.dim; ++axis) {
        VectorXd F(model.driving.size());
        for (int i = 0; i < model.driving.size(); ++i)
            F(i) = model.steps[static_cast<size_t>(i)][axis];
        Observable Fc = center(pi, F);
        worst = std::max(worst, green_kubo_resolvent(model.driving, pi, Fc, Fc).value);
    }
    return worst;
}

// Exact distribution of (driving state, walk position) advanced step by step.
// The window grows like 10.5 * sqrt(sigma^2 n); mass clipped at the rim is
// accumulated as leak and must stay below 1e-12.
class WalkDistribution {
public:
    WalkDistribution(const LatticeModel& model, const Measure& pi, int radius_cap)
        : model_(model),
          sigma2_(walk_sigma2(model, pi)),
          max_f_(max_step(model)),
          r_max_(radius_cap),
          side_(2 * radius_cap + 1) {
        const size_t cells = static_cast<size_t>(side_) * (model.dim == 2 ? side_ : 1);
        const auto s = static_cast<size_t>(model.driving.size());
        cur_.assign(s, std::vector<double>(cells, 0.0));
        nxt_ = cur_;
        VectorXd piv = pi.weights / pi.mass();
        for (size_t x = 0; x < s; ++x) cur_[x][index(0, 0)] = piv(static_cast<Eigen::Index>(x));
        lo_ = {0, 0};
        hi_ = {0, 0};
    }

    long n() const { return n_; }
    double leak() const { return leak_; }
    int radius_cap() const { return r_max_; }

    // marginal probability P(S_n = q)
    double prob(int qx, int qy = 0) const {
        if (std::abs(qx) > r_max_ || std::abs(qy) > r_max_) return 0.0;
        double p = 0.0;
        for (const auto& plane : cur_) p += plane[index(qx, qy)];
        return p;
    }

    void step() {
        ++n_;
        int grow = static_cast<int>(std::ceil(
                       10.5 * std::sqrt(sigma2_ * static_cast<double>(n_ + 1)))) +
                   32 * max_f_;
        const int r_n = std::min({r_max_, static_cast<int>(std::min<long long>(
                                              static_cast<long long>(n_) * max_f_,
                                              static_cast<long long>(r_max_))),
                                  grow});
        const int s = model_.driving.size();
        const auto& P = model_.driving.rows;

        std::array<int, 2> nlo = {r_max_, r_max_}, nhi = {-r_max_, -r_max_};
        for (auto& plane : nxt_)
            std::fill(plane.begin(), plane.end(), 0.0);

        for (int x = 0; x < s; ++x) {
            const auto& src = cur_[static_cast<size_t>(x)];
            const int dx = model_.steps[static_cast<size_t>(x)][0];
            const int dy = model_.steps[static_cast<size_t>(x)][1];
            const int y_lo = model_.dim == 2 ? lo_[1] : 0;
            const int y_hi = model_.dim == 2 ? hi_[1] : 0;
            for (int qy = y_lo; qy <= y_hi; ++qy) {
                for (int qx = lo_[0]; qx <= hi_[0]; ++qx) {
                    const double v = src[index(qx, qy)];
                    if (v == 0.0) continue;
                    const int tx = qx + dx, ty = qy + dy;
                    if (std::abs(tx) > r_n || std::abs(ty) > r_n) {
                        leak_ += v;
                        continue;
                    }
                    const size_t ti = index(tx, ty);
                    for (int y = 0; y < s; ++y)
                        nxt_[static_cast<size_t>(y)][ti] += v * P(x, y);
                    nlo[0] = std::min(nlo[0], tx);
                    nhi[0] = std::max(nhi[0], tx);
                    nlo[1] = std::min(nlo[1], ty);
                    nhi[1] = std::max(nhi[1], ty);
                }
            }
        }
        cur_.swap(nxt_);
        lo_ = nlo;
        hi_ = nhi;
        if (leak_ > 1e-12)
            throw Error(ErrorCode::window_too_small,
                        "mass leak " + std::to_string(leak_) + " at step " + std::to_string(n_));
    }

private:
    size_t index(int qx, int qy) const {
        const size_t ix = static_cast<size_t>(qx + r_max_);
        if (model_.dim == 1) return ix;
        return static_cast<size_t>(qy + r_max_) * static_cast<size_t>(side_) + ix;
    }

    const LatticeModel& model_;
    double sigma2_;
    int max_f_;
    int r_max_;
    int side_;
    long n_ = 0;
    double leak_ = 0.0;
    std::array<int, 2> lo_{}, hi_{};
    std::vector<std::vector<double>> cur_, nxt_;
};

inline int series_radius(const LatticeModel& model, const Measure& pi, long n_max, int target) {
    double sigma2 = walk_sigma2(model, pi);
    int mf = max_step(model);
    long long growth = static_cast<long long>(
                           std::ceil(10.5 * std::sqrt(sigma2 * static_cast<double>(n_max + 1)))) +
                       32ll * mf;
    long long cap = std::min<long long>(growth, static_cast<long long>(n_max) * mf);
    cap = std::max<long long>(cap, 2ll * std::abs(target) + 8);
    return static_cast<int>(cap);
}

}  // namespace detail

// --- return probabilities ---------------------------------------------------

struct ReturnProbabilityTable {
    long n_max = 0;
    int radius = 0;
    int dim = 1;
    // slice n, flattened window; marginal over driving states
    std::vector<std::vector<double>> slices;
    double leak = 0.0;

    double prob(long n, int qx, int qy = 0) const {
        const int side = 2 * radius + 1;
        if (std::abs(qx) > radius || std::abs(qy) > radius) return 0.0;
        size_t idx = dim == 1 ? static_cast<size_t>(qx + radius)
                              : static_cast<size_t>(qy + radius) * static_cast<size_t>(side) +
                                    static_cast<size_t>(qx + radius);
        return slices[static_cast<size_t>(n)][idx];
    }
};

// Exact DP table of P(S_n = q) for n = 0..n_max over a window.
// `window_radius` <= 0 sizes the window automatically.
inline ReturnProbabilityTable return_probabilities(const LatticeModel& model, long n_max,
                                                   int window_radius = 0) {
    Measure pi = stationary_measure(model.driving);
    int radius = window_radius > 0 ? window_radius : detail::series_radius(model, pi, n_max, 0);
    const int side = 2 * radius + 1;
    const size_t cells = static_cast<size_t>(side) * (model.dim == 2 ? side : 1);
    if (static_cast<double>(cells) * static_cast<double>(n_max + 1) > 2.5e8)
        throw Error(ErrorCode::invalid_argument,
                    "return_probabilities table would be too large; use potential_series");

    detail::WalkDistribution walk(model, pi, radius);
    ReturnProbabilityTable table;
    table.n_max = n_max;
    table.radius = radius;
    table.dim = model.dim;
    table.slices.reserve(static_cast<size_t>(n_max) + 1);
    for (long n = 0;; ++n) {
        std::vector<double> slice(cells, 0.0);
        if (model.dim == 1) {
            for (int q = -radius; q <= radius; ++q)
                slice[static_cast<size_t>(q + radius)] = walk.prob(q, 0);
        } else {
            for (int qy = -radius; qy <= radius; ++qy)
                for (int qx = -radius; qx <= radius; ++qx)
                    slice[static_cast<size_t>(qy + radius) * static_cast<size_t>(side) +
                          static_cast<size_t>(qx + radius)] = walk.prob(qx, qy);
        }
        table.slices.push_back(std::move(slice));
        if (n == n_max) break;
        walk.step();
    }
    table.leak = walk.leak();
    return table;
}

// --- potential-kernel series -------------------------------------------------

// Partial sums of sum_n [2 P(S_n = 0) - P(S_n = p) - P(S_n = -p)], the
// potential-kernel combination controlling the probability of hitting p
// before returning to 0. The raw partial sum converges like n^{-d/2 + 1},
// so a local-CLT tail fit (a m^{-d/2-1} + b m^{-d/2-2} on period-2 blocks)
// is extrapolated past the horizon and reported separately, with the spread
// between two fitting decades as its uncertainty. Nothing is folded silently:
// `series_value` is the raw sum, `corrected` = series_value + tail_estimate.
struct PotentialSeriesResult {
    double series_value = 0.0;
    double tail_estimate = 0.0;
    double tail_bound = 0.0;
    double corrected = 0.0;
    double reciprocal = 0.0;       // 1 / corrected
    double reciprocal_bound = 0.0; // tail_bound propagated through the reciprocal
    long terms = 0;
    double leak = 0.0;
};

namespace detail {

// Least-squares fit u_m = a m^{-s} + b m^{-s-1} on block-summed terms.
inline std::array<double, 2> fit_power_tail(const std::vector<double>& u, size_t lo, size_t hi,
                                            double s) {
    double a11 = 0, a12 = 0, a22 = 0, b1 = 0, b2 = 0;
    for (size_t m = lo; m < hi; ++m) {
        double x1 = std::pow(static_cast<double>(m + 1), -s);
        double x2 = std::pow(static_cast<double>(m + 1), -s - 1.0);
        a11 += x1 * x1;
        a12 += x1 * x2;
        a22 += x2 * x2;
        b1 += x1 * u[m];
        b2 += x2 * u[m];
    }
    double det = a11 * a22 - a12 * a12;
    if (std::abs(det) < 1e-300) return {0.0, 0.0};
    return {(b1 * a22 - b2 * a12) / det, (a11 * b2 - a12 * b1) / det};
}

inline double power_tail_sum(double coeff, double s, double from_m) {
    // Euler-Maclaurin: sum_{m > M} m^{-s} ~ (M + 1/2)^{1-s} / (s - 1)
    return coeff * std::pow(from_m + 0.5, 1.0 - s) / (s - 1.0);
}

}  // namespace detail

// One DP sweep can serve several targets; probabilities near the origin are
// all read off the same slice.
inline std::vector<PotentialSeriesResult> potential_series_multi(const LatticeModel& model,
                                                                 std::vector<LatticePoint> targets,
                                                                 double tolerance = 0.0,
                                                                 long n_max = 100000) {
    Measure pi = stationary_measure(model.driving);
    require_centered_walk(model, pi);
    if (targets.empty())
        throw Error(ErrorCode::invalid_argument, "potential_series: no targets");
    int reach = 0;
    for (auto& p : targets) {
        if (model.dim == 1) p[1] = 0;
        if (p[0] == 0 && p[1] == 0)
            throw Error(ErrorCode::zero_target, "potential_series: target is the origin");
        reach = std::max({reach, std::abs(p[0]), std::abs(p[1])});
    }

    int radius = detail::series_radius(model, pi, n_max, reach);
    detail::WalkDistribution walk(model, pi, radius);
    const size_t T = targets.size();

    std::vector<std::vector<double>> terms(T);
    std::vector<double> sums(T, 0.0);
    for (auto& v : terms) v.reserve(static_cast<size_t>(n_max) + 8);
    long period = 0;  // gcd of return times of the walk to 0; 1 if aperiodic
    auto record = [&] {
        double p0 = walk.prob(0, 0);
        for (size_t i = 0; i < T; ++i) {
            double t = 2.0 * p0 - walk.prob(targets[i][0], targets[i][1]) -
                       walk.prob(-targets[i][0], -targets[i][1]);
            terms[i].push_back(t);
            sums[i] += t;
        }
        return p0;
    };
    for (long n = 0; n <= n_max; ++n) {
        if (n > 0) walk.step();
        double p0 = record();
        if (n > 0 && n <= 720 && p0 > 1e-14) period = std::gcd(period, n);
        if (tolerance > 0.0 && n >= 64 && period > 0 && n % period == period - 1) {
            bool all_small = true;
            for (size_t i = 0; i < T && all_small; ++i) {
                double block = 0.0;
                for (long k = 0; k < period; ++k)
                    block += terms[i][terms[i].size() - 1 - static_cast<size_t>(k)];
                if (std::abs(block) >= tolerance) all_small = false;
            }
            if (all_small) break;
        }
    }
    if (period <= 0) period = 1;
    while (terms[0].size() % static_cast<size_t>(period) != 0) {
        // complete the last lattice-period block so the fitted tail starts
        // exactly where the sum stops
        walk.step();
        record();
    }

    const double s_exp = model.dim == 1 ? 1.5 : 2.0;
    std::vector<PotentialSeriesResult> results(T);
    for (size_t i = 0; i < T; ++i) {
        PotentialSeriesResult& out = results[i];
        out.terms = static_cast<long>(terms[i].size());
        out.series_value = sums[i];
        out.leak = walk.leak();

        // blocks over one lattice period absorb parity; fit the local-CLT decay
        std::vector<double> blocks;
        for (size_t j = 0; j + static_cast<size_t>(period) <= terms[i].size();
             j += static_cast<size_t>(period)) {
            double b = 0.0;
            for (long k = 0; k < period; ++k) b += terms[i][j + static_cast<size_t>(k)];
            blocks.push_back(b);
        }
        const size_t M = blocks.size();
        if (M >= 64) {
            auto fit1 = detail::fit_power_tail(blocks, M - M / 10, M, s_exp);
            auto fit2 = detail::fit_power_tail(blocks, M - M / 4, M - M / 10, s_exp);
            double est1 = detail::power_tail_sum(fit1[0], s_exp, static_cast<double>(M)) +
                          detail::power_tail_sum(fit1[1], s_exp + 1.0, static_cast<double>(M));
            double est2 = detail::power_tail_sum(fit2[0], s_exp, static_cast<double>(M)) +
                          detail::power_tail_sum(fit2[1], s_exp + 1.0, static_cast<double>(M));
            out.tail_estimate = est1;
            out.tail_bound = 3.0 * std::abs(est1 - est2) + 1e-9 * std::abs(est1);
        } else {
            out.tail_estimate = 0.0;
            out.tail_bound = std::abs(blocks.empty() ? sums[i] : blocks.back()) * 4.0;
        }

        out.corrected = out.series_value + out.tail_estimate;
        if (std::abs(out.corrected) < 1e-12)
            throw Error(ErrorCode::invalid_argument, "potential series sums to zero");
        out.reciprocal = 1.0 / out.corrected;
        out.reciprocal_bound = out.tail_bound / (out.corrected * out.corrected) + 1e-12;
    }
    return results;
}

inline PotentialSeriesResult potential_series(const LatticeModel& model, LatticePoint p,
                                              double tolerance = 0.0, long n_max = 100000) {
    return potential_series_multi(model, {p}, tolerance, n_max).front();
}

// --- exact hitting probability (d = 1) ---------------------------------------

// Probability that the walk, started at level 0 with the driving state drawn
// from pi, hits level p before returning to level 0. Absorbing linear solve
// on levels [-R, R]; levels beyond the box absorb at value 0, and the
// difference against the R/2 solve is reported as the truncation sensitivity.
struct HittingExactResult {
    double probability = 0.0;
    double r_sensitivity = 0.0;
};

namespace detail {

inline double hitting_solve(const LatticeModel& model, const Measure& pi, int p, int R) {
    const int s = model.driving.size();
    const int side = 2 * R + 1;
    std::vector<int> id(static_cast<size_t>(s) * static_cast<size_t>(side), -1);
    auto cell = [&](int x, int level) {
        return static_cast<size_t>(x) * static_cast<size_t>(side) +
               static_cast<size_t>(level + R);
    };
    int unknowns = 0;
    for (int x = 0; x < s; ++x)
        for (int level = -R; level <= R; ++level)
            if (level != 0 && level != p) id[cell(x, level)] = unknowns++;

    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(unknowns);
    const auto& P = model.driving.rows;
    for (int x = 0; x < s; ++x) {
        const int dx = model.steps[static_cast<size_t>(x)][0];
        for (int level = -R; level <= R; ++level) {
            int row = id[cell(x, level)];
            if (row < 0) continue;
            trip.emplace_back(row, row, 1.0);
            const int next = level + dx;
            if (next == p) {
                rhs(row) += 1.0;  // hit regardless of the next driving state
                continue;
            }
            if (next == 0 || std::abs(next) > R) continue;  // returned / truncated
            for (int y = 0; y < s; ++y) {
                if (P(x, y) == 0.0) continue;
                trip.emplace_back(row, id[cell(y, next)], -P(x, y));
            }
        }
    }
    Eigen::SparseMatrix<double> A(unknowns, unknowns);
    A.setFromTriplets(trip.begin(), trip.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> solver;
    solver.compute(A);
    if (solver.info() != Eigen::Success)
        throw Error(ErrorCode::invalid_argument, "hitting solve failed to factorize");
    Eigen::VectorXd h = solver.solve(rhs);

    double answer = 0.0;
    VectorXd piv = pi.weights / pi.mass();
    for (int x = 0; x < s; ++x) {
        const int next = model.steps[static_cast<size_t>(x)][0];
        double from_x = 0.0;
        if (next == p) {
            from_x = 1.0;
        } else if (next == 0 || std::abs(next) > R) {
            from_x = 0.0;
        } else {
            for (int y = 0; y < s; ++y)
                if (P(x, y) != 0.0) from_x += P(x, y) * h(id[cell(y, next)]);
        }
        answer += piv(x) * from_x;
    }
    return answer;
}

}  // namespace detail

inline HittingExactResult hitting_exact(const LatticeModel& model, int p, int R,
                                        double sensitivity_tol = 1e-6) {
    if (model.dim != 1)
        throw Error(ErrorCode::invalid_argument, "hitting_exact supports dimension 1 only");
    if (p == 0) throw Error(ErrorCode::zero_target, "hitting_exact: target is the origin");
    Measure pi = stationary_measure(model.driving);
    require_centered_walk(model, pi);
    if (R < 4 * std::abs(p) || R < 8)
        throw Error(ErrorCode::radius_too_small, "need R >= max(8, 4|p|)");
    HittingExactResult out;
    out.probability = detail::hitting_solve(model, pi, p, R);
    double half = detail::hitting_solve(model, pi, p, std::max(R / 2, 2 * std::abs(p) + 2));
    out.r_sensitivity = std::abs(out.probability - half);
    if (out.r_sensitivity > sensitivity_tol)
        throw Error(ErrorCode::radius_too_small,
                    "R-sensitivity " + std::to_string(out.r_sensitivity) + " exceeds " +
                        std::to_string(sensitivity_tol));
    return out;
}

// --- Monte Carlo hitting probability ------------------------------------------

struct HittingMcResult {
    EmpiricalEstimate est;   // fraction of trajectories hitting p before re-hitting 0
    long censored = 0;       // trajectories still running at the step cap (counted as misses)
};

inline HittingMcResult hitting_mc(const LatticeModel& model, LatticePoint p, const SimConfig& cfg,
                                  long step_cap) {
    validate(cfg);
    if (step_cap < 1) throw Error(ErrorCode::invalid_argument, "step_cap must be >= 1");
    if (model.dim == 1) p[1] = 0;
    if (p[0] == 0 && p[1] == 0)
        throw Error(ErrorCode::zero_target, "hitting_mc: target is the origin");
    Measure pi = stationary_measure(model.driving);
    PathSampler sampler(model.driving, pi);

    std::vector<double> hits(static_cast<size_t>(cfg.trajectories), 0.0);
    std::vector<char> censored(static_cast<size_t>(cfg.trajectories), 0);
    detail::parallel_for_trajectories(cfg.trajectories, cfg.workers, [&](long t) {
        int x = sampler.initial_state(cfg.seed, static_cast<std::uint64_t>(t));
        long lx = 0, ly = 0;
        for (long n = 1; n <= step_cap; ++n) {
            const auto& st = model.steps[static_cast<size_t>(x)];
            lx += st[0];
            ly += st[1];
            x = sampler.step(cfg.seed, static_cast<std::uint64_t>(t),
                             static_cast<std::uint64_t>(n), x);
            if (lx == p[0] && ly == p[1]) {
                hits[static_cast<size_t>(t)] = 1.0;
                return;
            }
            if (lx == 0 && ly == 0) return;
        }
        censored[static_cast<size_t>(t)] = 1;
    });
    HittingMcResult out;
    out.est = detail::reduce(hits);
    for (char c : censored) out.censored += c;
    return out;
}

}  // namespace chainpot

#endif  // CHAINPOT_LATTICE_HPP
