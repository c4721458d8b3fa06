#ifndef CHAINPOT_TRAJECTORY_HPP
#define CHAINPOT_TRAJECTORY_HPP

#include "chainpot/markov.hpp"
#include "chainpot/rng.hpp"
#include "chainpot/types.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <thread>

// Seeded Monte Carlo over chain trajectories: Birkhoff sums, induced-process
// extraction and Hopf ratios. All estimators are bitwise reproducible for a
// fixed (seed, config) regardless of worker count: trajectory k draws from
// RNG stream k, per-trajectory results land in a preallocated slot, and the
// final reduction runs in trajectory order on one thread.

namespace chainpot {

struct SimConfig {
    std::uint64_t seed = 0;
    long trajectories = 1;
    long horizon = 1;    // steps per trajectory (burn_in of them discarded);
                         // for excursion estimators: excursions per trajectory
    long burn_in = 0;
    int workers = 1;
};

inline void validate(const SimConfig& cfg) {
    if (cfg.trajectories < 1)
        throw Error(ErrorCode::invalid_argument, "trajectories must be >= 1");
    if (cfg.burn_in < 0 || cfg.horizon <= cfg.burn_in)
        throw Error(ErrorCode::invalid_argument, "need horizon > burn_in >= 0");
    if (cfg.workers < 1) throw Error(ErrorCode::invalid_argument, "workers must be >= 1");
}

struct EmpiricalEstimate {
    double mean = 0.0;
    double variance = 0.0;
    double stderr_ = 0.0;  // sqrt(variance / n)
    long n = 0;
};

namespace detail {

// cdf(i, j) = sum_{k<=j} P(i, k); sampling walks the row once.
inline MatrixXd row_cdfs(const MatrixXd& P) {
    MatrixXd cdf = P;
    for (Eigen::Index i = 0; i < P.rows(); ++i)
        for (Eigen::Index j = 1; j < P.cols(); ++j) cdf(i, j) += cdf(i, j - 1);
    return cdf;
}

inline int sample_cdf_row(const MatrixXd& cdf, int row, double u) {
    const Eigen::Index n = cdf.cols();
    for (Eigen::Index j = 0; j < n; ++j)
        if (u < cdf(row, j)) return static_cast<int>(j);
    return static_cast<int>(n - 1);
}

inline VectorXd cumulative(const VectorXd& w) {
    VectorXd c = w / w.sum();
    for (Eigen::Index i = 1; i < c.size(); ++i) c(i) += c(i - 1);
    return c;
}

inline int sample_cdf(const VectorXd& cdf, double u) {
    for (Eigen::Index j = 0; j < cdf.size(); ++j)
        if (u < cdf(j)) return static_cast<int>(j);
    return static_cast<int>(cdf.size() - 1);
}

// Run fn(traj) for traj in [0, count), split over workers in blocks.
inline void parallel_for_trajectories(long count, int workers,
                                      const std::function<void(long)>& fn) {
    if (workers <= 1 || count < 2) {
        for (long t = 0; t < count; ++t) fn(t);
        return;
    }
    const int w = static_cast<int>(std::min<long>(workers, count));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(w));
    const long per = (count + w - 1) / w;
    for (int i = 0; i < w; ++i) {
        const long lo = i * per, hi = std::min(count, lo + per);
        pool.emplace_back([lo, hi, &fn] {
            for (long t = lo; t < hi; ++t) fn(t);
        });
    }
    for (auto& th : pool) th.join();
}

// Mean/variance over samples kept in trajectory order; deterministic.
inline EmpiricalEstimate reduce(const std::vector<double>& z) {
    EmpiricalEstimate est;
    est.n = static_cast<long>(z.size());
    if (est.n < 2)
        throw Error(ErrorCode::invalid_argument, "estimate needs at least 2 samples");
    double s = 0.0;
    for (double v : z) s += v;
    est.mean = s / static_cast<double>(est.n);
    double ss = 0.0;
    for (double v : z) ss += (v - est.mean) * (v - est.mean);
    est.variance = ss / static_cast<double>(est.n);
    est.stderr_ = std::sqrt(est.variance / static_cast<double>(est.n));
    return est;
}

}  // namespace detail

// Step stream for one trajectory. Step key 0 draws the initial state; the
// n-th transition consumes key n.
class PathSampler {
public:
    PathSampler(const StochasticKernel& P, const Measure& init)
        : cdf_(detail::row_cdfs(P.rows)), init_cdf_(detail::cumulative(init.weights)) {}

    int initial_state(std::uint64_t seed, std::uint64_t traj) const {
        return detail::sample_cdf(init_cdf_, uniform_01(seed, traj, 0));
    }

    int step(std::uint64_t seed, std::uint64_t traj, std::uint64_t n, int state) const {
        return detail::sample_cdf_row(cdf_, state, uniform_01(seed, traj, n));
    }

private:
    MatrixXd cdf_;
    VectorXd init_cdf_;
};

// Materialized paths (small runs only; estimators below stream instead).
inline std::vector<std::vector<int>> sample_paths(const StochasticKernel& P, const Measure& pi,
                                                  const SimConfig& cfg) {
    validate(cfg);
    PathSampler sampler(P, pi);
    std::vector<std::vector<int>> paths(static_cast<size_t>(cfg.trajectories));
    detail::parallel_for_trajectories(cfg.trajectories, cfg.workers, [&](long t) {
        auto& path = paths[static_cast<size_t>(t)];
        path.resize(static_cast<size_t>(cfg.horizon) + 1);
        int x = sampler.initial_state(cfg.seed, static_cast<std::uint64_t>(t));
        path[0] = x;
        for (long n = 1; n <= cfg.horizon; ++n) {
            x = sampler.step(cfg.seed, static_cast<std::uint64_t>(t),
                             static_cast<std::uint64_t>(n), x);
            path[static_cast<size_t>(n)] = x;
        }
    });
    return paths;
}

// Empirical Var(S_n / sqrt(n)) for the Birkhoff sum of a centered observable,
// sampled across independent stationary trajectories. Reported as the mean of
// the squared normalized sums (their expectation is exactly the variance,
// since the stationary start makes E[S_n] = 0).
inline EmpiricalEstimate birkhoff_variance(const StochasticKernel& P, const Measure& pi,
                                           const Observable& f, const SimConfig& cfg) {
    validate(cfg);
    require_irreducible(P, "birkhoff_variance");
    require_centered(pi, f.values, "birkhoff_variance: f");
    PathSampler sampler(P, pi);
    const long steps = cfg.horizon - cfg.burn_in;
    std::vector<double> z(static_cast<size_t>(cfg.trajectories));
    const int n_states = P.size();
    detail::parallel_for_trajectories(cfg.trajectories, cfg.workers, [&](long t) {
        int x;
        if (cfg.burn_in > 0) {
            x = static_cast<int>(t % n_states);  // arbitrary start, burn-in washes it out
        } else {
            x = sampler.initial_state(cfg.seed, static_cast<std::uint64_t>(t));
        }
        double s = 0.0;
        for (long n = 1; n <= cfg.horizon; ++n) {
            x = sampler.step(cfg.seed, static_cast<std::uint64_t>(t),
                             static_cast<std::uint64_t>(n), x);
            if (n > cfg.burn_in) s += f.values(x);
        }
        double y = s / std::sqrt(static_cast<double>(steps));
        z[static_cast<size_t>(t)] = y * y;
    });
    return detail::reduce(z);
}

// Estimate of the induced Green-Kubo variance sigma^2(B; Sigma f, Sigma f) in
// the unnormalized m|_B convention: excursion sums are cut out of raw paths
// started stationarily on the subset, cfg.horizon of them per trajectory, and
// the squared normalized block sums are rescaled by pi(B).
inline EmpiricalEstimate induced_birkhoff_variance(const StochasticKernel& P, const Measure& pi,
                                                   const SubsetMask& mask, const Observable& f,
                                                   const SimConfig& cfg) {
    validate(cfg);
    require_irreducible(P, "induced_birkhoff_variance");
    require_centered(pi, f.values, "induced_birkhoff_variance: f");
    auto S = mask.indices();
    if (S.empty()) throw Error(ErrorCode::empty_subset, "induced_birkhoff_variance");

    PathSampler sampler(P, pi);
    VectorXd piS = subvector(pi.weights, S);
    Measure start{piS, false};
    VectorXd start_cdf = detail::cumulative(start.weights);
    const double mass_B = piS.sum() / pi.mass();
    const long excursions = cfg.horizon;
    std::vector<double> z(static_cast<size_t>(cfg.trajectories));

    detail::parallel_for_trajectories(cfg.trajectories, cfg.workers, [&](long t) {
        std::uint64_t key = 0;
        int x = S[static_cast<size_t>(detail::sample_cdf(
            start_cdf, uniform_01(cfg.seed, static_cast<std::uint64_t>(t), key++)))];
        double block = 0.0, excursion = f.values(x);
        long done = 0;
        const std::uint64_t cap = 2000000000ull;
        while (done < excursions) {
            if (key > cap)
                throw Error(ErrorCode::invalid_argument, "excursion sampling exceeded step cap");
            x = sampler.step(cfg.seed, static_cast<std::uint64_t>(t), key++, x);
            if (mask.members[static_cast<size_t>(x)]) {
                block += excursion;
                excursion = 0.0;
                ++done;
            }
            excursion += f.values(x);
        }
        double y = block / std::sqrt(static_cast<double>(excursions));
        z[static_cast<size_t>(t)] = y * y * mass_B;
    });
    return detail::reduce(z);
}

// Per-trajectory Hopf ratio (sum of f) / (sum of g) at the horizon; the mean
// estimates integral(f) / integral(g). Trajectories whose denominator stays
// zero are dropped from the sample.
struct HopfEstimate {
    EmpiricalEstimate est;
    long dropped = 0;
};

inline HopfEstimate hopf_ratio(const StochasticKernel& P, const Measure& pi, const Observable& f,
                               const Observable& g, const SimConfig& cfg) {
    validate(cfg);
    require_irreducible(P, "hopf_ratio");
    if (g.values.minCoeff() < 0.0 || pi.weights.dot(g.values) <= 0.0)
        throw Error(ErrorCode::zero_denominator_mass,
                    "hopf_ratio needs g >= 0 with positive mass");
    PathSampler sampler(P, pi);
    std::vector<double> ratios(static_cast<size_t>(cfg.trajectories),
                               std::numeric_limits<double>::quiet_NaN());
    detail::parallel_for_trajectories(cfg.trajectories, cfg.workers, [&](long t) {
        int x = sampler.initial_state(cfg.seed, static_cast<std::uint64_t>(t));
        double num = f.values(x), den = g.values(x);
        for (long n = 1; n < cfg.horizon; ++n) {
            x = sampler.step(cfg.seed, static_cast<std::uint64_t>(t),
                             static_cast<std::uint64_t>(n), x);
            num += f.values(x);
            den += g.values(x);
        }
        if (den > 0.0) ratios[static_cast<size_t>(t)] = num / den;
    });
    std::vector<double> kept;
    kept.reserve(ratios.size());
    long dropped = 0;
    for (double r : ratios) {
        if (std::isnan(r))
            ++dropped;
        else
            kept.push_back(r);
    }
    HopfEstimate out;
    out.est = detail::reduce(kept);
    out.dropped = dropped;
    return out;
}

// Moment-based normality statistics for CLT sanity gates.
struct MomentStats {
    double skewness = 0.0;
    double excess_kurtosis = 0.0;
    long n = 0;
};

inline MomentStats moment_stats(const std::vector<double>& samples) {
    MomentStats st;
    st.n = static_cast<long>(samples.size());
    if (st.n < 4) throw Error(ErrorCode::invalid_argument, "moment_stats needs >= 4 samples");
    double mean = 0.0;
    for (double v : samples) mean += v;
    mean /= static_cast<double>(st.n);
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : samples) {
        double d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= static_cast<double>(st.n);
    m3 /= static_cast<double>(st.n);
    m4 /= static_cast<double>(st.n);
    st.skewness = m3 / std::pow(m2, 1.5);
    st.excess_kurtosis = m4 / (m2 * m2) - 3.0;
    return st;
}

// Normalized Birkhoff sums as raw samples (for the CLT gate).
inline std::vector<double> birkhoff_samples(const StochasticKernel& P, const Measure& pi,
                                            const Observable& f, const SimConfig& cfg) {
    validate(cfg);
    PathSampler sampler(P, pi);
    const long steps = cfg.horizon - cfg.burn_in;
    std::vector<double> y(static_cast<size_t>(cfg.trajectories));
    detail::parallel_for_trajectories(cfg.trajectories, cfg.workers, [&](long t) {
        int x = sampler.initial_state(cfg.seed, static_cast<std::uint64_t>(t));
        double s = 0.0;
        for (long n = 1; n <= cfg.horizon; ++n) {
            x = sampler.step(cfg.seed, static_cast<std::uint64_t>(t),
                             static_cast<std::uint64_t>(n), x);
            if (n > cfg.burn_in) s += f.values(x);
        }
        y[static_cast<size_t>(t)] = s / std::sqrt(static_cast<double>(steps));
    });
    return y;
}

}  // namespace chainpot

#endif  // CHAINPOT_TRAJECTORY_HPP
