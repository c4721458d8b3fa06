#ifndef CHAINPOT_RANDOM_FIXTURES_HPP
#define CHAINPOT_RANDOM_FIXTURES_HPP

#include "chainpot/markov.hpp"
#include "chainpot/types.hpp"

#include <random>

// Seeded generators for randomized property trials. Strictly positive rows
// keep every draw irreducible and aperiodic.

namespace chainpot {

inline StochasticKernel random_chain(std::mt19937_64& rng, int n, double floor = 0.02) {
    std::exponential_distribution<double> exp1(1.0);
    MatrixXd rows(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) rows(i, j) = floor + exp1(rng);
        rows.row(i) /= rows.row(i).sum();
    }
    return validate_kernel(std::move(rows));
}

inline SubsetMask random_subset(std::mt19937_64& rng, int n, int k) {
    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<size_t>(k));
    return SubsetMask::of_indices(n, idx);
}

// Centered observable with sup norm 1 (unless it degenerates to zero).
inline Observable random_centered_observable(std::mt19937_64& rng, const Measure& pi) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    VectorXd v(pi.weights.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = u(rng);
    Observable c = center(pi, v);
    double m = c.values.cwiseAbs().maxCoeff();
    if (m > 1e-12) c.values /= m;
    return c;
}

// Centered observable supported on the subset; needs |subset| >= 2 to be
// nonzero. Centering happens within the subset against the restricted weights.
inline Observable random_centered_supported(std::mt19937_64& rng, const Measure& pi,
                                            const SubsetMask& mask) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto S = mask.indices();
    VectorXd v = VectorXd::Zero(pi.weights.size());
    if (S.size() >= 2) {
        double wsum = 0.0, integral = 0.0;
        for (int i : S) {
            v(i) = u(rng);
            wsum += pi.weights(i);
            integral += pi.weights(i) * v(i);
        }
        for (int i : S) v(i) -= integral / wsum;
        double m = v.cwiseAbs().maxCoeff();
        if (m > 1e-12) v /= m;
    }
    Observable out{v, true};
    return out;
}

}  // namespace chainpot

#endif  // CHAINPOT_RANDOM_FIXTURES_HPP
