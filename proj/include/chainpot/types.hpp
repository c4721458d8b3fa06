#ifndef CHAINPOT_TYPES_HPP
#define CHAINPOT_TYPES_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

// Core value types for finite-state chains: row-stochastic kernels, measures,
// observables and subset masks. All numerical tolerances that define validity
// live here, next to the types they guard.

namespace chainpot {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class ErrorCode {
    non_square,
    negative_entry,
    non_stochastic,
    reducible,
    zero_mass_state,
    empty_subset,
    singular_complement_block,
    not_centered,
    support_violation,
    not_induced_solution,
    weight_positive,
    periodic,
    subset_not_singleton,
    h_not_unit_mass,
    window_too_small,
    non_centered_walk,
    zero_target,
    radius_too_small,
    zero_denominator_mass,
    invalid_argument,
};

inline const char* error_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::non_square: return "NonSquare";
        case ErrorCode::negative_entry: return "NegativeEntry";
        case ErrorCode::non_stochastic: return "NonStochastic";
        case ErrorCode::reducible: return "Reducible";
        case ErrorCode::zero_mass_state: return "ZeroMassState";
        case ErrorCode::empty_subset: return "EmptySubset";
        case ErrorCode::singular_complement_block: return "SingularComplementBlock";
        case ErrorCode::not_centered: return "NotCentered";
        case ErrorCode::support_violation: return "SupportViolation";
        case ErrorCode::not_induced_solution: return "NotInducedSolution";
        case ErrorCode::weight_positive: return "WeightPositive";
        case ErrorCode::periodic: return "Periodic";
        case ErrorCode::subset_not_singleton: return "SubsetNotSingleton";
        case ErrorCode::h_not_unit_mass: return "HNotUnitMass";
        case ErrorCode::window_too_small: return "WindowTooSmall";
        case ErrorCode::non_centered_walk: return "NonCentered";
        case ErrorCode::zero_target: return "ZeroTarget";
        case ErrorCode::radius_too_small: return "RadiusTooSmall";
        case ErrorCode::zero_denominator_mass: return "ZeroDenominatorMass";
        case ErrorCode::invalid_argument: return "InvalidArgument";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}
    ErrorCode code() const { return code_; }
    const char* name() const { return error_name(code_); }

private:
    ErrorCode code_;
};

// Row-stochastic transition matrix with labelled states.
// rows(i, j) = P(X_{t+1} = j | X_t = i).
struct StochasticKernel {
    std::vector<std::string> states;
    MatrixXd rows;

    int size() const { return static_cast<int>(rows.rows()); }

    int index_of(const std::string& label) const {
        for (int i = 0; i < size(); ++i)
            if (states[i] == label) return i;
        throw Error(ErrorCode::invalid_argument, "unknown state label '" + label + "'");
    }
};

// Nonnegative weights per state; possibly unnormalized (restricted measures
// keep the mass of the subset they came from).
struct Measure {
    VectorXd weights;
    bool normalized = false;

    double mass() const { return weights.sum(); }
};

// Real-valued function on states. `centered` records that the integral
// against the associated measure vanishes.
struct Observable {
    VectorXd values;
    bool centered = false;
};

struct SubsetMask {
    std::vector<bool> members;

    int size() const { return static_cast<int>(members.size()); }

    int count() const {
        int c = 0;
        for (bool b : members) c += b ? 1 : 0;
        return c;
    }

    std::vector<int> indices() const {
        std::vector<int> out;
        for (int i = 0; i < size(); ++i)
            if (members[i]) out.push_back(i);
        return out;
    }

    std::vector<int> complement() const {
        std::vector<int> out;
        for (int i = 0; i < size(); ++i)
            if (!members[i]) out.push_back(i);
        return out;
    }

    static SubsetMask of_indices(int n, const std::vector<int>& idx) {
        SubsetMask m;
        m.members.assign(static_cast<size_t>(n), false);
        for (int i : idx) {
            if (i < 0 || i >= n)
                throw Error(ErrorCode::invalid_argument, "subset index out of range");
            m.members[static_cast<size_t>(i)] = true;
        }
        return m;
    }

    static SubsetMask all(int n) {
        SubsetMask m;
        m.members.assign(static_cast<size_t>(n), true);
        return m;
    }
};

struct ChainClassification {
    bool irreducible = false;
    long long period = 1;  // 1 iff aperiodic; lcm over recurrent classes when reducible
    std::vector<std::vector<int>> recurrent_classes;
};

namespace tol {
// Row sums off by more than this are modelling errors, below it parse rounding.
inline constexpr double row_sum_error = 1e-9;
inline constexpr double row_sum_exact = 1e-12;
inline constexpr double centering_strict = 1e-10;
inline constexpr double centering_accept = 1e-9;
inline constexpr double identity_check = 1e-10;
}  // namespace tol

// --- kernel validation -------------------------------------------------

inline StochasticKernel validate_kernel(std::vector<std::string> states, MatrixXd rows) {
    const auto n = rows.rows();
    if (rows.cols() != n)
        throw Error(ErrorCode::non_square, "matrix is " + std::to_string(n) + "x" +
                                               std::to_string(rows.cols()));
    if (states.empty()) {
        states.reserve(static_cast<size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) states.push_back(std::to_string(i));
    }
    if (static_cast<Eigen::Index>(states.size()) != n)
        throw Error(ErrorCode::invalid_argument, "state label count does not match matrix size");
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            double v = rows(i, j);
            if (!std::isfinite(v))
                throw Error(ErrorCode::invalid_argument, "non-finite entry in row " + std::to_string(i));
            if (v < 0) {
                if (v > -1e-15) {
                    rows(i, j) = 0.0;  // clamp representation noise
                } else {
                    throw Error(ErrorCode::negative_entry,
                                "entry (" + std::to_string(i) + "," + std::to_string(j) + ") = " +
                                    std::to_string(v));
                }
            }
        }
        double s = rows.row(i).sum();
        if (std::abs(s - 1.0) > tol::row_sum_error)
            throw Error(ErrorCode::non_stochastic,
                        "row " + std::to_string(i) + " sums to " + std::to_string(s));
        rows.row(i) /= s;
    }
    StochasticKernel k;
    k.states = std::move(states);
    k.rows = std::move(rows);
    return k;
}

inline StochasticKernel validate_kernel(MatrixXd rows) {
    return validate_kernel({}, std::move(rows));
}

// --- measures and observables ------------------------------------------

inline Measure make_measure(VectorXd w, bool normalized = false) {
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        if (!(w(i) >= 0))
            throw Error(ErrorCode::invalid_argument, "negative or NaN weight at " + std::to_string(i));
    }
    double s = w.sum();
    if (!(s > 0)) throw Error(ErrorCode::invalid_argument, "measure has no mass");
    if (normalized && std::abs(s - 1.0) > tol::row_sum_exact)
        throw Error(ErrorCode::invalid_argument, "normalized measure has mass " + std::to_string(s));
    return Measure{std::move(w), normalized};
}

inline double integral(const Measure& m, const VectorXd& f) { return m.weights.dot(f); }

inline double integral(const Measure& m, const Observable& f) { return m.weights.dot(f.values); }

inline bool is_centered(const Measure& m, const VectorXd& f, double rel_tol) {
    double scale = m.mass() * f.cwiseAbs().maxCoeff();
    return std::abs(m.weights.dot(f)) <= rel_tol * scale + 1e-300;
}

inline void require_centered(const Measure& m, const VectorXd& f, const char* who) {
    if (f.size() != m.weights.size())
        throw Error(ErrorCode::invalid_argument, std::string(who) + ": size mismatch");
    if (f.size() == 0 || f.cwiseAbs().maxCoeff() == 0.0) return;
    if (!is_centered(m, f, tol::centering_accept))
        throw Error(ErrorCode::not_centered,
                    std::string(who) + ": integral = " + std::to_string(m.weights.dot(f)));
}

// Subtract the mean so the result integrates to zero against m.
inline Observable center(const Measure& m, const VectorXd& f) {
    double mean = m.weights.dot(f) / m.mass();
    Observable out;
    out.values = f.array() - mean;
    out.centered = true;
    return out;
}

inline Observable make_observable(VectorXd v) { return Observable{std::move(v), false}; }

// --- misc helpers -------------------------------------------------------

inline MatrixXd submatrix(const MatrixXd& M, const std::vector<int>& r, const std::vector<int>& c) {
    MatrixXd out(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(c.size()));
    for (size_t i = 0; i < r.size(); ++i)
        for (size_t j = 0; j < c.size(); ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = M(r[i], c[j]);
    return out;
}

inline VectorXd subvector(const VectorXd& v, const std::vector<int>& idx) {
    VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(idx[i]);
    return out;
}

// FNV-1a over the raw matrix bytes; used to tag results with their kernel.
inline std::string kernel_digest(const StochasticKernel& P) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const unsigned char* p, size_t n) {
        for (size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    };
    for (const auto& s : P.states) mix(reinterpret_cast<const unsigned char*>(s.data()), s.size());
    mix(reinterpret_cast<const unsigned char*>(P.rows.data()),
        sizeof(double) * static_cast<size_t>(P.rows.size()));
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace chainpot

#endif  // CHAINPOT_TYPES_HPP
