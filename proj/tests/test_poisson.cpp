#include "chainpot/poisson.hpp"
#include "chainpot/random_fixtures.hpp"

#include <catch2/catch.hpp>

using namespace chainpot;

namespace {

StochasticKernel three_cycle() {
    return validate_kernel((Eigen::MatrixXd(3, 3) << 0, 1, 0, 0, 0, 1, 1, 0, 0).finished());
}

StochasticKernel iid_kernel(const VectorXd& pi) {
    const auto n = pi.size();
    Eigen::MatrixXd rows(n, n);
    for (Eigen::Index i = 0; i < n; ++i) rows.row(i) = pi.transpose();
    return validate_kernel(std::move(rows));
}

}  // namespace

TEST_CASE("solve_poisson") {
    SECTION("zero right-hand side") {
        auto P = three_cycle();
        auto pi = stationary_measure(P);
        auto sol = solve_poisson(P, pi, Observable{VectorXd::Zero(3), true});
        CHECK(sol.f.values.cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("rank-one kernel: f = g") {
        VectorXd w(3);
        w << 0.2, 0.5, 0.3;
        auto P = iid_kernel(w);
        auto pi = stationary_measure(P);
        std::mt19937_64 rng(5);
        auto g = random_centered_observable(rng, pi);
        auto sol = solve_poisson(P, pi, g);
        CHECK((sol.f.values - g.values).cwiseAbs().maxCoeff() < 1e-12);
    }
    SECTION("3-cycle against an independent linear solve") {
        auto P = three_cycle();
        auto pi = stationary_measure(P);
        Observable g{(VectorXd(3) << 1, 0, -1).finished(), true};
        auto sol = solve_poisson(P, pi, g);
        // oracle: stack (I - P) with the centering row and least-squares solve
        Eigen::MatrixXd A(4, 3);
        A.topRows(3) = Eigen::MatrixXd::Identity(3, 3) - P.rows;
        A.row(3) = pi.weights.transpose();
        Eigen::VectorXd b(4);
        b << g.values, 0.0;
        VectorXd f_oracle = A.colPivHouseholderQr().solve(b);
        CHECK((sol.f.values - f_oracle).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(sol.residual < 1e-12);
    }
    SECTION("uncentered g rejected") {
        auto P = three_cycle();
        auto pi = stationary_measure(P);
        CHECK_THROWS_MATCHES(solve_poisson(P, pi, Observable{VectorXd::Ones(3), false}), Error,
                             Catch::Matchers::Predicate<Error>([](const Error& e) {
                                 return e.code() == ErrorCode::not_centered;
                             }));
    }
}

TEST_CASE("potential_kernel") {
    SECTION("rank-one kernel acts as identity on centered functions") {
        VectorXd w(4);
        w << 0.1, 0.2, 0.3, 0.4;
        auto P = iid_kernel(w);
        auto pi = stationary_measure(P);
        auto K = potential_kernel(P, pi);
        std::mt19937_64 rng(6);
        auto g = random_centered_observable(rng, pi);
        CHECK((K.apply(g.values) - g.values).cwiseAbs().maxCoeff() < 1e-12);
    }
    SECTION("2-cycle closed form") {
        auto P = validate_kernel((Eigen::MatrixXd(2, 2) << 0, 1, 1, 0).finished());
        auto pi = stationary_measure(P);
        auto K = potential_kernel(P, pi);
        VectorXd g(2);
        g << 1, -1;
        VectorXd f = K.apply(g);
        CHECK(f(0) == Approx(0.5).margin(1e-13));
        CHECK(f(1) == Approx(-0.5).margin(1e-13));
    }
    SECTION("gamma of zero is zero, centered goes to centered") {
        std::mt19937_64 rng(7);
        auto P = random_chain(rng, 5);
        auto pi = stationary_measure(P);
        auto K = potential_kernel(P, pi);
        CHECK(K.apply(VectorXd::Zero(5)).cwiseAbs().maxCoeff() == 0.0);
        auto g = random_centered_observable(rng, pi);
        CHECK(std::abs(pi.weights.dot(K.apply(g.values))) < 1e-12);
        // right inverse on centered inputs
        VectorXd r = (K.apply(g.values) - P.rows * K.apply(g.values)) - g.values;
        CHECK(r.cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("solutions are unique up to constants") {
    std::mt19937_64 rng(8);
    auto P = random_chain(rng, 6);
    auto pi = stationary_measure(P);
    auto g = random_centered_observable(rng, pi);
    auto sol = solve_poisson(P, pi, g);
    // shift by a constant, re-center, land on the same representative
    VectorXd shifted = sol.f.values.array() + 3.5;
    Observable recentered = center(pi, shifted);
    CHECK((recentered.values - sol.f.values).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("verify_poisson_induction") {
    SECTION("zero g and whole-space subset are exact") {
        auto P = three_cycle();
        auto pi = stationary_measure(P);
        auto rep = verify_poisson_induction(P, pi, SubsetMask::all(3),
                                            Observable{VectorXd::Zero(3), true});
        CHECK(rep.max_abs_gap == 0.0);
        CHECK(rep.pass);
    }
    SECTION("random 6-state chain, |S| = 3") {
        std::mt19937_64 rng(9);
        for (int t = 0; t < 20; ++t) {
            auto P = random_chain(rng, 6);
            auto pi = stationary_measure(P);
            auto mask = random_subset(rng, 6, 3);
            auto g = random_centered_supported(rng, pi, mask);
            auto rep = verify_poisson_induction(P, pi, mask, g);
            CHECK(rep.max_abs_gap <= 1e-10);
        }
    }
    SECTION("support violation rejected") {
        auto P = three_cycle();
        auto pi = stationary_measure(P);
        Observable g{(VectorXd(3) << 1, 0, -1).finished(), true};
        CHECK_THROWS_MATCHES(verify_poisson_induction(P, pi, SubsetMask::of_indices(3, {0, 1}), g),
                             Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                                 return e.code() == ErrorCode::support_violation;
                             }));
    }
}

TEST_CASE("coboundary induction for a permutation kernel") {
    // Koopman kernel of an 8-cycle: deterministic dynamics, exact arithmetic
    const int n = 8;
    Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) rows(i, (i + 1) % n) = 1.0;
    auto K = validate_kernel(std::move(rows));
    auto pi = stationary_measure(K);
    std::mt19937_64 rng(10);
    auto mask = random_subset(rng, n, 3);
    auto g = random_centered_supported(rng, pi, mask);
    auto rep = verify_poisson_induction(K, pi, mask, g);
    CHECK(rep.max_abs_gap < 1e-12);
}

TEST_CASE("extend_solution") {
    SECTION("harmonic extension of a constant is constant") {
        std::mt19937_64 rng(11);
        auto P = random_chain(rng, 5);
        auto pi = stationary_measure(P);
        auto mask = random_subset(rng, 5, 2);
        VectorXd fS = VectorXd::Constant(2, 2.75);
        auto f = extend_solution(P, pi, mask, fS, Observable{VectorXd::Zero(5), true});
        CHECK((f.values.array() - 2.75).abs().maxCoeff() < 1e-12);
    }
    SECTION("whole space returns f_S") {
        auto P = three_cycle();
        auto pi = stationary_measure(P);
        Observable g{(VectorXd(3) << 1, 0, -1).finished(), true};
        VectorXd fS = solve_poisson(P, pi, g).f.values;
        auto f = extend_solution(P, pi, SubsetMask::all(3), fS, g);
        CHECK((f.values - fS).cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("Bernoulli single site") {
        auto P = validate_kernel((Eigen::MatrixXd(2, 2) << 0.3, 0.7, 0.3, 0.7).finished());
        auto pi = stationary_measure(P);
        VectorXd fS(1);
        fS << -1.25;
        auto f = extend_solution(P, pi, SubsetMask::of_indices(2, {0}), fS,
                                 Observable{VectorXd::Zero(2), true});
        CHECK(f.values(0) == Approx(-1.25));
        CHECK(f.values(1) == Approx(-1.25).margin(1e-12));
    }
    SECTION("solves the full equation with the maximum principle") {
        std::mt19937_64 rng(12);
        for (int t = 0; t < 20; ++t) {
            int n = 3 + static_cast<int>(rng() % 6);
            auto P = random_chain(rng, n);
            auto pi = stationary_measure(P);
            int k = 2 + static_cast<int>(rng() % (n - 1));
            auto mask = random_subset(rng, n, std::min(k, n));
            auto g = random_centered_supported(rng, pi, mask);
            auto S = mask.indices();
            auto piS = Measure{subvector(pi.weights, S), false};
            auto PS = induced_kernel(P, mask);
            auto solS = solve_poisson(PS, piS, Observable{subvector(g.values, S), true});
            auto f = extend_solution(P, pi, mask, solS.f.values, g);
            VectorXd residual = (f.values - P.rows * f.values) - g.values;
            CHECK(residual.cwiseAbs().maxCoeff() <= 1e-10);
            CHECK(std::abs(f.values.cwiseAbs().maxCoeff() -
                           solS.f.values.cwiseAbs().maxCoeff()) <= 1e-12);
        }
    }
    SECTION("non-solution rejected") {
        auto P = three_cycle();
        auto pi = stationary_measure(P);
        VectorXd fS(2);
        fS << 5.0, -5.0;
        CHECK_THROWS_MATCHES(extend_solution(P, pi, SubsetMask::of_indices(3, {0, 1}), fS,
                                             Observable{VectorXd::Zero(3), true}),
                             Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                                 return e.code() == ErrorCode::not_induced_solution;
                             }));
    }
}

TEST_CASE("weighted_induced_operator") {
    auto P = validate_kernel((Eigen::MatrixXd(2, 2) << 0.3, 0.7, 0.3, 0.7).finished());
    SECTION("zero weights give the induced kernel") {
        auto mask = SubsetMask::of_indices(2, {0});
        auto W = weighted_induced_operator(P, mask, {Observable{VectorXd::Zero(2), false}});
        auto PS = induced_kernel(P, mask);
        CHECK((W - PS.rows).cwiseAbs().maxCoeff() < 1e-12);
    }
    SECTION("constant weight resums the geometric return series") {
        const double s = 0.35, p = 0.3;
        auto mask = SubsetMask::of_indices(2, {0});
        auto W = weighted_induced_operator(
            P, mask, {Observable{VectorXd::Constant(2, -s), false}});
        // sum over k of e^{-sk} (1-p)^{k-1} p
        double expect = p * std::exp(-s) / (1.0 - std::exp(-s) * (1.0 - p));
        CHECK(W(0, 0) == Approx(expect).margin(1e-13));
    }
    SECTION("whole space scales the kernel") {
        const double s = 0.2;
        auto W = weighted_induced_operator(P, SubsetMask::all(2),
                                           {Observable{VectorXd::Constant(2, -s), false}});
        CHECK((W - std::exp(-s) * P.rows).cwiseAbs().maxCoeff() < 1e-14);
    }
    SECTION("positive weight rejected") {
        CHECK_THROWS_MATCHES(
            weighted_induced_operator(P, SubsetMask::all(2),
                                      {Observable{VectorXd::Constant(2, 0.1), false}}),
            Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                return e.code() == ErrorCode::weight_positive;
            }));
    }
}

TEST_CASE("nonlocalized_correction") {
    std::mt19937_64 rng(13);
    SECTION("vanishes for supported g and for the whole space") {
        auto P = random_chain(rng, 5);
        auto pi = stationary_measure(P);
        auto mask = random_subset(rng, 5, 3);
        auto g = random_centered_supported(rng, pi, mask);
        CHECK(nonlocalized_correction(P, pi, mask, g).values.cwiseAbs().maxCoeff() < 1e-12);
        auto g2 = random_centered_observable(rng, pi);
        CHECK(nonlocalized_correction(P, pi, SubsetMask::all(5), g2).values.size() == 5);
        CHECK(nonlocalized_correction(P, pi, SubsetMask::all(5), g2).values.cwiseAbs().maxCoeff() ==
              0.0);
    }
    SECTION("corrected induction identity on random chains") {
        for (int t = 0; t < 20; ++t) {
            auto P = random_chain(rng, 5);
            auto pi = stationary_measure(P);
            auto mask = random_subset(rng, 5, 2);
            auto g = random_centered_observable(rng, pi);
            auto c = nonlocalized_correction(P, pi, mask, g);
            auto sol = solve_poisson(P, pi, g);
            auto S = mask.indices();
            auto PS = induced_kernel(P, mask);
            VectorXd fS = subvector(sol.f.values, S);
            VectorXd lhs = fS - PS.rows * fS;
            VectorXd rhs = subvector(g.values, S) + c.values;
            CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-10);
        }
    }
}

TEST_CASE("bilinear induction identity for potential kernels") {
    // <Gamma g, h> over the full measure equals <Gamma_S g, h> over the
    // restriction, for g, h centered and supported on the subset
    std::mt19937_64 rng(14);
    for (int t = 0; t < 15; ++t) {
        int n = 4 + static_cast<int>(rng() % 5);
        auto P = random_chain(rng, n);
        auto pi = stationary_measure(P);
        auto mask = random_subset(rng, n, 3);
        auto S = mask.indices();
        auto g = random_centered_supported(rng, pi, mask);
        auto h = random_centered_supported(rng, pi, mask);

        auto K = potential_kernel(P, pi);
        double lhs = (pi.weights.array() * K.apply(g.values).array() * h.values.array()).sum();

        auto PS = induced_kernel(P, mask);
        Measure piS{subvector(pi.weights, S), false};
        auto KS = potential_kernel(PS, piS);
        VectorXd gS = subvector(g.values, S), hS = subvector(h.values, S);
        double rhs = (piS.weights.array() * KS.apply(gS).array() * hS.array()).sum();
        CHECK(lhs == Approx(rhs).margin(1e-10));
    }
}
