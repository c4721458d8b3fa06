#include "chainpot/model_io.hpp"
#include "chainpot/trajectory.hpp"

#include <catch2/catch.hpp>

using namespace chainpot;

namespace {

StochasticKernel three_cycle() {
    return validate_kernel((Eigen::MatrixXd(3, 3) << 0, 1, 0, 0, 0, 1, 1, 0, 0).finished());
}

}  // namespace

TEST_CASE("sample_paths") {
    SECTION("deterministic cycle follows the cycle") {
        auto P = three_cycle();
        auto pi = stationary_measure(P);
        auto paths = sample_paths(P, pi, SimConfig{3, 4, 9, 0, 1});
        for (const auto& path : paths)
            for (size_t k = 0; k + 1 < path.size(); ++k)
                CHECK(path[k + 1] == (path[k] + 1) % 3);
    }
    SECTION("worker count does not change the draw") {
        auto model = bernoulli_model(0.3);
        auto pi = stationary_measure(model.kernel);
        SimConfig cfg{99, 64, 50, 0, 1};
        auto one = sample_paths(model.kernel, pi, cfg);
        cfg.workers = 8;
        auto eight = sample_paths(model.kernel, pi, cfg);
        CHECK(one == eight);
    }
    SECTION("occupation frequencies converge to pi") {
        auto P = validate_kernel((Eigen::MatrixXd(2, 2) << 0.7, 0.3, 0.6, 0.4).finished());
        auto pi = stationary_measure(P);
        auto paths = sample_paths(P, pi, SimConfig{5, 1, 100000, 0, 1});
        double freq0 = 0.0;
        for (int s : paths[0]) freq0 += s == 0 ? 1.0 : 0.0;
        freq0 /= static_cast<double>(paths[0].size());
        // binomial-scale gate, wide enough for the autocorrelation
        CHECK(std::abs(freq0 - pi.weights(0)) < 3.0 * 3e-3);
    }
}

TEST_CASE("birkhoff_variance") {
    auto model = bernoulli_model(0.3);
    auto pi = stationary_measure(model.kernel);
    const Observable& f = model.observables.at("f");
    SECTION("matches p(1-p) within three standard errors") {
        auto est = birkhoff_variance(model.kernel, pi, f, SimConfig{42, 3000, 600, 0, 2});
        CHECK(std::abs(est.mean - 0.21) <= 3.0 * est.stderr_);
        CHECK(est.stderr_ == Approx(std::sqrt(est.variance / est.n)));
    }
    SECTION("zero observable is exactly zero") {
        auto est = birkhoff_variance(model.kernel, pi, Observable{VectorXd::Zero(2), true},
                                     SimConfig{42, 16, 50, 0, 1});
        CHECK(est.mean == 0.0);
    }
    SECTION("two-state chain agrees with the resolvent") {
        auto P = validate_kernel((Eigen::MatrixXd(2, 2) << 0.7, 0.3, 0.6, 0.4).finished());
        auto pi2 = stationary_measure(P);
        Observable g = center(pi2, (VectorXd(2) << 1.0, 0.0).finished());
        double exact = green_kubo_resolvent(P, pi2, g, g).value;
        auto est = birkhoff_variance(P, pi2, g, SimConfig{7, 4000, 500, 0, 2});
        CHECK(std::abs(est.mean - exact) <= 3.0 * est.stderr_);
    }
    SECTION("burn-in accepts arbitrary starts") {
        auto est = birkhoff_variance(model.kernel, pi, f, SimConfig{42, 500, 400, 100, 1});
        CHECK(std::abs(est.mean - 0.21) <= 4.0 * est.stderr_);
    }
    SECTION("uncentered observable rejected") {
        CHECK_THROWS_MATCHES(
            birkhoff_variance(model.kernel, pi, Observable{VectorXd::Ones(2), false},
                              SimConfig{1, 4, 10, 0, 1}),
            Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                return e.code() == ErrorCode::not_centered;
            }));
    }
}

TEST_CASE("induced_birkhoff_variance") {
    auto model = bernoulli_model(0.3);
    auto pi = stationary_measure(model.kernel);
    const Observable& f = model.observables.at("f");
    SECTION("estimates the induced variance") {
        auto est = induced_birkhoff_variance(model.kernel, pi, *model.subset, f,
                                             SimConfig{8, 300, 120, 0, 2});
        CHECK(std::abs(est.mean - 0.21) <= 3.0 * est.stderr_);
    }
    SECTION("zero observable") {
        auto est = induced_birkhoff_variance(model.kernel, pi, *model.subset,
                                             Observable{VectorXd::Zero(2), true},
                                             SimConfig{8, 8, 16, 0, 1});
        CHECK(est.mean == 0.0);
    }
    SECTION("return-time sums match the excursion oracle") {
        // centered return time: f = 1 - pi(B)^{-1} 1_B has Sigma_B f = phi - 1/pi(B) on B
        double p = 0.3;
        VectorXd v(2);
        v << 1.0 - 1.0 / p, 1.0;
        Observable fc = center(pi, v);  // already centered: pi . v = 0
        auto est = induced_birkhoff_variance(model.kernel, pi, *model.subset, fc,
                                             SimConfig{9, 400, 150, 0, 2});
        double oracle = green_kubo_induced(model.kernel, pi, *model.subset, fc).value;
        CHECK(std::abs(est.mean - oracle) <= 3.0 * est.stderr_);
    }
}

TEST_CASE("excursion sums reconstruct the Birkhoff sum at return epochs") {
    auto model = bernoulli_model(0.35);
    auto pi = stationary_measure(model.kernel);
    const Observable& f = model.observables.at("f");
    auto paths = sample_paths(model.kernel, pi, SimConfig{31, 1, 5000, 0, 1});
    const auto& path = paths[0];
    const auto& mask = *model.subset;

    // walk to the first subset visit, then cut excursions
    size_t start = 0;
    while (!mask.members[static_cast<size_t>(path[start])]) ++start;
    double direct = 0.0, concatenated = 0.0, excursion = 0.0;
    size_t epoch_end = start;
    for (size_t k = start; k < path.size(); ++k) {
        if (k > start && mask.members[static_cast<size_t>(path[k])]) {
            concatenated += excursion;
            excursion = 0.0;
            epoch_end = k;
        }
        excursion += f.values(path[k]);
    }
    for (size_t k = start; k < epoch_end; ++k) direct += f.values(path[k]);
    CHECK(concatenated == Approx(direct).margin(1e-10));
}

TEST_CASE("hopf_ratio") {
    auto P = validate_kernel((Eigen::MatrixXd(2, 2) << 0.7, 0.3, 0.6, 0.4).finished());
    auto pi = stationary_measure(P);
    SECTION("f = g gives ratio one") {
        Observable g{(VectorXd(2) << 0.5, 1.5).finished(), false};
        auto est = hopf_ratio(P, pi, g, g, SimConfig{3, 64, 200, 0, 1});
        CHECK(est.est.mean == Approx(1.0).margin(1e-12));
        CHECK(est.est.variance == Approx(0.0).margin(1e-20));
    }
    SECTION("indicator denominator recovers 1/pi(S)") {
        Observable num{VectorXd::Ones(2), false};
        Observable den{(VectorXd(2) << 1.0, 0.0).finished(), false};
        auto est = hopf_ratio(P, pi, num, den, SimConfig{5, 400, 4000, 0, 2});
        CHECK(std::abs(est.est.mean - 1.0 / pi.weights(0)) <= 3.0 * est.est.stderr_);
    }
    SECTION("centered numerator drifts to zero") {
        auto model = bernoulli_model(0.3);
        auto pi2 = stationary_measure(model.kernel);
        auto est = hopf_ratio(model.kernel, pi2, model.observables.at("f"),
                              Observable{VectorXd::Ones(2), false}, SimConfig{6, 400, 4000, 0, 2});
        CHECK(std::abs(est.est.mean) <= 3.0 * est.est.stderr_);
    }
    SECTION("negative denominator rejected") {
        Observable bad{(VectorXd(2) << 1.0, -0.5).finished(), false};
        CHECK_THROWS_MATCHES(hopf_ratio(P, pi, bad, bad, SimConfig{1, 4, 10, 0, 1}), Error,
                             Catch::Matchers::Predicate<Error>([](const Error& e) {
                                 return e.code() == ErrorCode::zero_denominator_mass;
                             }));
    }
}

TEST_CASE("normalized sums pass a moment-based normality gate") {
    auto model = bernoulli_model(0.3);
    auto pi = stationary_measure(model.kernel);
    auto samples = birkhoff_samples(model.kernel, pi, model.observables.at("f"),
                                    SimConfig{12, 2000, 10000, 0, 2});
    auto st = moment_stats(samples);
    double n = static_cast<double>(st.n);
    CHECK(std::abs(st.skewness) < 6.0 * std::sqrt(6.0 / n));
    CHECK(std::abs(st.excess_kurtosis) < 6.0 * std::sqrt(24.0 / n));
}

TEST_CASE("estimates are bitwise reproducible across worker counts") {
    auto model = bernoulli_model(0.3);
    auto pi = stationary_measure(model.kernel);
    const Observable& f = model.observables.at("f");
    SimConfig cfg{2718, 512, 300, 0, 1};
    auto a = birkhoff_variance(model.kernel, pi, f, cfg);
    cfg.workers = 8;
    auto b = birkhoff_variance(model.kernel, pi, f, cfg);
    CHECK(a.mean == b.mean);
    CHECK(a.variance == b.variance);
    CHECK(a.stderr_ == b.stderr_);

    auto ia = induced_birkhoff_variance(model.kernel, pi, *model.subset, f,
                                        SimConfig{99, 64, 40, 0, 1});
    auto ib = induced_birkhoff_variance(model.kernel, pi, *model.subset, f,
                                        SimConfig{99, 64, 40, 0, 8});
    CHECK(ia.mean == ib.mean);
}

TEST_CASE("sim config validation") {
    CHECK_THROWS_AS(validate(SimConfig{0, 0, 10, 0, 1}), Error);
    CHECK_THROWS_AS(validate(SimConfig{0, 4, 10, 10, 1}), Error);
    CHECK_THROWS_AS(validate(SimConfig{0, 4, 10, 0, 0}), Error);
}
