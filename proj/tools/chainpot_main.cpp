// chainpot command line: model ingestion, subcommand dispatch and structured
// report emission. Exit codes: 0 all checks pass, 1 a check failed, 2 input
// or usage error. A machine-readable report goes to stdout on every path.

#include "chainpot/invariants.hpp"
#include "chainpot/lattice.hpp"
#include "chainpot/markov.hpp"
#include "chainpot/model_io.hpp"
#include "chainpot/poisson.hpp"
#include "chainpot/random_fixtures.hpp"
#include "chainpot/trajectory.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <iostream>

namespace cp = chainpot;
using cp::json;

namespace {

struct GlobalOpts {
    double tol = 1e-9;
    std::uint64_t seed = 0;
    std::string format = "table";
};

std::string timestamp_now() {
    auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return std::string(buf);
}

void emit(const cp::Report& report, const GlobalOpts& opts) {
    if (opts.format == "json") {
        std::cout << cp::to_json(report, timestamp_now()).dump(2) << "\n";
    } else if (opts.format == "csv") {
        std::cout << cp::render_csv(report);
    } else {
        std::cout << cp::render_table(report);
    }
}

cp::Report new_report(const std::string& command, const json& inputs, const GlobalOpts& opts) {
    cp::Report r;
    r.command = command;
    r.inputs_digest = cp::digest_of(inputs);
    r.seed = opts.seed;
    return r;
}

cp::Observable named_observable(const cp::ModelFile& model, const std::string& name) {
    auto it = model.observables.find(name);
    if (it == model.observables.end())
        throw cp::Error(cp::ErrorCode::invalid_argument, "model has no observable '" + name + "'");
    return it->second;
}

cp::SubsetMask subset_or_fail(const cp::ModelFile& model, const std::vector<std::string>& labels) {
    if (!labels.empty()) {
        std::vector<int> idx;
        for (const auto& s : labels) idx.push_back(model.kernel.index_of(s));
        return cp::SubsetMask::of_indices(model.kernel.size(), idx);
    }
    if (model.subset) return *model.subset;
    throw cp::Error(cp::ErrorCode::empty_subset, "no subset given (flag or model file)");
}

json args_json(std::initializer_list<std::pair<std::string, json>> kv) {
    json j = json::object();
    for (const auto& [k, v] : kv) j[k] = v;
    return j;
}

// ---- subcommand bodies -----------------------------------------------------

int cmd_stationary(const std::string& model_path, const GlobalOpts& opts) {
    auto model = cp::load_model(model_path);
    auto pi = cp::stationary_measure(model.kernel);
    auto report = new_report("stationary", args_json({{"model", model.canonical}}), opts);
    for (int i = 0; i < model.kernel.size(); ++i)
        report.results.push_back({"pi[" + model.kernel.states[static_cast<size_t>(i)] + "]",
                                  "resolvent", pi.weights(i), 0.0});
    double residual = (model.kernel.rows.transpose() * pi.weights - pi.weights).cwiseAbs().sum();
    report.results.push_back({"residual_l1", "resolvent", residual, 0.0});
    report.checks.push_back({"stationarity_residual<=1e-12", residual <= 1e-12});
    emit(report, opts);
    return report.all_pass() ? 0 : 1;
}

int cmd_induce(const std::string& model_path, const std::vector<std::string>& subset_labels,
               int horizon, const GlobalOpts& opts) {
    auto model = cp::load_model(model_path);
    auto mask = subset_or_fail(model, subset_labels);
    auto pi = cp::stationary_measure(model.kernel);
    auto induced = cp::induced_kernel(model.kernel, mask);
    auto table = cp::return_time_distribution(model.kernel, mask, horizon);

    auto report = new_report(
        "induce", args_json({{"model", model.canonical}, {"subset", subset_labels}, {"horizon", horizon}}),
        opts);
    for (int i = 0; i < induced.size(); ++i)
        for (int j = 0; j < induced.size(); ++j)
            report.results.push_back({"P_S[" + induced.states[static_cast<size_t>(i)] + "->" +
                                          induced.states[static_cast<size_t>(j)] + "]",
                                      "resolvent", induced.rows(i, j), 0.0});
    auto S = mask.indices();
    for (size_t i = 0; i < S.size(); ++i) {
        for (int t = 1; t <= std::min(horizon, 12); ++t)
            report.results.push_back(
                {"phi[" + model.kernel.states[static_cast<size_t>(S[i])] + "," + std::to_string(t) + "]",
                 "series", table.probs(S[i], t - 1), 0.0});
        report.results.push_back(
            {"phi_tail[" + model.kernel.states[static_cast<size_t>(S[i])] + "]", "series",
             table.tail(S[i]), table.tail_bound});
    }
    report.results.push_back({"masked_spectral_radius", "series", table.rho, 0.0});

    // Kac: expected return times weighted by the restricted measure
    auto ert = cp::expected_return_times(model.kernel, mask);
    double kac = cp::subvector(pi.weights, S).dot(ert);
    report.results.push_back({"kac_sum", "resolvent", kac, 0.0});
    report.checks.push_back({"kac_sum==1 (1e-10)", std::abs(kac - 1.0) <= 1e-10});
    double row_dev = (induced.rows.rowwise().sum().array() - 1.0).abs().maxCoeff();
    report.checks.push_back({"induced_rows_stochastic (1e-10)", row_dev <= 1e-10});
    emit(report, opts);
    return report.all_pass() ? 0 : 1;
}

int cmd_poisson(const std::string& model_path, const std::string& g_name,
                const std::vector<std::string>& subset_labels, bool have_subset, bool strict,
                const GlobalOpts& opts) {
    auto model = cp::load_model(model_path);
    auto pi = cp::stationary_measure(model.kernel);
    cp::Observable g = named_observable(model, g_name);
    cp::require_centered(pi, g.values, "poisson: g");

    auto report = new_report("poisson",
                             args_json({{"model", model.canonical},
                                        {"g", g_name},
                                        {"subset", subset_labels},
                                        {"strict", strict}}),
                             opts);

    auto sol = cp::solve_poisson(model.kernel, pi, g);
    for (int i = 0; i < model.kernel.size(); ++i)
        report.results.push_back(
            {"f[" + model.kernel.states[static_cast<size_t>(i)] + "]", "resolvent", sol.f.values(i), 0.0});
    report.results.push_back({"residual", "resolvent", sol.residual, 0.0});
    report.checks.push_back({"poisson_residual<=1e-10", sol.residual <= 1e-10});

    if (have_subset || model.subset) {
        auto mask = subset_or_fail(model, subset_labels);
        bool supported = true;
        try {
            cp::require_supported(g.values, mask, "poisson");
        } catch (const cp::Error&) {
            supported = false;
        }
        if (supported) {
            auto rep = cp::verify_poisson_induction(model.kernel, pi, mask, g);
            report.results.push_back({"induction_gap", "resolvent", rep.max_abs_gap, 0.0});
            report.checks.push_back({"induction_gap<=1e-10", rep.pass});
        } else if (strict) {
            throw cp::Error(cp::ErrorCode::support_violation,
                            "g is not supported on the subset (strict mode)");
        } else {
            // off-support right-hand side: check the corrected identity instead
            auto c = cp::nonlocalized_correction(model.kernel, pi, mask, g);
            auto S = mask.indices();
            auto PS = cp::induced_kernel(model.kernel, mask);
            cp::VectorXd fS = cp::subvector(sol.f.values, S);
            cp::VectorXd lhs = fS - PS.rows * fS;
            cp::VectorXd rhs = cp::subvector(g.values, S) + c.values;
            double gap = (lhs - rhs).cwiseAbs().maxCoeff();
            report.results.push_back({"corrected_induction_gap", "resolvent", gap, 0.0});
            report.checks.push_back({"corrected_induction_gap<=1e-10", gap <= 1e-10});
        }
    }
    emit(report, opts);
    return report.all_pass() ? 0 : 1;
}

int cmd_green_kubo(const std::string& model_path, const std::string& f_name,
                   const std::string& g_name, const std::vector<std::string>& subset_labels,
                   const std::string& method, long paths, long horizon, long burn_in,
                   int workers, const GlobalOpts& opts) {
    auto model = cp::load_model(model_path);
    auto pi = cp::stationary_measure(model.kernel);
    cp::Observable f = named_observable(model, f_name);
    cp::Observable g = g_name.empty() ? f : named_observable(model, g_name);

    auto report = new_report("green-kubo",
                             args_json({{"model", model.canonical},
                                        {"f", f_name},
                                        {"g", g_name.empty() ? f_name : g_name},
                                        {"subset", subset_labels},
                                        {"method", method},
                                        {"paths", paths},
                                        {"horizon", horizon},
                                        {"burn_in", burn_in},
                                        {"seed", opts.seed}}),
                             opts);

    double reference = 0.0;
    bool have_reference = false;
    auto add = [&](const cp::GreenKuboResult& r, double extra_tol) {
        report.results.push_back(
            {"sigma2_gk", cp::method_name(r.method), r.value, r.truncation_error_bound});
        if (have_reference) {
            double gap = std::abs(r.value - reference);
            double allow = r.truncation_error_bound + extra_tol;
            report.checks.push_back(
                {std::string("agrees_") + cp::method_name(r.method), gap <= allow});
        } else {
            reference = r.value;
            have_reference = true;
        }
    };

    if (method == "resolvent" || method == "all")
        add(cp::green_kubo_resolvent(model.kernel, pi, f, g), 0.0);
    if (method == "series" || method == "all")
        add(cp::green_kubo_series(model.kernel, pi, f, g, opts.tol), opts.tol + 1e-12);
    if (method == "excursion" || method == "all") {
        auto mask = subset_or_fail(model, subset_labels);
        if ((f.values - g.values).cwiseAbs().maxCoeff() > 0)
            throw cp::Error(cp::ErrorCode::invalid_argument,
                            "excursion method computes the diagonal form; give f only");
        add(cp::green_kubo_induced(model.kernel, pi, mask, f), 1e-8);
    }
    if (method == "monte_carlo") {
        cp::SimConfig cfg{opts.seed, paths, horizon, burn_in, workers};
        if ((f.values - g.values).cwiseAbs().maxCoeff() > 0)
            throw cp::Error(cp::ErrorCode::invalid_argument,
                            "monte_carlo computes the diagonal form; give f only");
        auto est = cp::birkhoff_variance(model.kernel, pi, f, cfg);
        report.results.push_back({"sigma2_gk", "monte_carlo", est.mean, 3.0 * est.stderr_});
        auto exact = cp::green_kubo_resolvent(model.kernel, pi, f, g);
        report.results.push_back(
            {"sigma2_gk", cp::method_name(exact.method), exact.value, 0.0});
        report.checks.push_back(
            {"mc_within_3se", std::abs(est.mean - exact.value) <= 3.0 * est.stderr_});
    }
    emit(report, opts);
    return report.all_pass() ? 0 : 1;
}

int cmd_tau3(const std::string& model_path, const std::string& f_name, const std::string& g_name,
             const std::string& h_name, const std::vector<std::string>& subset_labels,
             bool have_subset, const GlobalOpts& opts) {
    auto model = cp::load_model(model_path);
    auto pi = cp::stationary_measure(model.kernel);
    cp::Observable f = named_observable(model, f_name);
    cp::Observable g = g_name.empty() ? f : named_observable(model, g_name);
    cp::Observable h = h_name.empty() ? f : named_observable(model, h_name);

    auto report = new_report("tau3",
                             args_json({{"model", model.canonical},
                                        {"f", f_name},
                                        {"g", g_name},
                                        {"h", h_name},
                                        {"subset", subset_labels}}),
                             opts);

    auto a = cp::tau3_series(model.kernel, pi, f, g, h, opts.tol);
    auto b = cp::tau3_shifted_form(model.kernel, pi, f, g, h, opts.tol);
    auto c = cp::tau3_via_sigma(model.kernel, pi, f, g, h, opts.tol / 10.0);
    report.results.push_back({"tau3", "series", a.value, a.truncation_error_bound});
    report.results.push_back({"tau3_shifted", "series", b.value, b.truncation_error_bound});
    report.results.push_back({"tau3_via_sigma2", "series", c.value, c.truncation_error_bound});
    double combined = a.truncation_error_bound + c.truncation_error_bound + 1e-11;
    report.checks.push_back({"paths_agree", std::abs(a.value - b.value) <= 1e-11 &&
                                                std::abs(a.value - c.value) <= combined});

    bool singleton_subset = false;
    if (have_subset || model.subset) {
        auto mask = subset_or_fail(model, subset_labels);
        singleton_subset = mask.count() == 1;
        if (singleton_subset && (f.values - g.values).cwiseAbs().maxCoeff() == 0 &&
            (f.values - h.values).cwiseAbs().maxCoeff() == 0) {
            auto qi = cp::tau3_quasi_invariance_check(model.kernel, pi, mask, f);
            report.results.push_back({"tau3_induced", "excursion", qi.tau3_induced, 0.0});
            report.results.push_back({"tau3_correction", "excursion", qi.correction, 0.0});
            report.results.push_back({"tau3_identity_gap", "excursion", qi.gap, 0.0});
            report.checks.push_back({"quasi_invariance_gap<=1e-9", qi.pass});
        }
    }
    emit(report, opts);
    return report.all_pass() ? 0 : 1;
}

int cmd_bernoulli_demo(double p, const GlobalOpts& opts) {
    auto model = cp::bernoulli_model(p);
    auto pi = cp::stationary_measure(model.kernel);
    const cp::Observable& f = model.observables.at("f");
    const cp::SubsetMask& mask = *model.subset;

    auto report = new_report("bernoulli-demo", args_json({{"p", p}}), opts);
    auto push = [&](const std::string& q, const std::string& m, double v, double expect,
                    double tol) {
        report.results.push_back({q, m, v, 0.0});
        report.checks.push_back({q + "==" + std::to_string(expect), std::abs(v - expect) <= tol});
    };

    // return-time moments: G + 1 is the return time, geometric of parameter p
    cp::Observable ones{cp::VectorXd::Ones(2), false};
    auto phi = cp::excursion_moments(model.kernel, pi, mask, ones);
    double EG = phi.m1(0) - 1.0;
    double VarG = phi.m2(0) - phi.m1(0) * phi.m1(0);
    double m3G = phi.m3(0) - 3.0 * phi.m1(0) * phi.m2(0) + 2.0 * std::pow(phi.m1(0), 3);
    push("E[G]", "excursion", EG, (1 - p) / p, 1e-10 * std::abs((1 - p) / p));
    push("Var[G]", "excursion", VarG, (1 - p) / (p * p), 1e-10 * (1 - p) / (p * p));
    push("E[(G-EG)^3]", "excursion", m3G, (1 - p) * (2 - p) / (p * p * p),
         1e-10 * (1 - p) * (2 - p) / (p * p * p));

    auto gk_full = cp::green_kubo_resolvent(model.kernel, pi, f, f);
    auto gk_ind = cp::green_kubo_induced(model.kernel, pi, mask, f);
    push("sigma2_full", "resolvent", gk_full.value, p * (1 - p), 1e-10);
    push("sigma2_induced", "excursion", gk_ind.value, p * (1 - p), 1e-10);

    auto qi = cp::tau3_quasi_invariance_check(model.kernel, pi, mask, f);
    push("tau3_full", "series", qi.lhs, p * (1 - p) * (2 * p - 1), 1e-9);
    report.results.push_back({"tau3_induced", "excursion", qi.tau3_induced, 0.0});
    report.results.push_back({"tau3_correction", "excursion", qi.correction, 0.0});
    report.checks.push_back({"tau3_correction==-3p(1-p)^2",
                             std::abs(qi.correction + 3 * p * (1 - p) * (1 - p)) <= 1e-9});
    report.checks.push_back({"tau3_identity_gap<=1e-9", qi.gap <= 1e-9});
    emit(report, opts);
    return report.all_pass() ? 0 : 1;
}

int cmd_lattice_hit(const std::string& model_arg, const std::vector<int>& p_vec,
                    const std::string& method, int radius, long n_max, long paths, long cap,
                    int workers, const GlobalOpts& opts) {
    cp::LatticeModel lattice = [&] {
        if (model_arg == "srw") {
            auto P = cp::validate_kernel(
                {"+", "-"}, (Eigen::MatrixXd(2, 2) << 0.5, 0.5, 0.5, 0.5).finished());
            return cp::make_lattice_model(P, {{{1, 0}}, {{-1, 0}}}, 1);
        }
        auto model = cp::load_model(model_arg);
        if (!model.lattice)
            throw cp::Error(cp::ErrorCode::invalid_argument, "model file has no lattice section");
        return *model.lattice;
    }();
    if (p_vec.empty() || p_vec.size() > 2)
        throw cp::Error(cp::ErrorCode::invalid_argument, "--p takes one or two integers");
    cp::LatticePoint target{p_vec[0], p_vec.size() > 1 ? p_vec[1] : 0};

    auto report = new_report("lattice-hit",
                             args_json({{"model", model_arg},
                                        {"p", p_vec},
                                        {"method", method},
                                        {"radius", radius},
                                        {"n_max", n_max},
                                        {"paths", paths},
                                        {"cap", cap},
                                        {"seed", opts.seed}}),
                             opts);

    if (method == "series" || method == "all") {
        auto ps = cp::potential_series(lattice, target, 0.0, n_max);
        report.results.push_back({"series_value", "series", ps.series_value, 0.0});
        report.results.push_back({"series_tail_estimate", "series", ps.tail_estimate, ps.tail_bound});
        report.results.push_back({"hit_probability", "series", ps.reciprocal, ps.reciprocal_bound});
        report.checks.push_back({"mass_leak<=1e-12", ps.leak <= 1e-12});
    }
    if ((method == "exact" || method == "all") && lattice.dim == 1) {
        auto he = cp::hitting_exact(lattice, target[0], radius, std::max(opts.tol, 1e-6));
        report.results.push_back({"hit_probability", "exact", he.probability, he.r_sensitivity});
    }
    if (method == "mc" || method == "all") {
        cp::SimConfig cfg{opts.seed, paths, 1, 0, workers};
        auto mc = cp::hitting_mc(lattice, target, cfg, cap);
        report.results.push_back({"hit_probability", "monte_carlo", mc.est.mean, 3.0 * mc.est.stderr_});
        report.results.push_back(
            {"censored_fraction", "monte_carlo",
             static_cast<double>(mc.censored) / static_cast<double>(paths), 0.0});
    }

    // pairwise agreement checks for whatever pairs were computed
    std::vector<cp::ReportEntry> hits;
    for (const auto& e : report.results)
        if (e.quantity == "hit_probability") hits.push_back(e);
    for (size_t i = 0; i < hits.size(); ++i)
        for (size_t j = i + 1; j < hits.size(); ++j) {
            double allow = hits[i].error_bound + hits[j].error_bound + 2e-6;
            report.checks.push_back({"agree_" + hits[i].method + "_" + hits[j].method,
                                     std::abs(hits[i].value - hits[j].value) <= allow});
        }
    emit(report, opts);
    return report.all_pass() ? 0 : 1;
}

int cmd_verify(const std::string& suite, long trials, const GlobalOpts& opts) {
    std::mt19937_64 rng(opts.seed == 0 ? 0x9e3779b97f4a7c15ull : opts.seed);
    auto report = new_report("verify", args_json({{"suite", suite}, {"trials", trials},
                                                  {"seed", opts.seed}}),
                             opts);
    std::uniform_int_distribution<int> size_dist(3, 8);
    long failures = 0;

    auto record = [&](long t, bool ok) {
        if (!ok) ++failures;
        report.checks.push_back({suite + "_trial_" + std::to_string(t), ok});
    };

    for (long t = 0; t < trials; ++t) {
        int n = size_dist(rng);
        auto P = cp::random_chain(rng, n);
        auto pi = cp::stationary_measure(P);
        if (suite == "poisson") {
            auto mask = cp::random_subset(rng, n, 2 + static_cast<int>(rng() % (n - 1)));
            auto g = cp::random_centered_supported(rng, pi, mask);
            auto rep = cp::verify_poisson_induction(P, pi, mask, g);
            auto sol = cp::solve_poisson(P, pi, g);
            auto S = mask.indices();
            auto ext = cp::extend_solution(P, pi, mask, cp::subvector(sol.f.values, S), g);
            double max_gap = std::abs(ext.values.cwiseAbs().maxCoeff() -
                                      cp::subvector(sol.f.values, S).cwiseAbs().maxCoeff());
            record(t, rep.pass && max_gap <= 1e-12);
        } else if (suite == "gk") {
            auto f = cp::random_centered_observable(rng, pi);
            auto mask = cp::random_subset(rng, n, 1 + static_cast<int>(rng() % 3));
            double ref = cp::green_kubo_resolvent(P, pi, f, f).value;
            double ind = cp::green_kubo_induced(P, pi, mask, f).value;
            auto u = cp::random_centered_observable(rng, pi);
            double shifted = cp::green_kubo_shifted(P, pi, f, u, f).value;
            record(t, std::abs(ref - ind) <= 1e-8 && std::abs(shifted - ref) <= 1e-10);
        } else if (suite == "tau3") {
            auto f = cp::random_centered_observable(rng, pi);
            auto g = cp::random_centered_observable(rng, pi);
            auto h = cp::random_centered_observable(rng, pi);
            auto a = cp::tau3_series(P, pi, f, g, h);
            auto b = cp::tau3_shifted_form(P, pi, f, g, h);
            auto c = cp::tau3_via_sigma(P, pi, f, g, h, 1e-11);
            record(t, std::abs(a.value - b.value) <= 1e-11 &&
                          std::abs(a.value - c.value) <= c.truncation_error_bound + 1e-10);
        } else if (suite == "duality") {
            auto mask = cp::random_subset(rng, n, 1 + static_cast<int>(rng() % (n - 1)));
            auto L = cp::dual_kernel(P, pi);
            auto LS = cp::induced_kernel(L, mask);
            auto S = mask.indices();
            cp::Measure piS{cp::subvector(pi.weights, S), false};
            auto PSd = cp::dual_kernel(cp::induced_kernel(P, mask), piS);
            double gap = (LS.rows - PSd.rows).cwiseAbs().maxCoeff();
            bool dual_irr = cp::classify(L).irreducible;
            double kac = piS.weights.dot(cp::expected_return_times(P, mask)) - 1.0;
            record(t, gap <= 1e-10 && dual_irr && std::abs(kac) <= 1e-10);
        } else if (suite == "lattice") {
            auto Pd = cp::validate_kernel(
                {"+", "-"}, (Eigen::MatrixXd(2, 2) << 0.5, 0.5, 0.5, 0.5).finished());
            auto srw = cp::make_lattice_model(Pd, {{{1, 0}}, {{-1, 0}}}, 1);
            int p = 1 + static_cast<int>(t % 3);
            auto he = cp::hitting_exact(srw, p, 400);
            record(t, std::abs(he.probability - 0.5 / p) <= 1e-10);
        } else {
            throw CLI::ValidationError("--suite", "unknown suite '" + suite + "'");
        }
    }
    report.results.push_back({"trials", "series", static_cast<double>(trials), 0.0});
    report.results.push_back({"failures", "series", static_cast<double>(failures), 0.0});
    report.checks.push_back({"all_trials_pass", failures == 0});
    emit(report, opts);
    return report.all_pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"finite-chain potential theory: induced kernels, Poisson solvers, "
                 "Green-Kubo and degree-3 invariants, lattice hitting probabilities"};
    app.require_subcommand(1);

    GlobalOpts opts;
    app.add_option("--tol", opts.tol, "series tolerance");
    app.add_option("--seed", opts.seed, "RNG seed for stochastic subcommands");
    app.add_option("--format", opts.format, "output format: json|csv|table")
        ->check(CLI::IsMember({"json", "csv", "table"}));

    std::string model_path = "-";
    std::vector<std::string> subset_labels;
    std::string f_name = "f", g_name, h_name;
    long paths = 1000, horizon = 1000, burn_in = 0, cap = 1000000, n_max = 100000;
    int workers = 1, ret_horizon = 24, radius = 2000;
    double bernoulli_p = 0.3;
    std::string gk_method = "all", lattice_method = "all", suite = "poisson";
    long trials = 100;
    std::vector<int> p_vec;

    auto* stationary = app.add_subcommand("stationary", "stationary measure of the model kernel");
    stationary->fallthrough();
    stationary->add_option("--model", model_path, "model file or - for stdin");

    auto* induce = app.add_subcommand("induce", "induced kernel and return-time table");
    induce->fallthrough();
    induce->add_option("--model", model_path);
    induce->add_option("--subset", subset_labels, "subset state labels");
    induce->add_option("--horizon", ret_horizon, "return-time table horizon");

    auto* poisson = app.add_subcommand("poisson", "solve (I-P)f = g and verify induction");
    poisson->fallthrough();
    poisson->add_option("--model", model_path);
    poisson->add_option("--g", g_name, "observable name for the right-hand side")->required();
    auto* poisson_subset = poisson->add_option("--subset", subset_labels);
    bool strict = false;
    poisson->add_flag("--strict", strict, "error when g is not supported on the subset");

    auto* gk = app.add_subcommand("green-kubo", "Green-Kubo bilinear form");
    gk->fallthrough();
    gk->add_option("--model", model_path);
    gk->add_option("--f", f_name)->required();
    gk->add_option("--g", g_name);
    gk->add_option("--subset", subset_labels);
    gk->add_option("--method", gk_method)
        ->check(CLI::IsMember({"all", "resolvent", "series", "excursion", "monte_carlo"}));
    gk->add_option("--paths", paths);
    gk->add_option("--horizon", horizon);
    gk->add_option("--burn-in", burn_in);
    gk->add_option("--workers", workers);

    auto* tau3 = app.add_subcommand("tau3", "degree-3 invariant by three routes");
    tau3->fallthrough();
    tau3->set_help_flag("--help", "print help");  // frees -h / --h for the third observable
    tau3->add_option("--model", model_path);
    tau3->add_option("--f", f_name)->required();
    tau3->add_option("--g", g_name);
    tau3->add_option("--h", h_name);
    auto* tau3_subset = tau3->add_option("--subset", subset_labels);

    auto* demo = app.add_subcommand("bernoulli-demo", "closed-form Bernoulli scheme end to end");
    demo->fallthrough();
    demo->add_option("--p", bernoulli_p, "success probability in (0,1)");

    auto* verify = app.add_subcommand("verify", "randomized property suites");
    verify->fallthrough();
    verify->add_option("--suite", suite)
        ->check(CLI::IsMember({"poisson", "gk", "tau3", "duality", "lattice"}));
    verify->add_option("--trials", trials);

    auto* lattice = app.add_subcommand("lattice", "Z^d extension tools");
    lattice->fallthrough();
    lattice->require_subcommand(1);
    auto* hit = lattice->add_subcommand("hit", "probability of hitting p before returning to 0");
    hit->fallthrough();
    std::string lattice_model_arg = "srw";
    hit->add_option("--p", p_vec, "target site (one or two integers)")->required();
    hit->add_option("--model", lattice_model_arg, "model file with lattice section, or 'srw'");
    hit->add_option("--method", lattice_method)
        ->check(CLI::IsMember({"all", "series", "exact", "mc"}));
    hit->add_option("--radius", radius, "absorbing-solve radius");
    hit->add_option("--n-max", n_max, "series horizon");
    hit->add_option("--paths", paths);
    hit->add_option("--cap", cap, "Monte Carlo step cap");
    hit->add_option("--workers", workers);

    try {
        app.parse(argc, argv);
        if (stationary->parsed()) return cmd_stationary(model_path, opts);
        if (induce->parsed()) return cmd_induce(model_path, subset_labels, ret_horizon, opts);
        if (poisson->parsed())
            return cmd_poisson(model_path, g_name, subset_labels,
                               poisson_subset->count() > 0, strict, opts);
        if (gk->parsed())
            return cmd_green_kubo(model_path, f_name, g_name, subset_labels, gk_method,
                                  paths, horizon, burn_in, workers, opts);
        if (tau3->parsed())
            return cmd_tau3(model_path, f_name, g_name, h_name, subset_labels,
                            tau3_subset->count() > 0, opts);
        if (demo->parsed()) return cmd_bernoulli_demo(bernoulli_p, opts);
        if (verify->parsed()) return cmd_verify(suite, trials, opts);
        if (lattice->parsed())
            return cmd_lattice_hit(lattice_model_arg, p_vec, lattice_method, radius, n_max, paths,
                                   cap, workers, opts);
        return 2;
    } catch (const CLI::ParseError& e) {
        json err = {{"error", "Usage"}, {"message", e.what()}};
        std::cout << err.dump(2) << "\n";
        return e.get_exit_code() == 0 ? 0 : 2;
    } catch (const cp::Error& e) {
        json err = {{"error", e.name()}, {"message", e.what()}};
        std::cout << err.dump(2) << "\n";
        return 2;
    } catch (const std::exception& e) {
        json err = {{"error", "Internal"}, {"message", e.what()}};
        std::cout << err.dump(2) << "\n";
        return 2;
    }
}
