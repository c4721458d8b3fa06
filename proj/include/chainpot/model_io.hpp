#ifndef CHAINPOT_MODEL_IO_HPP
#define CHAINPOT_MODEL_IO_HPP

#include "chainpot/lattice.hpp"
#include "chainpot/markov.hpp"
#include "chainpot/types.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

// Model-file schema shared by every subcommand:
//   {
//     "states":      ["a", "b", ...],
//     "kernel":      [[...], ...],               row-stochastic
//     "observables": {"f": [...], ...},          optional
//     "subset":      ["a", ...],                 optional
//     "lattice":     {"d": 1, "F": [1, -1]}      optional; d=2 uses [[1,0],...]
//   }
// and the machine report emitted by the CLI. Reports serialize with sorted
// keys, so the digest is stable under key reordering of the input file.

namespace chainpot {

using nlohmann::json;

struct ModelFile {
    StochasticKernel kernel;
    std::map<std::string, Observable> observables;
    std::optional<SubsetMask> subset;
    std::optional<LatticeModel> lattice;
    json canonical;  // parsed + re-serialized form, used for digests
};

inline ModelFile parse_model(const json& j) {
    if (!j.is_object()) throw Error(ErrorCode::invalid_argument, "model must be a JSON object");
    if (!j.contains("kernel")) throw Error(ErrorCode::invalid_argument, "model needs a 'kernel'");

    std::vector<std::string> states;
    if (j.contains("states")) {
        for (const auto& s : j.at("states")) states.push_back(s.get<std::string>());
    }
    const auto& rows_json = j.at("kernel");
    const auto n = rows_json.size();
    MatrixXd rows(n, n);
    for (size_t i = 0; i < n; ++i) {
        const auto& row = rows_json.at(i);
        if (row.size() != n)
            throw Error(ErrorCode::non_square, "kernel row " + std::to_string(i) + " has " +
                                                   std::to_string(row.size()) + " entries");
        for (size_t k = 0; k < n; ++k)
            rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                row.at(k).get<double>();
    }

    ModelFile model;
    model.kernel = validate_kernel(std::move(states), std::move(rows));

    if (j.contains("observables")) {
        for (const auto& [name, vals] : j.at("observables").items()) {
            if (vals.size() != n)
                throw Error(ErrorCode::invalid_argument,
                            "observable '" + name + "' length does not match state count");
            VectorXd v(static_cast<Eigen::Index>(n));
            for (size_t k = 0; k < n; ++k) v(static_cast<Eigen::Index>(k)) = vals.at(k).get<double>();
            model.observables[name] = make_observable(std::move(v));
        }
    }

    if (j.contains("subset")) {
        std::vector<int> idx;
        for (const auto& s : j.at("subset"))
            idx.push_back(model.kernel.index_of(s.get<std::string>()));
        model.subset = SubsetMask::of_indices(model.kernel.size(), idx);
    }

    if (j.contains("lattice")) {
        const auto& lj = j.at("lattice");
        int dim = lj.value("d", 1);
        std::vector<LatticePoint> steps;
        for (const auto& e : lj.at("F")) {
            LatticePoint pt{0, 0};
            if (e.is_array()) {
                pt[0] = e.at(0).get<int>();
                if (e.size() > 1) pt[1] = e.at(1).get<int>();
            } else {
                pt[0] = e.get<int>();
            }
            steps.push_back(pt);
        }
        model.lattice = make_lattice_model(model.kernel, std::move(steps), dim);
    }

    model.canonical = j;
    return model;
}

inline ModelFile load_model(const std::string& path) {
    json j;
    if (path == "-") {
        std::cin >> j;
    } else {
        std::ifstream in(path);
        if (!in) throw Error(ErrorCode::invalid_argument, "cannot open model file " + path);
        in >> j;
    }
    return parse_model(j);
}

// The Bernoulli scheme: a two-state i.i.d. chain with rows (p, 1-p), the
// observable -(1-p) on state "0" and p on state "1", inducing on {"0"}.
inline ModelFile bernoulli_model(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw Error(ErrorCode::invalid_argument, "bernoulli parameter must lie in (0,1)");
    json j = {
        {"states", {"0", "1"}},
        {"kernel", {{p, 1.0 - p}, {p, 1.0 - p}}},
        {"observables", {{"f", {-(1.0 - p), p}}}},
        {"subset", {"0"}},
    };
    return parse_model(j);
}

// --- reports ------------------------------------------------------------------

struct ReportEntry {
    std::string quantity;
    std::string method;
    double value = 0.0;
    double error_bound = 0.0;
};

struct ReportCheck {
    std::string name;
    bool pass = true;
};

struct Report {
    std::string command;
    std::string inputs_digest;
    std::uint64_t seed = 0;
    std::vector<ReportEntry> results;
    std::vector<ReportCheck> checks;

    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

inline std::string digest_of(const json& inputs) {
    std::string canon = inputs.dump();  // nlohmann objects serialize with sorted keys
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : canon) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

inline json to_json(const Report& r, const std::string& timestamp) {
    json results = json::array();
    for (const auto& e : r.results)
        results.push_back({{"quantity", e.quantity},
                           {"method", e.method},
                           {"value", e.value},
                           {"error_bound", e.error_bound}});
    json checks = json::array();
    for (const auto& c : r.checks) checks.push_back({{"name", c.name}, {"pass", c.pass}});
    return json{{"command", r.command}, {"inputs_digest", r.inputs_digest},
                {"seed", r.seed},       {"results", results},
                {"checks", checks},     {"timestamp", timestamp}};
}

inline std::string render_csv(const Report& r) {
    std::ostringstream out;
    out << "quantity,method,value,error_bound\n";
    for (const auto& e : r.results) {
        out << e.quantity << ',' << e.method << ',';
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", e.value, e.error_bound);
        out << buf;
    }
    for (const auto& c : r.checks) out << "check:" << c.name << ",," << (c.pass ? 1 : 0) << ",\n";
    return out.str();
}

inline std::string render_table(const Report& r) {
    std::ostringstream out;
    out << "# " << r.command << "  (digest " << r.inputs_digest << ", seed " << r.seed << ")\n";
    size_t w = 10;
    for (const auto& e : r.results) w = std::max(w, e.quantity.size());
    for (const auto& e : r.results) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "  % .12g", e.value);
        out << "  " << e.quantity << std::string(w - e.quantity.size() + 2, ' ') << "["
            << e.method << "]" << buf;
        if (e.error_bound > 0.0) {
            std::snprintf(buf, sizeof(buf), "  +/- %.3g", e.error_bound);
            out << buf;
        }
        out << '\n';
    }
    for (const auto& c : r.checks)
        out << "  " << (c.pass ? "[PASS] " : "[FAIL] ") << c.name << '\n';
    return out.str();
}

}  // namespace chainpot

#endif  // CHAINPOT_MODEL_IO_HPP
