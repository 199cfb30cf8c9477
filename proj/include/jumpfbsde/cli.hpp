#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "jumpfbsde/backward.hpp"
#include "jumpfbsde/config.hpp"
#include "jumpfbsde/errors.hpp"
#include "jumpfbsde/forward.hpp"
#include "jumpfbsde/harness.hpp"
#include "jumpfbsde/model.hpp"

namespace jumpfbsde {

namespace detail {

inline std::size_t parse_count(const std::string& s, const std::string& what) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size() || v == 0) throw CLI::ValidationError(what, "'" + s + "' is not a positive integer");
    return static_cast<std::size_t>(v);
}

inline std::vector<std::size_t> parse_list(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) out.push_back(parse_count(item, "--n-list"));
    return out;
}

inline const char* metric_name(std::size_t k) {
    static const char* names[] = {"err_x_sq", "err_y_sq", "err_z_sq", "err_u_sq"};
    return names[k];
}

}  // namespace detail

/// Command-line entry point. Exit codes: 0 success, 1 invalid input or
/// failed assumption probes, 2 numerical failure, 64 usage error.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Solver for decoupled forward-backward SDEs with a single jump", "fbsde"};
    std::string config_path, mode = "single", n_list_text = "8,16,32,64", basis_text, reference_text, out_path;
    std::string z_mode = "joint";
    std::optional<std::size_t> n;
    std::size_t paths = 200000, reference_paths = 0;
    int degree = 3;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    bool force = false, timing = false;

    app.add_option("--config", config_path, "Problem configuration file");
    app.add_option("--mode", mode, "single | converge | dump")->check(CLI::IsMember({"single", "converge", "dump"}));
    app.add_option("--n", n, "Number of time steps (single and dump modes)");
    app.add_option("--n-list", n_list_text, "Comma-separated step counts for converge mode");
    app.add_option("--paths", paths, "Monte Carlo paths");
    app.add_option("--basis-degree", degree, "Polynomial basis degree");
    app.add_option("--basis", basis_text, "poly:<degree> or local:<cells>");
    app.add_option("--z-estimator", z_mode, "joint | separate")->check(CLI::IsMember({"joint", "separate"}));
    app.add_option("--seed", seed, "Random seed");
    app.add_option("--out", out_path, "Output CSV (dump mode: file prefix)");
    app.add_option("--reference", reference_text, "closed[:<factor>] | fine:<factor>");
    app.add_option("--reference-paths", reference_paths, "Training paths of the fine-grid reference (0 = all)");
    app.add_flag("--force", force, "Run even if assumption probes fail");
    app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--timing", timing, "Record wall-clock runtime in the CSV");

    try {
        app.parse(argc, argv);
        if (config_path.empty()) throw CLI::RequiredError("--config");
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 64;
    }

    RunOptions opt;
    opt.paths = paths;
    opt.seed = seed;
    opt.timing = timing;
    opt.reference_paths = reference_paths;
    opt.backward.threads = threads;
    opt.backward.z_mode = z_mode == "joint" ? ZEstimator::joint : ZEstimator::separate;
    opt.backward.basis = BasisSpec::polynomial(degree);

    Problem problem;
    std::optional<std::size_t> config_n;
    std::vector<std::size_t> ladder;
    try {
        if (mode == "converge") ladder = detail::parse_list(n_list_text);
        std::ifstream probe(config_path);
        if (!probe) {
            err << "error: cannot open config file '" << config_path << "'\n\n" << app.help();
            return 64;
        }
        const ProblemConfig cfg = parse_config(probe);
        problem = make_problem(cfg);
        config_n = cfg.n_steps;
        if (!basis_text.empty()) {
            const auto colon = basis_text.find(':');
            const std::string kind = basis_text.substr(0, colon);
            const std::string arg = colon == std::string::npos ? "" : basis_text.substr(colon + 1);
            if (kind == "local") {
                opt.backward.basis = BasisSpec::local(detail::parse_count(arg, "--basis"));
            } else if (kind == "poly") {
                opt.backward.basis = BasisSpec::polynomial(static_cast<int>(detail::parse_count(arg, "--basis")));
            } else {
                throw CLI::ValidationError("--basis", "expected poly:<degree> or local:<cells>");
            }
        }
        opt.reference = problem.closed_form ? ReferenceKind::closed : ReferenceKind::fine;
        if (!reference_text.empty()) {
            const auto colon = reference_text.find(':');
            const std::string kind = reference_text.substr(0, colon);
            const std::string arg = colon == std::string::npos ? "" : reference_text.substr(colon + 1);
            if (kind == "closed") {
                opt.reference = ReferenceKind::closed;
                if (!arg.empty()) opt.factor = detail::parse_count(arg, "--reference");
            } else if (kind == "fine") {
                opt.reference = ReferenceKind::fine;
                opt.factor = detail::parse_count(arg, "--reference");
            } else {
                throw CLI::ValidationError("--reference", "expected closed[:<factor>] or fine:<factor>");
            }
        }
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 64;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    if (opt.reference == ReferenceKind::closed && !problem.closed_form) {
        err << "error: problem '" << problem.spec.name << "' has no closed-form reference\n";
        return 1;
    }

    const ValidationReport report = validate_assumptions(problem.spec, 4096, seed);
    if (!report.ok()) {
        err << "assumption probes failed:\n" << report.summary();
        if (!force) return 1;
        err << "continuing because --force was given\n";
    }

    try {
        if (mode == "converge") {
            const ConvergenceTable table = convergence_study(problem, ladder, opt);
            std::ofstream file;
            if (!out_path.empty()) {
                file.open(out_path);
                if (!file) throw std::runtime_error("cannot write '" + out_path + "'");
            }
            std::ostream& csv = out_path.empty() ? out : file;
            write_table_csv(csv, table);
            std::ostream& note = out_path.empty() ? err : out;
            for (std::size_t k = 0; k < 4; ++k) {
                const SlopeFit& s = table.slopes[k];
                note << "slope " << detail::metric_name(k) << ": ";
                if (s.slope) {
                    note << format_real(*s.slope) << (s.flagged ? " (outside [-1.5, -0.5])" : "");
                } else {
                    note << "skipped";
                }
                note << '\n';
            }
            return 0;
        }

        const std::size_t steps = n ? *n : (config_n ? *config_n : 32);
        if (mode == "single") {
            const RunResult r = run_once(problem, steps, opt);
            const ErrorReport& e = r.errors;
            out << "problem " << problem.spec.name << ", n " << r.n << ", paths " << e.paths << ", seed " << r.seed
                << '\n';
            out << "Y0(t0) = " << format_real(r.y0_start) << '\n';
            out << "U(t0) = " << format_real(r.u_start) << '\n';
            out << "err_x_sq = " << format_real(e.err_x_sq) << " (se " << format_real(e.se_x) << ")\n";
            out << "err_y_sq = " << format_real(e.err_y_sq) << " (se " << format_real(e.se_y) << ")\n";
            out << "err_z_sq = " << format_real(e.err_z_sq) << " (se " << format_real(e.se_z) << ")\n";
            out << "err_u_sq = " << format_real(e.err_u_sq) << " (se " << format_real(e.se_u) << ")\n";
            if (!out_path.empty()) {
                std::ofstream file(out_path);
                if (!file) throw std::runtime_error("cannot write '" + out_path + "'");
                write_table_header(file);
                write_table_row(file, r);
            }
            return 0;
        }

        if (out_path.empty()) {
            err << "error: dump mode needs --out <prefix>\n\n" << app.help();
            return 64;
        }
        const TimeGrid grid = TimeGrid::uniform(problem.spec.horizon, steps);
        const PathBundle bundle = simulate_bundle(grid, problem.spec.jump, paths, seed, threads);
        const SchemeSolution sol = solve_scheme(problem.spec, bundle, opt.backward);
        std::ofstream path_file(out_path + "_paths.csv");
        std::ofstream sol_file(out_path + "_solution.csv");
        if (!path_file || !sol_file) throw std::runtime_error("cannot write dump files with prefix '" + out_path + "'");
        write_paths_csv(path_file, materialize_branches(problem.spec, bundle, threads), grid);
        write_solution_csv(sol_file, sol, bundle);
        out << "wrote " << out_path << "_paths.csv and " << out_path << "_solution.csv\n";
        return 0;
    } catch (const NonConvergence& e) {
        err << "numerical failure: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace jumpfbsde
