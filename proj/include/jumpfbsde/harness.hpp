#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "jumpfbsde/backward.hpp"
#include "jumpfbsde/csv.hpp"
#include "jumpfbsde/forward.hpp"
#include "jumpfbsde/model.hpp"
#include "jumpfbsde/parallel.hpp"
#include "jumpfbsde/problems.hpp"
#include "jumpfbsde/recombine.hpp"
#include "jumpfbsde/timegrid.hpp"

namespace jumpfbsde {

/// Squared-error estimates on the evaluation grid s_0 < ... < s_m:
///   err_x = E max_k |X - X^pi|^2(s_k)
///   err_y = max_k E |Y - Y^pi|^2(s_k)
///   err_z = E sum_{k<m} |Z - Z^pi|^2(s_k) (s_{k+1} - s_k)
///   err_u = E sum_{k<m} lambda(s_k) |U - U^pi|^2(s_k) (s_{k+1} - s_k)
/// Standard errors come from the per-path samples; for err_y from the
/// maximizing date.
struct ErrorReport {
    double err_x_sq = 0.0, err_y_sq = 0.0, err_z_sq = 0.0, err_u_sq = 0.0;
    double se_x = 0.0, se_y = 0.0, se_z = 0.0, se_u = 0.0;
    std::size_t paths = 0;
};

/// Trace of the approximation for one path, on its own grid.
using TraceFn = std::function<PathTrace(std::size_t path)>;
/// Reference values at every evaluation date for one path.
using ReferenceFn = std::function<void(std::size_t path, std::vector<SchemeValues>& out)>;

inline ErrorReport error_metrics(const TimeGrid& grid, const TimeGrid& eval, std::size_t paths, const TraceFn& approx,
                                 const ReferenceFn& reference, const JumpModel& jump, unsigned threads = 1) {
    if (paths == 0) throw std::invalid_argument("error metrics need at least one path");
    if (eval.horizon() != grid.horizon()) throw std::invalid_argument("evaluation grid horizon differs");
    const std::size_t m = eval.steps();
    std::vector<double> weight(m + 1, 0.0), rate(m + 1, 0.0);
    for (std::size_t k = 0; k < m; ++k) {
        weight[k] = eval.step(k + 1);
        rate[k] = jump.hazard(eval[k]);
    }
    struct Partial {
        std::array<double, 6> scalar{};  // x, x^2, z, z^2, u, u^2
        std::vector<double> y, y2;
    };
    std::vector<Partial> parts(block_count(paths));
    parallel_blocks(paths, threads, [&](std::size_t b, std::size_t begin, std::size_t end) {
        Partial& part = parts[b];
        part.y.assign(m + 1, 0.0);
        part.y2.assign(m + 1, 0.0);
        std::vector<SchemeValues> ref(m + 1);
        for (std::size_t p = begin; p < end; ++p) {
            const PathTrace tr = approx(p);
            reference(p, ref);
            double sup_x = 0.0, int_z = 0.0, int_u = 0.0;
            for (std::size_t k = 0; k <= m; ++k) {
                const SchemeValues v = evaluate_trace(tr, grid, eval[k]);
                const double dx = v.x - ref[k].x;
                const double dy = v.y - ref[k].y;
                sup_x = std::max(sup_x, dx * dx);
                part.y[k] += dy * dy;
                part.y2[k] += dy * dy * dy * dy;
                if (k < m) {
                    const double dz = v.z - ref[k].z;
                    const double du = v.u - ref[k].u;
                    int_z += dz * dz * weight[k];
                    int_u += rate[k] * du * du * weight[k];
                }
            }
            part.scalar[0] += sup_x;
            part.scalar[1] += sup_x * sup_x;
            part.scalar[2] += int_z;
            part.scalar[3] += int_z * int_z;
            part.scalar[4] += int_u;
            part.scalar[5] += int_u * int_u;
        }
    });
    std::array<double, 6> s{};
    std::vector<double> y(m + 1, 0.0), y2(m + 1, 0.0);
    for (const auto& part : parts) {
        for (std::size_t c = 0; c < 6; ++c) s[c] += part.scalar[c];
        for (std::size_t k = 0; k <= m; ++k) {
            y[k] += part.y[k];
            y2[k] += part.y2[k];
        }
    }
    const double N = static_cast<double>(paths);
    const auto se = [N](double sum, double sum_sq) {
        if (N < 2.0) return 0.0;
        const double mean = sum / N;
        return std::sqrt(std::max(0.0, sum_sq / N - mean * mean) / (N - 1.0));
    };
    ErrorReport r;
    r.paths = paths;
    r.err_x_sq = s[0] / N;
    r.se_x = se(s[0], s[1]);
    r.err_z_sq = s[2] / N;
    r.se_z = se(s[2], s[3]);
    r.err_u_sq = s[4] / N;
    r.se_u = se(s[4], s[5]);
    std::size_t arg = 0;
    for (std::size_t k = 1; k <= m; ++k) {
        if (y[k] > y[arg]) arg = k;
    }
    r.err_y_sq = y[arg] / N;
    r.se_y = se(y[arg], y2[arg]);
    return r;
}

/// Forward-only trace: X chains filled, backward quantities zero.
inline PathTrace trace_forward(const ProblemSpec& spec, const TimeGrid& grid, std::span<const double> dw, double tau) {
    const std::size_t n = grid.steps();
    PathTrace tr;
    tr.tau = tau;
    tr.jump = jump_index(grid, tau);
    tr.x0.resize(n + 1);
    tr.y0.assign(n + 1, 0.0);
    tr.z0.assign(n, 0.0);
    tr.diag.assign(n + 1, 0.0);
    x0_path(spec, grid, dw, tr.x0.data());
    if (tr.jump) {
        tr.x1.resize(n + 1);
        tr.y1.assign(n + 1, 0.0);
        tr.z1.assign(n, 0.0);
        x1_path(spec, grid, dw, tr.x0.data(), *tr.jump, tr.x1.data());
    }
    return tr;
}

inline std::vector<double> increment_row(const PathBundle& b, std::size_t path) {
    std::vector<double> dw(b.steps());
    const auto r = static_cast<Eigen::Index>(path);
    for (std::size_t i = 0; i < dw.size(); ++i) dw[i] = b.increments(r, static_cast<Eigen::Index>(i));
    return dw;
}

enum class ReferenceKind { closed, fine };

struct RunOptions {
    std::size_t paths = 200000;
    std::uint64_t seed = 1;
    BackwardOptions backward;
    ReferenceKind reference = ReferenceKind::fine;
    std::size_t factor = 4;
    /// Training paths of the fine-grid reference; 0 means all paths.
    std::size_t reference_paths = 0;
    bool forward_only = false;
    bool timing = false;
};

struct RunResult {
    std::size_t n = 0;
    double mesh = 0.0;
    ErrorReport errors;
    double y0_start = 0.0;  ///< Y0 at t_0
    double u_start = 0.0;   ///< U at t_0
    double runtime_ms = 0.0;
    std::uint64_t seed = 0;
};

/// One coarse run against its reference on the same Brownian paths and jump times.
inline RunResult run_once(const Problem& problem, std::size_t n, const RunOptions& opt) {
    const auto started = std::chrono::steady_clock::now();
    const ProblemSpec& spec = problem.spec;
    const TimeGrid grid = TimeGrid::uniform(spec.horizon, n);
    if (opt.reference == ReferenceKind::closed && !problem.closed_form) {
        throw std::invalid_argument("problem '" + spec.name + "' has no closed-form reference");
    }
    const unsigned threads = opt.backward.threads;
    const CoupledBundle coupled = simulate_coupled(grid, opt.factor, spec.jump, opt.paths, opt.seed, threads);
    const TimeGrid& eval = coupled.fine.grid;
    RunResult result;
    result.n = n;
    result.mesh = grid.mesh();
    result.seed = opt.seed;

    TraceFn approx;
    ReferenceFn reference;
    std::shared_ptr<const SchemeSolution> coarse_sol;
    std::shared_ptr<const SchemeSolution> fine_sol;

    if (opt.forward_only) {
        approx = [&](std::size_t p) {
            return trace_forward(spec, grid, increment_row(coupled.coarse, p), coupled.coarse.tau[p]);
        };
    } else {
        coarse_sol = std::make_shared<const SchemeSolution>(solve_scheme(spec, coupled.coarse, opt.backward));
        result.y0_start = coarse_sol->zero.y_start;
        result.u_start = coarse_sol->branches.diagonal(0, 0) - coarse_sol->zero.y_start;
        approx = [&](std::size_t p) {
            return trace_path(*coarse_sol, increment_row(coupled.coarse, p), coupled.coarse.tau[p]);
        };
    }

    if (opt.reference == ReferenceKind::closed) {
        reference = [&](std::size_t p, std::vector<SchemeValues>& out) {
            const auto r = static_cast<Eigen::Index>(p);
            double w = 0.0;
            for (std::size_t k = 0; k <= eval.steps(); ++k) {
                if (k > 0) w += coupled.fine.increments(r, static_cast<Eigen::Index>(k - 1));
                const ExactValues e = (*problem.closed_form)(eval[k], w, coupled.fine.tau[p]);
                out[k] = opt.forward_only ? SchemeValues{e.x, 0.0, 0.0, 0.0} : SchemeValues{e.x, e.y, e.z, e.u};
            }
        };
    } else if (opt.forward_only) {
        reference = [&](std::size_t p, std::vector<SchemeValues>& out) {
            const PathTrace tr = trace_forward(spec, eval, increment_row(coupled.fine, p), coupled.fine.tau[p]);
            for (std::size_t k = 0; k <= eval.steps(); ++k) out[k] = evaluate_trace(tr, eval, eval[k]);
        };
    } else {
        const std::size_t train = opt.reference_paths == 0 ? opt.paths : std::min(opt.reference_paths, opt.paths);
        fine_sol = std::make_shared<const SchemeSolution>(
            solve_scheme(spec, train == opt.paths ? coupled.fine : coupled.fine.head(train), opt.backward));
        reference = [&](std::size_t p, std::vector<SchemeValues>& out) {
            const PathTrace tr = trace_path(*fine_sol, increment_row(coupled.fine, p), coupled.fine.tau[p]);
            for (std::size_t k = 0; k <= eval.steps(); ++k) out[k] = evaluate_trace(tr, eval, eval[k]);
        };
    }

    result.errors = error_metrics(grid, eval, opt.paths, approx, reference, spec.jump, threads);
    if (opt.timing) {
        result.runtime_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    }
    return result;
}

enum class Metric { x, y, z, u };

struct SlopeFit {
    std::optional<double> slope;  ///< empty when skipped (a zero error or fewer than 3 rows)
    bool flagged = false;         ///< skipped, or outside [-1.5, -0.5]
};

struct ConvergenceTable {
    std::vector<RunResult> rows;
    std::array<SlopeFit, 4> slopes{};

    const SlopeFit& slope(Metric m) const { return slopes[static_cast<std::size_t>(m)]; }
};

inline double metric_value(const ErrorReport& r, Metric m) {
    switch (m) {
        case Metric::x: return r.err_x_sq;
        case Metric::y: return r.err_y_sq;
        case Metric::z: return r.err_z_sq;
        case Metric::u: return r.err_u_sq;
    }
    return 0.0;
}

/// Least-squares slope of log(err) against log(n).
inline SlopeFit fit_slope(const std::vector<RunResult>& rows, Metric m) {
    SlopeFit out;
    out.flagged = true;
    if (rows.size() < 3) return out;
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (const auto& r : rows) {
        const double e = metric_value(r.errors, m);
        if (!(e > 0.0)) return out;
        const double lx = std::log(static_cast<double>(r.n));
        const double ly = std::log(e);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double N = static_cast<double>(rows.size());
    out.slope = (N * sxy - sx * sy) / (N * sxx - sx * sx);
    out.flagged = *out.slope < -1.5 || *out.slope > -0.5;
    return out;
}

/// Runs the ladder sequentially and fits the four slopes.
inline ConvergenceTable convergence_study(const Problem& problem, std::vector<std::size_t> n_list,
                                          const RunOptions& opt,
                                          const std::function<void(const RunResult&)>& progress = {}) {
    if (n_list.size() < 3) throw std::invalid_argument("convergence study needs at least 3 grid sizes");
    if (!std::is_sorted(n_list.begin(), n_list.end()) ||
        std::adjacent_find(n_list.begin(), n_list.end()) != n_list.end()) {
        throw std::invalid_argument("grid sizes must be strictly increasing");
    }
    ConvergenceTable table;
    for (std::size_t n : n_list) {
        table.rows.push_back(run_once(problem, n, opt));
        if (progress) progress(table.rows.back());
    }
    for (std::size_t k = 0; k < 4; ++k) table.slopes[k] = fit_slope(table.rows, static_cast<Metric>(k));
    return table;
}

inline void write_table_header(std::ostream& out) {
    out << "n,mesh,err_x_sq,err_y_sq,err_z_sq,err_u_sq,se_x,se_y,se_z,se_u,runtime_ms,seed\n";
}

inline void write_table_row(std::ostream& out, const RunResult& r) {
    const ErrorReport& e = r.errors;
    out << r.n << ',' << format_real(r.mesh) << ',' << format_real(e.err_x_sq) << ',' << format_real(e.err_y_sq)
        << ',' << format_real(e.err_z_sq) << ',' << format_real(e.err_u_sq) << ',' << format_real(e.se_x) << ','
        << format_real(e.se_y) << ',' << format_real(e.se_z) << ',' << format_real(e.se_u) << ','
        << format_real(r.runtime_ms) << ',' << r.seed << '\n';
}

inline void write_table_csv(std::ostream& out, const ConvergenceTable& table) {
    write_table_header(out);
    for (const auto& r : table.rows) write_table_row(out, r);
}

}  // namespace jumpfbsde
