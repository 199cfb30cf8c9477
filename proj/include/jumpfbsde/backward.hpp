#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "jumpfbsde/condexp.hpp"
#include "jumpfbsde/csv.hpp"
#include "jumpfbsde/errors.hpp"
#include "jumpfbsde/forward.hpp"
#include "jumpfbsde/model.hpp"
#include "jumpfbsde/parallel.hpp"
#include "jumpfbsde/timegrid.hpp"

namespace jumpfbsde {

struct PicardOptions {
    double tol = 1e-12;
    std::size_t max_iter = 50;
    /// Lipschitz constant of the generator in y; when set, L * dt >= 1
    /// fails before iterating.
    std::optional<double> lipschitz_y;
};

struct ImplicitResult {
    double y;
    std::size_t iterations;
    double residual;
};

/// Fixed point of y = e_y + fy(y) * dt by Picard iteration from e_y.
/// Stops when |y_{k+1} - y_k| <= tol * max(1, |y_k|).
template <class F>
ImplicitResult implicit_step(F&& fy, double e_y, double dt, const PicardOptions& opt = {}) {
    if (!(dt > 0.0)) throw std::invalid_argument("implicit step needs dt > 0");
    if (opt.lipschitz_y && *opt.lipschitz_y * dt >= 1.0) {
        std::ostringstream msg;
        msg << "implicit step is not a contraction: L_y * dt = " << *opt.lipschitz_y * dt << " >= 1";
        throw NonConvergence(msg.str(), std::numeric_limits<double>::infinity());
    }
    double y = e_y;
    double diff = 0.0;
    for (std::size_t k = 1; k <= opt.max_iter; ++k) {
        const double next = e_y + fy(y) * dt;
        if (!std::isfinite(next)) throw NumericalError("non-finite value in implicit step");
        diff = std::abs(next - y);
        const double scale = std::max(1.0, std::abs(y));
        y = next;
        if (diff <= opt.tol * scale) return {y, k, diff};
    }
    std::ostringstream msg;
    msg << "implicit step did not converge in " << opt.max_iter << " iterations (last change " << diff << ")";
    throw NonConvergence(msg.str(), diff);
}

/// y = e_y + f(t, x, y, z, u) dt with u fixed.
inline ImplicitResult implicit_step(const Generator& f, double x, double e_y, double z, double t, double dt,
                                    const PicardOptions& opt = {}, double u = 0.0) {
    return implicit_step([&](double y) { return f(t, x, y, z, u); }, e_y, dt, opt);
}

struct BackwardOptions {
    BasisSpec basis;
    ZEstimator z_mode = ZEstimator::joint;
    PicardOptions picard;
    unsigned threads = 1;
};

/// Regressions of one backward chain: steps[i - start] maps X_{t_i} to
/// estimates of E_i[Y_{t_{i+1}}] and Z_{t_i}, for start <= i < n.
struct ChainFits {
    std::size_t start = 0;
    std::vector<StepRegression> steps;

    const StepRegression& at(std::size_t i) const { return steps.at(i - start); }
};

/// Scheme value (Y_{t_i}, Z_{t_i}) at state x from the step-i regression.
/// u_of_y gives the jump argument of the generator as a function of y.
template <class U>
double scheme_value(const Generator& f, const StepRegression& reg, double t, double x, double dt,
                    const PicardOptions& opt, U&& u_of_y, double& z) {
    double e = 0.0;
    reg(x, e, z);
    const double zz = z;
    return implicit_step([&](double y) { return f(t, x, y, zz, u_of_y(y)); }, e, dt, opt).y;
}

/// Post-jump value Y1_{t_i}(t_j) at branch state x (u = 0); g(x) at i = n.
inline double branch_value(const Generator& f, const Terminal& g, const TimeGrid& grid, const ChainFits& fits,
                           std::size_t i, double x, const PicardOptions& opt, double& z) {
    if (i == grid.steps()) {
        z = std::numeric_limits<double>::quiet_NaN();
        return g(x);
    }
    return scheme_value(f, fits.at(i), grid[i], x, grid.step(i + 1), opt, [](double) { return 0.0; }, z);
}

/// Pre-jump value Y0_{t_i} at state x given the diagonal value Y1_{t_i}(t_i).
inline double zero_value(const Generator& f, const Terminal& g, const TimeGrid& grid, const ChainFits& fits,
                         std::size_t i, double x, double diag, const PicardOptions& opt, double& z) {
    if (i == grid.steps()) {
        z = std::numeric_limits<double>::quiet_NaN();
        return g(x);
    }
    return scheme_value(f, fits.at(i), grid[i], x, grid.step(i + 1), opt, [diag](double y) { return diag - y; }, z);
}

/// Backward chain on states x (paths x (n + 1)) from i = n down to start.
/// u(p, i, y) is the jump argument. Fills Y (column i for i >= start) and
/// Z (column i for start <= i < n) when non-null.
template <class U>
ChainFits backward_chain(const Generator& f, const Terminal& g, const PathBundle& bundle, const Eigen::MatrixXd& x,
                         std::size_t start, const BackwardOptions& opt, U&& u, Eigen::MatrixXd* Y_out,
                         Eigen::MatrixXd* Z_out, std::vector<double>* start_values = nullptr) {
    const TimeGrid& grid = bundle.grid;
    const std::size_t n = grid.steps();
    const std::size_t paths = bundle.paths();
    ChainFits fits;
    fits.start = start;
    fits.steps.resize(n - start);
    std::vector<double> y(paths), y_prev(paths), xs(paths), dw(paths);
    const auto N = static_cast<Eigen::Index>(n);
    parallel_for(paths, opt.threads, [&](std::size_t p) { y[p] = g(x(static_cast<Eigen::Index>(p), N)); });
    if (Y_out) {
        for (std::size_t p = 0; p < paths; ++p) (*Y_out)(static_cast<Eigen::Index>(p), N) = y[p];
    }
    for (std::size_t i = n; i-- > start;) {
        const auto I = static_cast<Eigen::Index>(i);
        const double t = grid[i];
        const double dt = grid.step(i + 1);
        for (std::size_t p = 0; p < paths; ++p) {
            xs[p] = x(static_cast<Eigen::Index>(p), I);
            dw[p] = bundle.increments(static_cast<Eigen::Index>(p), I);
        }
        auto& reg = fits.steps[i - start];
        reg = StepRegression(opt.basis, xs, y, dw, dt, opt.z_mode, opt.threads);
        parallel_for(paths, opt.threads, [&](std::size_t p) {
            double z = 0.0;
            y_prev[p] = scheme_value(f, reg, t, xs[p], dt, opt.picard, [&](double v) { return u(p, i, v); }, z);
            if (Z_out) (*Z_out)(static_cast<Eigen::Index>(p), I) = z;
        });
        std::swap(y, y_prev);
        if (Y_out) {
            for (std::size_t p = 0; p < paths; ++p) (*Y_out)(static_cast<Eigen::Index>(p), I) = y[p];
        }
    }
    if (start_values) *start_values = y;
    return fits;
}

/// Output of one branch solve (jump date t_j).
struct BranchSolution {
    ChainFits fits;
    /// Y1_{t_j}(t_j) per training path (the diagonal column j).
    std::vector<double> diagonal;
};

/// Post-jump scheme for branch j: backward from n to j with u = 0.
inline BranchSolution solve_branch(const ProblemSpec& spec, const Generator& f, const PathBundle& bundle,
                                   const Eigen::MatrixXd& x0, std::size_t j, const BackwardOptions& opt,
                                   Eigen::MatrixXd* Y_out = nullptr, Eigen::MatrixXd* Z_out = nullptr) {
    const Eigen::MatrixXd x1 = euler_x1(spec, bundle, x0, j, opt.threads);
    BranchSolution out;
    out.fits = backward_chain(
        f, spec.terminal, bundle, x1, j, opt, [](std::size_t, std::size_t, double) { return 0.0; }, Y_out, Z_out,
        &out.diagonal);
    return out;
}

/// Branch regressions for every jump date plus the diagonal per training path.
struct BranchSet {
    std::vector<std::optional<ChainFits>> fits;
    Eigen::MatrixXd diagonal;

    bool complete() const {
        for (const auto& f : fits) {
            if (!f) return false;
        }
        return !fits.empty();
    }
};

inline BranchSet solve_branches(const ProblemSpec& spec, const Generator& f, const PathBundle& bundle,
                                const Eigen::MatrixXd& x0, const BackwardOptions& opt) {
    const std::size_t n = bundle.steps();
    BranchSet set;
    set.fits.resize(n + 1);
    set.diagonal.resize(static_cast<Eigen::Index>(bundle.paths()), static_cast<Eigen::Index>(n + 1));
    for (std::size_t j = n + 1; j-- > 0;) {
        BranchSolution b = solve_branch(spec, f, bundle, x0, j, opt);
        set.diagonal.col(static_cast<Eigen::Index>(j)) =
            Eigen::Map<const Eigen::VectorXd>(b.diagonal.data(), static_cast<Eigen::Index>(b.diagonal.size()));
        set.fits[j] = std::move(b.fits);
    }
    return set;
}

/// Diagonal Y1_{t_i}(t_i) per training path; fails if any branch is unsolved.
inline const Eigen::MatrixXd& diagonal(const BranchSet& set) {
    for (std::size_t j = 0; j < set.fits.size(); ++j) {
        if (!set.fits[j]) throw std::logic_error("branch " + std::to_string(j) + " has not been solved");
    }
    if (set.fits.empty()) throw std::logic_error("no branches solved");
    return set.diagonal;
}

struct ZeroSolution {
    ChainFits fits;
    Eigen::MatrixXd Y;  ///< paths x (n + 1)
    Eigen::MatrixXd Z;  ///< paths x n
    double y_start = 0.0;
};

/// Pre-jump scheme with generator f(t, x, y, z, diag - y). Any diagonal of
/// shape paths x (n + 1) is accepted, so the same routine also runs the
/// intermediary scheme driven by a more accurate diagonal.
inline ZeroSolution solve_zero(const ProblemSpec& spec, const Generator& f, const PathBundle& bundle,
                               const Eigen::MatrixXd& x0, const Eigen::MatrixXd& diag, const BackwardOptions& opt) {
    const std::size_t n = bundle.steps();
    const auto rows = static_cast<Eigen::Index>(bundle.paths());
    if (diag.rows() != rows || diag.cols() != static_cast<Eigen::Index>(n + 1)) {
        throw std::invalid_argument("diagonal shape does not match the bundle");
    }
    ZeroSolution out;
    out.Y.resize(rows, static_cast<Eigen::Index>(n + 1));
    out.Z.resize(rows, static_cast<Eigen::Index>(n));
    out.fits = backward_chain(
        f, spec.terminal, bundle, x0, 0, opt,
        [&](std::size_t p, std::size_t i, double y) {
            return diag(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(i)) - y;
        },
        &out.Y, &out.Z);
    out.y_start = out.Y(0, 0);
    return out;
}

inline ZeroSolution solve_zero(const ProblemSpec& spec, const Generator& f, const PathBundle& bundle,
                               const Eigen::MatrixXd& x0, const BranchSet& branches, const BackwardOptions& opt) {
    return solve_zero(spec, f, bundle, x0, diagonal(branches), opt);
}

/// Plain Brownian BSDE on the pre-jump chain with u = 0 (no jump).
inline ZeroSolution solve_brownian(const ProblemSpec& spec, const Generator& f, const PathBundle& bundle,
                                   const Eigen::MatrixXd& x0, const BackwardOptions& opt) {
    const std::size_t n = bundle.steps();
    const auto rows = static_cast<Eigen::Index>(bundle.paths());
    ZeroSolution out;
    out.Y.resize(rows, static_cast<Eigen::Index>(n + 1));
    out.Z.resize(rows, static_cast<Eigen::Index>(n));
    out.fits = backward_chain(
        f, spec.terminal, bundle, x0, 0, opt, [](std::size_t, std::size_t, double) { return 0.0; }, &out.Y, &out.Z);
    out.y_start = out.Y(0, 0);
    return out;
}

/// Fills picard.lipschitz_y from the declared constants when unset.
inline BackwardOptions with_declared_lipschitz(const ProblemSpec& spec, BackwardOptions opt) {
    if (!opt.picard.lipschitz_y) opt.picard.lipschitz_y = declared_y_lipschitz(spec);
    return opt;
}

/// Complete discrete solution on one bundle: forward chain, all branches,
/// then the pre-jump scheme.
struct SchemeSolution {
    ProblemSpec spec;
    Generator generator;  ///< effective generator actually stepped
    TimeGrid grid;
    BackwardOptions options;
    Eigen::MatrixXd x0;
    BranchSet branches;
    ZeroSolution zero;
};

inline SchemeSolution solve_scheme(const ProblemSpec& spec, const PathBundle& bundle, BackwardOptions opt) {
    opt = with_declared_lipschitz(spec, opt);
    Generator f = effective_generator(spec);
    Eigen::MatrixXd x0 = euler_x0(spec, bundle, opt.threads);
    BranchSet branches = solve_branches(spec, f, bundle, x0, opt);
    ZeroSolution zero = solve_zero(spec, f, bundle, x0, branches, opt);
    return {spec, std::move(f), bundle.grid, opt, std::move(x0), std::move(branches), std::move(zero)};
}

/// CSV `kind,branch,i,path,y,z`: the pre-jump chain (branch -1) followed by
/// every branch j at i = j..n; z is empty at i = n.
inline void write_solution_csv(std::ostream& out, const SchemeSolution& sol, const PathBundle& bundle) {
    out << "kind,branch,i,path,y,z\n";
    const std::size_t n = sol.grid.steps();
    const auto paths = static_cast<Eigen::Index>(bundle.paths());
    for (std::size_t i = 0; i <= n; ++i) {
        for (Eigen::Index p = 0; p < paths; ++p) {
            out << "zero,-1," << i << ',' << p << ',' << format_real(sol.zero.Y(p, static_cast<Eigen::Index>(i))) << ',';
            if (i < n) out << format_real(sol.zero.Z(p, static_cast<Eigen::Index>(i)));
            out << '\n';
        }
    }
    for (std::size_t j = 0; j <= n; ++j) {
        const Eigen::MatrixXd x1 = euler_x1(sol.spec, bundle, sol.x0, j, sol.options.threads);
        const ChainFits& fits = *sol.branches.fits[j];
        for (std::size_t i = j; i <= n; ++i) {
            for (Eigen::Index p = 0; p < paths; ++p) {
                double z = 0.0;
                const double y = branch_value(sol.generator, sol.spec.terminal, sol.grid, fits, i,
                                              x1(p, static_cast<Eigen::Index>(i)), sol.options.picard, z);
                out << "branch," << j << ',' << i << ',' << p << ',' << format_real(y) << ',';
                if (i < n) out << format_real(z);
                out << '\n';
            }
        }
    }
}

}  // namespace jumpfbsde
