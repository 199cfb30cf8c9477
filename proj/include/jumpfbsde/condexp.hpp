#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "jumpfbsde/forward.hpp"
#include "jumpfbsde/model.hpp"
#include "jumpfbsde/parallel.hpp"
#include "jumpfbsde/random.hpp"
#include "jumpfbsde/timegrid.hpp"

namespace jumpfbsde {

/// Regression basis on the scalar Markov state.
struct BasisSpec {
    enum class Kind { polynomial, local };

    Kind kind = Kind::polynomial;
    int degree = 3;
    std::size_t cells = 8;
    bool standardize = true;

    static BasisSpec polynomial(int degree, bool standardize = true) {
        return {Kind::polynomial, degree, 0, standardize};
    }
    /// Piecewise-linear hat functions on `cells` equal cells spanning the
    /// training range (cells + 1 functions, summing to one).
    static BasisSpec local(std::size_t cells) { return {Kind::local, 1, cells, true}; }

    std::size_t size() const {
        return kind == Kind::polynomial ? static_cast<std::size_t>(degree) + 1 : cells + 1;
    }

    void check() const {
        if (kind == Kind::polynomial && degree < 0) throw std::invalid_argument("basis degree must be >= 0");
        if (kind == Kind::local && cells < 1) throw std::invalid_argument("local basis needs >= 1 cell");
    }
};

/// Basis functions bound to the standardization of one training sample.
class Features {
public:
    Features() = default;

    Features(const BasisSpec& spec, std::span<const double> states) : spec_(spec) {
        spec.check();
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (double s : states) {
            if (!std::isfinite(s)) throw std::invalid_argument("non-finite regression state");
            lo = std::min(lo, s);
            hi = std::max(hi, s);
        }
        if (states.empty()) throw std::invalid_argument("empty regression sample");
        degenerate_ = !(hi - lo > 1e-12 * std::max(1.0, std::abs(lo)));
        if (degenerate_) {
            center_ = states[0];
            return;
        }
        if (spec.kind == BasisSpec::Kind::local) {
            center_ = lo;
            scale_ = (hi - lo) / static_cast<double>(spec.cells);
        } else if (spec.standardize) {
            center_ = ordered_mean(states);
            std::vector<double> sq(states.size());
            for (std::size_t k = 0; k < states.size(); ++k) sq[k] = (states[k] - center_) * (states[k] - center_);
            scale_ = std::sqrt(ordered_mean(sq));
        }
    }

    bool degenerate() const { return degenerate_; }
    std::size_t size() const { return degenerate_ ? 1 : spec_.size(); }
    const BasisSpec& spec() const { return spec_; }

    void eval(double x, double* out) const {
        if (degenerate_) {
            out[0] = 1.0;
            return;
        }
        const double s = (x - center_) / scale_;
        if (spec_.kind == BasisSpec::Kind::polynomial) {
            double v = 1.0;
            for (int k = 0; k <= spec_.degree; ++k) {
                out[k] = v;
                v *= s;
            }
            return;
        }
        const std::size_t m = spec_.cells;
        std::fill(out, out + m + 1, 0.0);
        const double c = std::clamp(s, 0.0, static_cast<double>(m));
        const auto cell = std::min(static_cast<std::size_t>(c), m - 1);
        const double w = c - static_cast<double>(cell);
        out[cell] = 1.0 - w;
        out[cell + 1] = w;
    }

    /// Sum in fixed block order, independent of thread count.
    static double ordered_mean(std::span<const double> v) {
        double total = 0.0;
        for (std::size_t b = 0; b < block_count(v.size()); ++b) {
            double part = 0.0;
            const std::size_t end = std::min(v.size(), (b + 1) * kPathBlock);
            for (std::size_t k = b * kPathBlock; k < end; ++k) part += v[k];
            total += part;
        }
        return total / static_cast<double>(v.size());
    }

private:
    BasisSpec spec_;
    double center_ = 0.0;
    double scale_ = 1.0;
    bool degenerate_ = false;
};

struct FitDiagnostics {
    double residual_rms = 0.0;
    double condition = 1.0;
    std::size_t rank = 0;
    bool rank_deficient = false;
    bool constant_target = false;
};

namespace detail {

/// Least squares for several targets sharing one design matrix.
/// fill(begin, end, block) writes rows [begin, end) into block, design
/// columns first, then targets. Blockwise Householder QR over fixed
/// blocks, stacked R factors reduced in block order, minimum-norm solve
/// on the small triangular factor.
struct LeastSquaresResult {
    Eigen::MatrixXd coefficients;
    Eigen::VectorXd residual_ss;
    double condition = 1.0;
    std::size_t rank = 0;
};

template <class Fill>
LeastSquaresResult block_least_squares(std::size_t rows, std::size_t cols, std::size_t targets, unsigned threads,
                                       Fill&& fill) {
    const std::size_t width = cols + targets;
    const std::size_t blocks = block_count(rows);
    std::vector<Eigen::MatrixXd> factors(blocks);
    parallel_blocks(rows, threads, [&](std::size_t b, std::size_t begin, std::size_t end) {
        Eigen::MatrixXd block(static_cast<Eigen::Index>(end - begin), static_cast<Eigen::Index>(width));
        fill(begin, end, block);
        if (!block.allFinite()) throw std::invalid_argument("non-finite regression input");
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(block);
        const auto keep = std::min<Eigen::Index>(block.rows(), block.cols());
        factors[b] = qr.matrixQR().topRows(keep).triangularView<Eigen::Upper>();
    });
    Eigen::Index stacked_rows = 0;
    for (const auto& f : factors) stacked_rows += f.rows();
    Eigen::MatrixXd stacked(stacked_rows, static_cast<Eigen::Index>(width));
    Eigen::Index at = 0;
    for (const auto& f : factors) {
        stacked.middleRows(at, f.rows()) = f;
        at += f.rows();
    }
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(width));
    {
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(stacked);
        const auto keep = std::min<Eigen::Index>(stacked.rows(), stacked.cols());
        R.topRows(keep) = qr.matrixQR().topRows(keep).triangularView<Eigen::Upper>();
    }
    const auto p = static_cast<Eigen::Index>(cols);
    const auto m = static_cast<Eigen::Index>(targets);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(R.topLeftCorner(p, p), Eigen::ComputeFullU | Eigen::ComputeFullV);
    svd.setThreshold(1e-11);
    LeastSquaresResult out;
    out.coefficients = svd.solve(R.topRightCorner(p, m));
    out.rank = static_cast<std::size_t>(svd.rank());
    const auto& sv = svd.singularValues();
    out.condition = sv(p - 1) > 0.0 ? sv(0) / sv(p - 1) : std::numeric_limits<double>::infinity();
    out.residual_ss = R.bottomRightCorner(m, m).colwise().squaredNorm().transpose();
    return out;
}

inline bool all_equal(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; });
}

inline void check_size(std::size_t samples, std::size_t columns) {
    if (samples < 10 * columns) {
        throw std::invalid_argument("regression needs at least 10 samples per basis column (" + std::to_string(samples) +
                                    " samples, " + std::to_string(columns) + " columns)");
    }
}

}  // namespace detail

/// Least-squares projection of targets on the basis functions of the state.
class FittedConditional {
public:
    FittedConditional() = default;
    FittedConditional(Features features, Eigen::VectorXd coefficients, FitDiagnostics diagnostics, double constant)
        : features_(std::move(features)), coef_(std::move(coefficients)), diag_(diagnostics), constant_(constant) {}

    double operator()(double x) const {
        if (diag_.constant_target) return constant_;
        double phi[64];
        features_.eval(x, phi);
        double acc = 0.0;
        for (Eigen::Index k = 0; k < coef_.size(); ++k) acc += coef_(k) * phi[k];
        return acc;
    }

    const Eigen::VectorXd& coefficients() const { return coef_; }
    const FitDiagnostics& diagnostics() const { return diag_; }
    const Features& features() const { return features_; }

private:
    Features features_;
    Eigen::VectorXd coef_;
    FitDiagnostics diag_;
    double constant_ = 0.0;
};

inline FittedConditional fit(const BasisSpec& basis, std::span<const double> states, std::span<const double> targets,
                             unsigned threads = 1) {
    if (states.size() != targets.size()) throw std::invalid_argument("states and targets differ in length");
    Features features(basis, states);
    const std::size_t p = features.size();
    if (p > 64) throw std::invalid_argument("basis larger than 64 functions");
    detail::check_size(states.size(), basis.size());
    for (double y : targets) {
        if (!std::isfinite(y)) throw std::invalid_argument("non-finite regression target");
    }
    if (detail::all_equal(targets)) {
        Eigen::VectorXd coef = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
        if (basis.kind == BasisSpec::Kind::local && !features.degenerate()) {
            coef.setConstant(targets[0]);
        } else {
            coef(0) = targets[0];
        }
        FitDiagnostics d;
        d.rank = p;
        d.constant_target = true;
        return {std::move(features), std::move(coef), d, targets[0]};
    }
    auto ls = detail::block_least_squares(states.size(), p, 1, threads,
                                          [&](std::size_t begin, std::size_t end, Eigen::MatrixXd& block) {
                                              double phi[64];
                                              for (std::size_t k = begin; k < end; ++k) {
                                                  const auto r = static_cast<Eigen::Index>(k - begin);
                                                  features.eval(states[k], phi);
                                                  for (std::size_t c = 0; c < p; ++c) {
                                                      block(r, static_cast<Eigen::Index>(c)) = phi[c];
                                                  }
                                                  block(r, static_cast<Eigen::Index>(p)) = targets[k];
                                              }
                                          });
    FitDiagnostics d;
    d.rank = ls.rank;
    d.rank_deficient = ls.rank < p;
    d.condition = ls.condition;
    d.residual_rms = std::sqrt(ls.residual_ss(0) / static_cast<double>(states.size()));
    return {std::move(features), ls.coefficients.col(0), d, 0.0};
}

inline double evaluate(const FittedConditional& f, double state) { return f(state); }

/// How the Z conditional expectation E[Y dW | X] / dt is estimated.
///  joint:    one regression of Y on [phi(X), phi(X) dW / sqrt(dt)]; the
///            first block is E[Y | X], the second block gives Z.
///  separate: two regressions on phi(X), of Y and of Y dW / dt.
enum class ZEstimator { joint, separate };

/// Fitted (value, Z) pair for one backward step.
class StepRegression {
public:
    StepRegression() = default;

    /// Regresses targets Y_{i+1} on the step-(i) states X_i, with dW the
    /// increments over (t_i, t_{i+1}] and dt = t_{i+1} - t_i.
    StepRegression(const BasisSpec& basis, std::span<const double> states, std::span<const double> targets,
                   std::span<const double> dw, double dt, ZEstimator mode, unsigned threads = 1)
        : features_(basis, states), mode_(mode) {
        const std::size_t n = states.size();
        if (targets.size() != n || dw.size() != n) throw std::invalid_argument("regression inputs differ in length");
        const std::size_t p = features_.size();
        if (p > 32) throw std::invalid_argument("basis larger than 32 functions");
        const std::size_t cols = mode == ZEstimator::joint ? 2 * basis.size() : basis.size();
        detail::check_size(n, cols);
        for (std::size_t k = 0; k < n; ++k) {
            if (!std::isfinite(targets[k]) || !std::isfinite(dw[k])) {
                throw std::invalid_argument("non-finite regression input");
            }
        }
        const auto P = static_cast<Eigen::Index>(p);
        if (detail::all_equal(targets)) {
            constant_ = true;
            constant_value_ = targets[0];
            value_ = Eigen::VectorXd::Zero(P);
            gradient_ = Eigen::VectorXd::Zero(P);
            diag_.rank = p;
            diag_.constant_target = true;
            return;
        }
        const double root = std::sqrt(dt);
        if (mode == ZEstimator::joint) {
            auto ls = detail::block_least_squares(n, 2 * p, 1, threads,
                                                  [&](std::size_t begin, std::size_t end, Eigen::MatrixXd& block) {
                                                      double phi[32];
                                                      for (std::size_t k = begin; k < end; ++k) {
                                                          const auto r = static_cast<Eigen::Index>(k - begin);
                                                          features_.eval(states[k], phi);
                                                          const double w = dw[k] / root;
                                                          for (std::size_t c = 0; c < p; ++c) {
                                                              const auto C = static_cast<Eigen::Index>(c);
                                                              block(r, C) = phi[c];
                                                              block(r, C + P) = phi[c] * w;
                                                          }
                                                          block(r, 2 * P) = targets[k];
                                                      }
                                                  });
            value_ = ls.coefficients.col(0).head(P);
            gradient_ = ls.coefficients.col(0).tail(P) / root;
            record(ls, n, 2 * p);
        } else {
            auto ls = detail::block_least_squares(n, p, 2, threads,
                                                  [&](std::size_t begin, std::size_t end, Eigen::MatrixXd& block) {
                                                      double phi[32];
                                                      for (std::size_t k = begin; k < end; ++k) {
                                                          const auto r = static_cast<Eigen::Index>(k - begin);
                                                          features_.eval(states[k], phi);
                                                          for (std::size_t c = 0; c < p; ++c) {
                                                              block(r, static_cast<Eigen::Index>(c)) = phi[c];
                                                          }
                                                          block(r, P) = targets[k];
                                                          block(r, P + 1) = targets[k] * dw[k] / dt;
                                                      }
                                                  });
            value_ = ls.coefficients.col(0);
            gradient_ = ls.coefficients.col(1);
            record(ls, n, p);
        }
    }

    /// Estimates of E[Y_{i+1} | X_i = x] and E[Y_{i+1} dW | X_i = x] / dt.
    void operator()(double x, double& value, double& z) const {
        if (constant_) {
            value = constant_value_;
            z = 0.0;
            return;
        }
        double phi[32];
        features_.eval(x, phi);
        double v = 0.0, g = 0.0;
        for (Eigen::Index k = 0; k < value_.size(); ++k) {
            v += value_(k) * phi[k];
            g += gradient_(k) * phi[k];
        }
        value = v;
        z = g;
    }

    const FitDiagnostics& diagnostics() const { return diag_; }
    ZEstimator mode() const { return mode_; }

private:
    void record(const detail::LeastSquaresResult& ls, std::size_t n, std::size_t cols) {
        diag_.rank = ls.rank;
        diag_.rank_deficient = ls.rank < cols;
        diag_.condition = ls.condition;
        diag_.residual_rms = std::sqrt(ls.residual_ss(0) / static_cast<double>(n));
    }

    Features features_;
    ZEstimator mode_ = ZEstimator::joint;
    Eigen::VectorXd value_;
    Eigen::VectorXd gradient_;
    FitDiagnostics diag_;
    bool constant_ = false;
    double constant_value_ = 0.0;
};

struct OracleEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;
};

/// Functional of a sub-path: x holds X_{t_i}, ..., X_{t_n}; dw holds the
/// increments over steps i + 1, ..., n.
using PathFunctional = std::function<double(std::span<const double> x, std::span<const double> dw)>;

/// Brute-force conditional expectation: plain Monte Carlo over fresh Euler
/// sub-paths of the pre-jump dynamics started at (t_i, state).
inline OracleEstimate nested_mc_oracle(const ProblemSpec& spec, const TimeGrid& grid, double state, std::size_t step,
                                       const PathFunctional& payoff, std::size_t inner_paths, std::uint64_t seed) {
    if (inner_paths < 1000) throw std::invalid_argument("nested oracle needs at least 1000 inner paths");
    if (step > grid.steps()) throw std::out_of_range("oracle step beyond grid");
    const std::size_t len = grid.steps() - step;
    std::vector<double> x(len + 1), dw(len);
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t p = 0; p < inner_paths; ++p) {
        CounterRng rng(seed, p);
        std::normal_distribution<double> normal(0.0, 1.0);
        x[0] = state;
        for (std::size_t k = 0; k < len; ++k) {
            const std::size_t i = step + k + 1;
            dw[k] = std::sqrt(grid.step(i)) * normal(rng);
            x[k + 1] = euler_step(spec, grid[i - 1], x[k], grid.step(i), dw[k], i, p);
        }
        const double v = payoff(x, dw);
        sum += v;
        sum_sq += v * v;
    }
    const double N = static_cast<double>(inner_paths);
    const double mean = sum / N;
    const double var = std::max(0.0, sum_sq / N - mean * mean) * N / (N - 1.0);
    return {mean, std::sqrt(var / N)};
}

}  // namespace jumpfbsde
