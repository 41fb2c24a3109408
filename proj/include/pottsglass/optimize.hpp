#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "pottsglass/parisi.hpp"

namespace pottsglass {

struct OptimizeConfig {
    int levels = 2;         // s: number of path atoms
    int restarts = 4;       // independent simplex starts
    int max_iterations = 400;
    double tolerance = 1e-9;
    EvalSettings eval;

    void validate() const;
};

struct MinimizeResult {
    SymmetricPath symmetric_path;  // filled by minimize_symmetric
    DiscretePath path;
    ParisiValue value;
    bool converged = true;
};

// Minimizes P(pi, lambda=0) over s-atom symmetric paths for a
// permutation-symmetric spec at the balanced magnetization.  Weights use a
// stick-breaking parametrization, atoms a cumulative-sigmoid one, so every
// candidate is feasible by construction.  `warm_start` seeds one restart.
MinimizeResult minimize_symmetric(const CovarianceSpec& spec, int kappa,
                                  const OptimizeConfig& config,
                                  const std::optional<SymmetricPath>& warm_start = std::nullopt);

// kappa = 2 only: minimizes the dual functional eval_parisi over general
// constrained paths; each level matrix is determined by its (1,1) entry.
MinimizeResult minimize_general_k2(const CovarianceSpec& spec, const Magnetization& d,
                                   const OptimizeConfig& config);

struct GroundStatePoint {
    double beta = 0.0;
    std::vector<double> value_by_s;  // (1/beta) * minimized value, s = 1..levels
    std::vector<double> error_by_s;
    double value = 0.0;  // deepest-s value
    double error = 0.0;
};

struct GroundStateReport {
    std::vector<GroundStatePoint> points;
    double extrapolated = 0.0;  // intercept of the a + b/beta fit
    double slope = 0.0;
    double fit_residual = 0.0;  // max abs fit residual
    bool monotone_in_s = true;  // non-increasing in s within 2x error
    bool monotone_in_beta = true;
};

// Per beta in `betas` (strictly increasing): minimize over symmetric paths
// with s = 1..config.levels (warm-starting each depth from the previous one)
// and report (1/beta) * inf.  Fits a + b/beta and extrapolates beta -> inf.
GroundStateReport ground_state(const std::function<CovarianceSpec(double)>& spec_template,
                               int kappa, const std::vector<double>& betas,
                               const OptimizeConfig& config);

}  // namespace pottsglass
