#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "pottsglass/covariance.hpp"
#include "pottsglass/paths.hpp"

namespace pottsglass {

enum class EvalMethod { Auto, TensorQuadrature, MonteCarlo };

struct EvalSettings {
    EvalMethod method = EvalMethod::Auto;
    int nodes_per_dim = 16;      // tensor quadrature
    int samples_per_level = 2000;  // Monte Carlo
    std::uint64_t seed = 1;
    // Integrate the 11^T component of symmetric-path increments analytically,
    // reducing the quadrature dimension per level by one.
    bool reduce_symmetric = true;
    bool with_error = true;
    int threads = 0;  // 0: resolve from POTTSGLASS_THREADS, default 1
    // Tensor quadrature is used when its leaf count stays below this budget;
    // EvalMethod::Auto falls back to Monte Carlo beyond it.
    double quadrature_budget = 1e8;

    void validate() const;
};

struct ParisiValue {
    double value = 0.0;
    double error_estimate = 0.0;
    Eigen::VectorXd lambda;
    std::string method;
    long long nodes_or_samples = 0;
    std::uint64_t seed = 0;
    bool converged = true;
};

// Evaluates the nested-expectation recursion for a fixed (spec, path,
// settings) triple.  Construction factors the increment covariances once so
// repeated evaluations at different lambda are cheap.
class ParisiEvaluator {
  public:
    ParisiEvaluator(const CovarianceSpec& spec, const DiscretePath& path,
                    const EvalSettings& settings);
    ~ParisiEvaluator();
    ParisiEvaluator(ParisiEvaluator&&) noexcept;
    ParisiEvaluator& operator=(ParisiEvaluator&&) noexcept;

    // Single-pass value, no error estimate.
    double value(const Eigen::VectorXd& lambda) const;
    // Value plus error estimate (quadrature refinement or MC replicates).
    ParisiValue evaluate(const Eigen::VectorXd& lambda) const;

    const std::string& method_name() const;
    long long work_per_evaluation() const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// The nested Gaussian functional: X_0 of the recursion driven by the
// increments grad xi(gamma_{r+1}) - grad xi(gamma_r) 1{r>0}.
ParisiValue eval_P1(const CovarianceSpec& spec, const DiscretePath& path,
                    const Eigen::VectorXd& lambda, const EvalSettings& settings);

// (1/2) sum_r (m_r - m_{r-1}) vartheta(gamma_r) - (1/2) vartheta(diag d).
// Exact; requires the terminal matrix to be diagonal.
double eval_P2(const CovarianceSpec& spec, const DiscretePath& path);

ParisiValue eval_P(const CovarianceSpec& spec, const DiscretePath& path,
                   const Eigen::VectorXd& lambda, const EvalSettings& settings);

// Gradient of lambda -> P1 by central finite differences (step 1e-4).
Eigen::VectorXd grad_lambda(const CovarianceSpec& spec, const DiscretePath& path,
                            const Eigen::VectorXd& lambda, const EvalSettings& settings);

// inf over lambda (last coordinate gauge-fixed to 0) of P(pi, lambda) -
// <lambda, d>, solved by simplex descent; the map is convex in lambda.
ParisiValue eval_parisi(const CovarianceSpec& spec, const DiscretePath& path,
                        const Magnetization& d, const EvalSettings& settings);

}  // namespace pottsglass
