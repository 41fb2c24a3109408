#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace pottsglass {

// log(sum_i exp(x_i)) with the running max factored out.
double logsumexp(std::span<const double> xs);

// log(1 + e^x) without overflow.
inline double log1pexp(double x) {
    if (x > 35.0) return x;
    if (x < -35.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

// Gauss-Hermite rule for the standard normal weight e^{-x^2/2}/sqrt(2 pi),
// computed by Golub-Welsch on the probabilists' Hermite recurrence.
// Weights sum to 1.
struct GaussHermite {
    std::vector<double> nodes;
    std::vector<double> weights;
};
GaussHermite gauss_hermite(int n);

// Mean and standard error accumulated in one pass.
class OnlineMeanVar {
  public:
    void add(double x) {
        ++n_;
        const double delta = x - mean_;
        mean_ += delta / static_cast<double>(n_);
        m2_ += delta * (x - mean_);
    }
    std::int64_t count() const { return n_; }
    double mean() const { return mean_; }
    double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
    double stderror() const;

  private:
    std::int64_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

// Nelder-Mead simplex minimization.  Deterministic for a fixed start point.
struct NelderMeadResult {
    Eigen::VectorXd x;
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
};
NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& start, double initial_step,
                             int max_iterations, double tolerance);

// Regularized incomplete gamma functions and the chi-square tail probability.
double gamma_p(double a, double x);  // P(a, x)
double gamma_q(double a, double x);  // Q(a, x) = 1 - P(a, x)
double chi_square_pvalue(double statistic, int dof);

double normal_cdf(double x);

// Runs fn(i) for i in [0, n) on `threads` workers, chunked by index so the
// caller can reduce per-index results in a fixed order.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

// Worker count resolution: explicit argument wins, else POTTSGLASS_THREADS,
// else 1.
int resolve_threads(int requested);

}  // namespace pottsglass
