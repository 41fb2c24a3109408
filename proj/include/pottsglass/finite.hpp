#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <vector>

#include "pottsglass/covariance.hpp"
#include "pottsglass/paths.hpp"

namespace pottsglass {

// Configurations are stored as per-site symbol indices in {0, ..., kappa-1}.
using SpinConfig = std::vector<int>;

// All sigma whose per-symbol frequencies are within epsilon of d.  For
// epsilon = 0 the count is the multinomial coefficient N! / prod (N d_k)!.
std::vector<SpinConfig> enumerate_configs(int N, int kappa, const Magnetization& d,
                                          double epsilon, long long max_count = 1000000);

// Overlap matrix R(sigma, sigma') with entries (1/N) #{i : sigma_i = k,
// sigma'_i = k'}.
Eigen::MatrixXd overlap_matrix(const SpinConfig& a, const SpinConfig& b, int kappa);

// Gaussian couplings used by the Potts bilinear form, drawn row-major from
// the (seed, "disorder", replica) stream.  Exposed so independent
// re-derivations (e.g. the kappa = 2 two-state transform) can reuse the same
// disorder.
Eigen::MatrixXd potts_gaussian_couplings(int N, std::uint64_t seed, std::uint64_t replica);

// One joint draw of the Hamiltonian over `configs`.  The Potts preset uses
// the exact g_ij bilinear form; general mixtures factor the |S| x |S|
// covariance matrix N xi(R(sigma, sigma')).
class HamiltonianSampler {
  public:
    HamiltonianSampler(const CovarianceSpec& spec, std::vector<SpinConfig> configs, int N);
    ~HamiltonianSampler();
    HamiltonianSampler(HamiltonianSampler&&) noexcept;

    Eigen::VectorXd sample(std::uint64_t seed, std::uint64_t replica) const;
    const std::vector<SpinConfig>& configs() const;
    bool uses_direct_couplings() const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

Eigen::VectorXd sample_hamiltonian(const CovarianceSpec& spec,
                                   const std::vector<SpinConfig>& configs, int N,
                                   std::uint64_t seed, std::uint64_t replica);

struct FiniteModelConfig {
    int N = 4;
    Magnetization d;
    double epsilon = 0.0;
    CovarianceSpec spec;
    int n_disorder = 100;
    std::uint64_t seed = 0;
    int threads = 0;

    void validate() const;
};

struct FreeEnergyEstimate {
    double mean = 0.0;
    double stderror = 0.0;
    int n_disorder = 0;
    long long n_configs = 0;
};

// Disorder-averaged (1/N) log sum_{sigma in Sigma^N(d, eps)} exp H(sigma).
FreeEnergyEstimate estimate_FN(const FiniteModelConfig& config);

struct GuerraReport {
    double f_hat = 0.0;
    double f_stderror = 0.0;
    double best_bound = 0.0;
    double best_bound_error = 0.0;
    double margin = 0.0;  // bound + slack - estimate
    bool pass = false;
};

// Finite-N Guerra inequality at epsilon = 0: the enumerated free energy must
// not exceed the best provided dual value P(pi, lambda) - <lambda, d> within
// 3 x (stderr + error_estimate).  `dual_bounds` carries (value, error) pairs.
GuerraReport guerra_bound_check(const FiniteModelConfig& config,
                                const std::vector<std::pair<double, double>>& dual_bounds);

}  // namespace pottsglass
