#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "pottsglass/covariance.hpp"
#include "pottsglass/parisi.hpp"
#include "pottsglass/paths.hpp"
#include "pottsglass/rng.hpp"

namespace pottsglass {

// Truncated Ruelle cascade over the K-ary tree of depth s-1.
struct CascadeConfig {
    std::vector<double> weights;  // 0 < m_1 < ... < m_{s-1} < 1; empty for s = 1
    int truncation = 200;         // K: children kept per node
    std::uint64_t seed = 0;

    int depth() const { return static_cast<int>(weights.size()); }
    void validate() const;
};

struct CascadeSample {
    int depth = 0;      // s - 1
    int branching = 1;  // K
    std::vector<double> log_leaf_weights;  // normalized, size K^depth

    long long leaves() const { return static_cast<long long>(log_leaf_weights.size()); }
    // Ancestor of `leaf` at tree depth `r` (r = 0 is the root).
    long long ancestor(long long leaf, int r) const;
    // Smallest depth at which the ancestral paths of two leaves disagree;
    // equals s for identical leaves.
    int overlap_depth(long long leaf_a, long long leaf_b) const;
    // Draw one leaf from the weights.
    long long sample_leaf(RngStream& rng, const std::vector<double>& cdf) const;
    std::vector<double> weight_cdf() const;
};

// Child weights at each node are the K largest atoms of the Poisson process
// with intensity m x^{-1-m} dx, realized as (E_1 + ... + E_i)^{-1/m}.
CascadeSample sample_cascade(const CascadeConfig& config, std::uint64_t replica = 0);

// Gaussian fields attached to the tree: Z_i(alpha) sums per-node vector
// innovations through sqrt of the grad-xi increments, Y(alpha) scalar
// innovations through sqrt of the vartheta increments.
struct TreeFields {
    std::vector<Eigen::MatrixXd> z;  // per site: kappa x leaves
    Eigen::VectorXd y;               // leaves
};
TreeFields sample_tree_fields(const CascadeSample& cascade, const DiscretePath& path,
                              const CovarianceSpec& spec, int n_sites, RngStream& rng);

enum class ConstraintMode { Full, Magnetization };

struct P1NEstimate {
    double value = 0.0;
    double stderror = 0.0;
    int replicas = 0;
};

// Monte Carlo estimate of (1/N) E log sum_{alpha, sigma in S} nu_alpha
// exp(sum_i <Z_i(alpha) + lambda, sigma_i>), with S either the full product
// set or the exact-magnetization slice (summed exactly per replica).
P1NEstimate estimate_P1_N(const CovarianceSpec& spec, const DiscretePath& path,
                          const Eigen::VectorXd& lambda, int N, ConstraintMode mode,
                          const Magnetization* d, const CascadeConfig& config,
                          int n_replicas, int threads = 0);

struct OverlapLawReport {
    std::vector<long long> counts;     // observed r = 1..s
    std::vector<double> expected;      // n * (m_r - m_{r-1})
    double statistic = 0.0;
    double p_value = 1.0;
    long long pairs = 0;
    bool pass = false;
};

// One leaf pair per replica; chi-square of the ancestry-depth frequencies
// against m_r - m_{r-1}.
OverlapLawReport check_overlap_law(const CascadeConfig& config, long long n_pairs,
                                   double pass_threshold = 0.01, int threads = 0);

struct GgReport {
    int n = 0;
    std::string psi;
    std::string f;
    double lhs = 0.0;
    double rhs = 0.0;
    double residual = 0.0;
    double stderror = 0.0;  // jackknife over replicas
    bool pass = false;      // |residual| <= 3 stderr
};

// Ghirlanda-Guerra identity in scalar form on cascade overlap arrays built
// from atoms q_1 <= ... <= q_s = 1: psi is a polynomial in the overlap,
// f is 1 or the (1,2) overlap entry.
GgReport check_gg_identities(const CascadeConfig& config, const std::vector<double>& atoms,
                             int n, const std::vector<double>& psi_coeffs,
                             bool f_is_overlap, int n_replicas, int threads = 0);

// Kept leaf mass of the K-truncated tree relative to a 2K control built from
// the same draws; a ratio near 1 means the truncation loses little mass.
double truncation_mass_ratio(const CascadeConfig& config, int n_replicas);

}  // namespace pottsglass
