#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace pottsglass {

// One interaction term xi_theta(R) = prod_j <R^{op} w_j, w_j>^{n_j}, where
// R^{op} is the p-th Hadamard power.  A homogeneous polynomial of degree
// p * (n_1 + ... + n_m).
struct InteractionTerm {
    int hadamard_power = 1;                // p >= 1
    std::vector<int> exponents;            // n_j >= 1
    std::vector<Eigen::VectorXd> vectors;  // w_j, entries in [-1, 1]

    int factor_count() const { return static_cast<int>(exponents.size()); }
    int degree() const;
    void validate(int kappa) const;
};

// A finite mixture xi = sum_theta coeff_theta * xi_theta.  Coefficients are
// the nonnegative squared amplitudes, stored directly.
struct CovarianceSpec {
    int kappa = 2;
    std::vector<std::pair<double, InteractionTerm>> terms;

    // The Potts model: xi(R) = beta^2 * tr(R^T R), i.e. the single term
    // (p=2, m=1, n=1, w=ones) with coefficient beta^2.
    static CovarianceSpec potts(int kappa, double beta);

    void validate() const;
    bool is_zero() const;

    // Canonical text form (used for hashing and provenance echo).
    std::string canonical_string() const;
    std::uint64_t hash() const;
};

double eval_xi(const CovarianceSpec& spec, const Eigen::MatrixXd& R);
Eigen::MatrixXd eval_grad_xi(const CovarianceSpec& spec, const Eigen::MatrixXd& R);

// Hessian as a kappa^2 x kappa^2 matrix acting on vec(R) in column-major
// order: entry (k, k') of R maps to index k + kappa * k'.
Eigen::MatrixXd eval_hessian(const CovarianceSpec& spec, const Eigen::MatrixXd& R);

// vartheta(R) = <R, grad xi(R)> - xi(R).  For a single term this equals
// (degree - 1) * xi_theta(R).
double eval_vartheta(const CovarianceSpec& spec, const Eigen::MatrixXd& R);

// Sufficient combinatorial check of permutation symmetry: the multiset of
// (coefficient, canonical term) pairs must be invariant under permuting the
// coordinates of every w_j by each omega in S_kappa.
bool check_symmetry(const CovarianceSpec& spec);

struct ConvexityReport {
    double min_eigenvalue = 0.0;
    Eigen::MatrixXd worst_point;
    int samples = 0;
};

// Samples the Hessian over {entries >= 0, entry sum <= 1} and reports the
// smallest eigenvalue seen.  Diagnostic only.
ConvexityReport check_convexity_sampled(const CovarianceSpec& spec, int n_samples,
                                        std::uint64_t seed);

}  // namespace pottsglass
