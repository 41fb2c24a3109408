#pragma once

#include <Eigen/Dense>
#include <vector>

#include "pottsglass/rng.hpp"

namespace pottsglass {

// Relative tolerance used when deciding whether near-zero eigenvalues count
// as nonnegative: lambda >= -kPsdTol * (1 + ||A||_2).
constexpr double kPsdTol = 1e-10;

// A magnetization: nonnegative entries summing to 1.
struct Magnetization {
    Eigen::VectorXd d;

    static Magnetization balanced(int kappa);
    void validate() const;
    int kappa() const { return static_cast<int>(d.size()); }
    // Membership in the finite-volume grid: N * d_k integral for every k.
    bool in_grid(int N, double tol = 1e-9) const;
};

// True iff B - A is positive-semidefinite up to `tol` on the least eigenvalue.
// Inputs must be symmetric.
bool psd_leq(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double tol);

// Symmetric PSD square root via eigendecomposition.  Eigenvalues in
// [-kPsdTol * (1 + ||A||_2), 0) are clipped to zero; anything lower throws,
// since it signals a violated monotone-path precondition.
Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& A);

// Validates membership in Gamma_kappa(d): symmetric, PSD, nonnegative
// entries, row sums equal to d.  Throws std::invalid_argument on failure.
void validate_constraint_matrix(const Eigen::MatrixXd& gamma, const Magnetization& d);

// The symmetric one-parameter family (q/kappa) I + ((1-q)/kappa^2) 11^T.
Eigen::MatrixXd phi_star(double q, int kappa);

// Piecewise-constant monotone path: pi(t) = gamma_r on (m_{r-1}, m_r].
// Stored per level r = 1..s as (m_r, gamma_r) with m_s = 1; m_0 = 0 implicit.
struct DiscretePath {
    std::vector<double> m_upper;
    std::vector<Eigen::MatrixXd> gammas;

    int levels() const { return static_cast<int>(m_upper.size()); }
    int kappa() const { return gammas.empty() ? 0 : static_cast<int>(gammas.front().rows()); }

    // Checks the weight chain and PSD-monotonicity of the matrix sequence.
    // When `require_terminal_diag` the last matrix must be diagonal (the
    // Pi_d^disc convention gamma_s = diag(d)).
    void validate(bool require_terminal_diag = false) const;

    // Row sums of the terminal matrix, i.e. the magnetization d.
    Magnetization terminal_magnetization() const;
};

// Weights plus scalar atoms mapped through phi_star.
struct SymmetricPath {
    std::vector<double> m_upper;
    std::vector<double> atoms;  // 0 <= q_1 <= ... <= q_s = 1

    int levels() const { return static_cast<int>(m_upper.size()); }
    void validate() const;
};

DiscretePath symmetric_to_discrete(const SymmetricPath& path, int kappa);

// Integral over [0,1] of the entrywise l1 distance between the two paths,
// computed exactly over the merged weight partition.
double path_l1_distance(const DiscretePath& a, const DiscretePath& b);

// Test-support sampler for Gamma_kappa(d): Dykstra-style alternating
// projections onto {row sums = d}, the PSD cone, and the nonnegative orthant.
Eigen::MatrixXd sample_constraint_matrix(const Magnetization& d, RngStream& rng,
                                         int iterations = 200, double tol = 1e-9);

}  // namespace pottsglass
