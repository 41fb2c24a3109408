#include "pottsglass/paths.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pottsglass {

namespace {

double spectral_scale(const Eigen::MatrixXd& A) {
    // Cheap upper bound on ||A||_2 for tolerance scaling.
    return 1.0 + A.cwiseAbs().rowwise().sum().maxCoeff();
}

void require_symmetric(const Eigen::MatrixXd& A, const char* who) {
    if (A.rows() != A.cols())
        throw std::invalid_argument(std::string(who) + ": matrix must be square");
    if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-10 * spectral_scale(A))
        throw std::invalid_argument(std::string(who) + ": matrix must be symmetric");
}

}  // namespace

Magnetization Magnetization::balanced(int kappa) {
    if (kappa < 2) throw std::invalid_argument("balanced: kappa must be >= 2");
    Magnetization d;
    d.d = Eigen::VectorXd::Constant(kappa, 1.0 / kappa);
    return d;
}

void Magnetization::validate() const {
    if (d.size() < 2) throw std::invalid_argument("magnetization: need kappa >= 2 entries");
    if ((d.array() < -1e-12).any())
        throw std::invalid_argument("magnetization: entries must be nonnegative");
    if (std::abs(d.sum() - 1.0) > 1e-12)
        throw std::invalid_argument("magnetization: entries must sum to 1");
}

bool Magnetization::in_grid(int N, double tol) const {
    validate();
    for (int k = 0; k < d.size(); ++k) {
        const double x = d(k) * N;
        if (std::abs(x - std::round(x)) > tol * N) return false;
    }
    return true;
}

bool psd_leq(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double tol) {
    require_symmetric(A, "psd_leq");
    require_symmetric(B, "psd_leq");
    if (A.rows() != B.rows()) throw std::invalid_argument("psd_leq: dimension mismatch");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B - A, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() >= -tol;
}

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& A) {
    require_symmetric(A, "sqrt_psd");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    const double floor = -kPsdTol * spectral_scale(A);
    Eigen::VectorXd lam = es.eigenvalues();
    for (int i = 0; i < lam.size(); ++i) {
        if (lam(i) < floor)
            throw std::invalid_argument("sqrt_psd: matrix has a negative eigenvalue beyond tolerance");
        lam(i) = std::max(lam(i), 0.0);
    }
    return es.eigenvectors() * lam.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

void validate_constraint_matrix(const Eigen::MatrixXd& gamma, const Magnetization& d) {
    d.validate();
    require_symmetric(gamma, "constraint matrix");
    if (gamma.rows() != d.d.size())
        throw std::invalid_argument("constraint matrix: dimension does not match magnetization");
    if ((gamma.array() < -1e-10).any() || (gamma.array() > 1.0 + 1e-10).any())
        throw std::invalid_argument("constraint matrix: entries must lie in [0, 1]");
    const Eigen::VectorXd rows = gamma.rowwise().sum();
    if ((rows - d.d).cwiseAbs().maxCoeff() > 1e-10)
        throw std::invalid_argument("constraint matrix: row sums must equal d");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gamma, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -kPsdTol * spectral_scale(gamma))
        throw std::invalid_argument("constraint matrix: not positive semidefinite");
    Eigen::MatrixXd diag_d = d.d.asDiagonal();
    if (!psd_leq(gamma, diag_d, kPsdTol * spectral_scale(diag_d)))
        throw std::invalid_argument("constraint matrix: gamma must be dominated by diag(d)");
}

Eigen::MatrixXd phi_star(double q, int kappa) {
    if (q < 0.0 || q > 1.0) throw std::domain_error("phi_star: q must lie in [0, 1]");
    if (kappa < 2) throw std::invalid_argument("phi_star: kappa must be >= 2");
    const double kk = static_cast<double>(kappa);
    return (q / kk) * Eigen::MatrixXd::Identity(kappa, kappa) +
           ((1.0 - q) / (kk * kk)) * Eigen::MatrixXd::Ones(kappa, kappa);
}

void DiscretePath::validate(bool require_terminal_diag) const {
    if (m_upper.empty() || m_upper.size() != gammas.size())
        throw std::invalid_argument("path: need matching nonempty weights and matrices");
    double prev = 0.0;
    for (double m : m_upper) {
        if (!(m > prev)) throw std::invalid_argument("path: weights must be strictly increasing from 0");
        prev = m;
    }
    if (std::abs(m_upper.back() - 1.0) > 1e-12)
        throw std::invalid_argument("path: final weight must be 1");
    const int kap = kappa();
    for (const auto& g : gammas) {
        require_symmetric(g, "path matrix");
        if (g.rows() != kap) throw std::invalid_argument("path: matrices must share dimension");
    }
    for (int r = 0; r + 1 < levels(); ++r) {
        const double tol = kPsdTol * spectral_scale(gammas[r + 1]);
        if (!psd_leq(gammas[r], gammas[r + 1], tol))
            throw std::invalid_argument("path: matrix sequence must be PSD-monotone");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gammas.front(), Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -kPsdTol * spectral_scale(gammas.front()))
        throw std::invalid_argument("path: matrices must be positive semidefinite");
    if (require_terminal_diag) {
        Eigen::MatrixXd off = gammas.back();
        off.diagonal().setZero();
        if (off.cwiseAbs().maxCoeff() > 1e-10)
            throw std::invalid_argument("path: terminal matrix must be diag(d)");
    }
}

Magnetization DiscretePath::terminal_magnetization() const {
    Magnetization d;
    d.d = gammas.back().rowwise().sum();
    d.validate();
    return d;
}

void SymmetricPath::validate() const {
    if (m_upper.empty() || m_upper.size() != atoms.size())
        throw std::invalid_argument("symmetric path: need matching nonempty weights and atoms");
    double prev = 0.0;
    for (double m : m_upper) {
        if (!(m > prev)) throw std::invalid_argument("symmetric path: weights must be strictly increasing");
        prev = m;
    }
    if (std::abs(m_upper.back() - 1.0) > 1e-12)
        throw std::invalid_argument("symmetric path: final weight must be 1");
    double q_prev = 0.0;
    for (double q : atoms) {
        if (q < q_prev - 1e-14 || q < 0.0 || q > 1.0)
            throw std::invalid_argument("symmetric path: atoms must be nondecreasing in [0, 1]");
        q_prev = q;
    }
    if (std::abs(atoms.back() - 1.0) > 1e-12)
        throw std::invalid_argument("symmetric path: final atom must be 1");
}

DiscretePath symmetric_to_discrete(const SymmetricPath& path, int kappa) {
    path.validate();
    DiscretePath out;
    out.m_upper = path.m_upper;
    out.gammas.reserve(path.atoms.size());
    for (double q : path.atoms) out.gammas.push_back(phi_star(q, kappa));
    return out;
}

double path_l1_distance(const DiscretePath& a, const DiscretePath& b) {
    if (a.kappa() != b.kappa())
        throw std::invalid_argument("path_l1_distance: paths must share kappa");
    // Merge the two weight partitions and integrate segment by segment.
    std::vector<double> cuts{0.0};
    cuts.insert(cuts.end(), a.m_upper.begin(), a.m_upper.end());
    cuts.insert(cuts.end(), b.m_upper.begin(), b.m_upper.end());
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    auto value_at = [](const DiscretePath& p, double t) -> const Eigen::MatrixXd& {
        // pi(t) = gamma_r for t in (m_{r-1}, m_r]; left-continuity makes the
        // value at each segment's right endpoint the segment value.
        for (int r = 0; r < p.levels(); ++r)
            if (t <= p.m_upper[r] + 1e-15) return p.gammas[r];
        return p.gammas.back();
    };

    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double len = cuts[i + 1] - cuts[i];
        if (len <= 0.0) continue;
        const double mid = cuts[i + 1];
        acc += len * (value_at(a, mid) - value_at(b, mid)).cwiseAbs().sum();
    }
    return acc;
}

Eigen::MatrixXd sample_constraint_matrix(const Magnetization& d, RngStream& rng,
                                         int iterations, double tol) {
    d.validate();
    const int kappa = d.kappa();

    // Projection onto the affine set {X symmetric : X 1 = d}.
    auto project_rowsum = [&](const Eigen::MatrixXd& X) {
        Eigen::MatrixXd S = 0.5 * (X + X.transpose());
        const Eigen::VectorXd resid = d.d - S.rowwise().sum();
        // mu solves (kappa I + 11^T) mu = resid.
        const Eigen::VectorXd mu =
            (resid - Eigen::VectorXd::Constant(kappa, resid.sum() / (2.0 * kappa))) / kappa;
        return Eigen::MatrixXd(S + mu * Eigen::RowVectorXd::Ones(kappa) +
                               Eigen::VectorXd::Ones(kappa) * mu.transpose());
    };
    auto project_psd = [](const Eigen::MatrixXd& X) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (X + X.transpose()));
        Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0);
        return Eigen::MatrixXd(es.eigenvectors() * lam.asDiagonal() *
                               es.eigenvectors().transpose());
    };
    auto project_nonneg = [](const Eigen::MatrixXd& X) {
        return Eigen::MatrixXd(X.cwiseMax(0.0));
    };

    for (int attempt = 0; attempt < 16; ++attempt) {
        Eigen::MatrixXd X(kappa, kappa);
        for (int i = 0; i < kappa; ++i)
            for (int j = 0; j <= i; ++j) X(i, j) = X(j, i) = std::abs(rng.normal());
        X = X.cwiseProduct(d.d * d.d.transpose());

        // Dykstra corrections, one per constraint set.
        Eigen::MatrixXd p1 = Eigen::MatrixXd::Zero(kappa, kappa);
        Eigen::MatrixXd p2 = p1, p3 = p1;
        for (int it = 0; it < iterations; ++it) {
            Eigen::MatrixXd y = project_rowsum(X + p1);
            p1 = X + p1 - y;
            Eigen::MatrixXd z = project_psd(y + p2);
            p2 = y + p2 - z;
            X = project_nonneg(z + p3);
            p3 = z + p3 - X;
        }

        const bool feasible =
            (X.rowwise().sum() - d.d).cwiseAbs().maxCoeff() < 10 * tol &&
            X.minCoeff() > -10 * tol;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(X, Eigen::EigenvaluesOnly);
        if (feasible && es.eigenvalues().minCoeff() > -10 * tol) {
            // Clean up residual numerical dust so invariant checks pass.
            Eigen::MatrixXd Y = project_rowsum(project_nonneg(X));
            if (Y.minCoeff() > -1e-12) {
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es2(Y, Eigen::EigenvaluesOnly);
                if (es2.eigenvalues().minCoeff() > -1e-11) return 0.5 * (Y + Y.transpose());
            }
            return 0.5 * (X + X.transpose());
        }
    }
    throw std::runtime_error("sample_constraint_matrix: projections did not converge");
}

}  // namespace pottsglass
