#include "pottsglass/covariance.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "pottsglass/rng.hpp"

namespace pottsglass {

namespace {

constexpr double kDomainTol = 1e-9;

double int_pow(double base, int e) {
    // 0^0 = 1 by convention (empty product).
    double acc = 1.0;
    for (int i = 0; i < e; ++i) acc *= base;
    return acc;
}

Eigen::MatrixXd hadamard_pow(const Eigen::MatrixXd& R, int e) {
    if (e == 0) return Eigen::MatrixXd::Ones(R.rows(), R.cols());
    Eigen::MatrixXd out = R;
    for (int i = 1; i < e; ++i) out = out.cwiseProduct(R);
    return out;
}

void check_domain(const CovarianceSpec& spec, const Eigen::MatrixXd& R) {
    if (R.rows() != spec.kappa || R.cols() != spec.kappa)
        throw std::invalid_argument("covariance: matrix dimension does not match kappa");
    if (R.cwiseAbs().sum() > 1.0 + kDomainTol)
        throw std::domain_error("covariance: entrywise l1 norm of R exceeds 1");
}

// Factor inner products f_j = <R^{op} w_j, w_j>.
std::vector<double> factor_values(const InteractionTerm& term, const Eigen::MatrixXd& R) {
    const Eigen::MatrixXd Rp = hadamard_pow(R, term.hadamard_power);
    std::vector<double> fs(term.vectors.size());
    for (std::size_t j = 0; j < term.vectors.size(); ++j)
        fs[j] = term.vectors[j].dot(Rp * term.vectors[j]);
    return fs;
}

double term_value(const std::vector<double>& fs, const std::vector<int>& exps) {
    double acc = 1.0;
    for (std::size_t j = 0; j < fs.size(); ++j) acc *= int_pow(fs[j], exps[j]);
    return acc;
}

// W_j R^{o(p-1)} W_j, the matrix factor attached to the j-th product-rule term.
Eigen::MatrixXd grad_factor(const InteractionTerm& term, const Eigen::MatrixXd& Rp1, int j) {
    const Eigen::VectorXd& w = term.vectors[j];
    return Rp1.cwiseProduct(w * w.transpose());
}

}  // namespace

int InteractionTerm::degree() const {
    return hadamard_power * std::accumulate(exponents.begin(), exponents.end(), 0);
}

void InteractionTerm::validate(int kappa) const {
    if (hadamard_power < 1) throw std::invalid_argument("term: p must be >= 1");
    if (exponents.empty() || exponents.size() != vectors.size())
        throw std::invalid_argument("term: exponents and vectors must be nonempty and equal-length");
    for (int n : exponents)
        if (n < 1) throw std::invalid_argument("term: exponents must be >= 1");
    for (const auto& w : vectors) {
        if (w.size() != kappa)
            throw std::invalid_argument("term: vector length does not match kappa");
        if ((w.cwiseAbs().array() > 1.0 + 1e-12).any())
            throw std::invalid_argument("term: vector entries must lie in [-1, 1]");
    }
}

CovarianceSpec CovarianceSpec::potts(int kappa, double beta) {
    CovarianceSpec spec;
    spec.kappa = kappa;
    InteractionTerm term;
    term.hadamard_power = 2;
    term.exponents = {1};
    term.vectors = {Eigen::VectorXd::Ones(kappa)};
    spec.terms.emplace_back(beta * beta, std::move(term));
    spec.validate();
    return spec;
}

void CovarianceSpec::validate() const {
    if (kappa < 2) throw std::invalid_argument("spec: kappa must be >= 2");
    for (const auto& [coeff, term] : terms) {
        if (coeff < 0.0) throw std::invalid_argument("spec: coefficients must be nonnegative");
        term.validate(kappa);
    }
}

bool CovarianceSpec::is_zero() const {
    for (const auto& [coeff, term] : terms)
        if (coeff != 0.0) return false;
    return true;
}

std::string CovarianceSpec::canonical_string() const {
    std::string out = "kappa=" + std::to_string(kappa) + ";";
    std::vector<std::string> chunks;
    char buf[64];
    for (const auto& [coeff, term] : terms) {
        std::string s;
        std::snprintf(buf, sizeof(buf), "c=%.17g;p=%d", coeff, term.hadamard_power);
        s += buf;
        // Canonical factor order: by (exponent, vector entries).
        std::vector<std::size_t> order(term.exponents.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (term.exponents[a] != term.exponents[b])
                return term.exponents[a] < term.exponents[b];
            for (int k = 0; k < term.vectors[a].size(); ++k) {
                if (term.vectors[a](k) != term.vectors[b](k))
                    return term.vectors[a](k) < term.vectors[b](k);
            }
            return false;
        });
        for (std::size_t j : order) {
            std::snprintf(buf, sizeof(buf), ";n=%d;w=", term.exponents[j]);
            s += buf;
            for (int k = 0; k < term.vectors[j].size(); ++k) {
                std::snprintf(buf, sizeof(buf), "%.17g,", term.vectors[j](k));
                s += buf;
            }
        }
        chunks.push_back(std::move(s));
    }
    std::sort(chunks.begin(), chunks.end());
    for (const auto& c : chunks) out += c + "|";
    return out;
}

std::uint64_t CovarianceSpec::hash() const { return fnv1a64(canonical_string()); }

double eval_xi(const CovarianceSpec& spec, const Eigen::MatrixXd& R) {
    check_domain(spec, R);
    double acc = 0.0;
    for (const auto& [coeff, term] : spec.terms) {
        if (coeff == 0.0) continue;
        acc += coeff * term_value(factor_values(term, R), term.exponents);
    }
    return acc;
}

Eigen::MatrixXd eval_grad_xi(const CovarianceSpec& spec, const Eigen::MatrixXd& R) {
    check_domain(spec, R);
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(spec.kappa, spec.kappa);
    for (const auto& [coeff, term] : spec.terms) {
        if (coeff == 0.0) continue;
        const int p = term.hadamard_power;
        const auto fs = factor_values(term, R);
        const Eigen::MatrixXd Rp1 = hadamard_pow(R, p - 1);
        for (int j = 0; j < term.factor_count(); ++j) {
            std::vector<int> reduced = term.exponents;
            reduced[j] -= 1;
            const double c = term.exponents[j] * term_value(fs, reduced);
            if (c == 0.0) continue;
            grad += coeff * p * c * grad_factor(term, Rp1, j);
        }
    }
    return grad;
}

Eigen::MatrixXd eval_hessian(const CovarianceSpec& spec, const Eigen::MatrixXd& R) {
    check_domain(spec, R);
    const int kappa = spec.kappa;
    const int dim = kappa * kappa;
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(dim, dim);
    for (const auto& [coeff, term] : spec.terms) {
        if (coeff == 0.0) continue;
        const int p = term.hadamard_power;
        const int m = term.factor_count();
        const auto fs = factor_values(term, R);
        const Eigen::MatrixXd Rp1 = hadamard_pow(R, p - 1);

        std::vector<Eigen::VectorXd> a(m);
        for (int j = 0; j < m; ++j) {
            const Eigen::MatrixXd A = grad_factor(term, Rp1, j);
            a[j] = Eigen::Map<const Eigen::VectorXd>(A.data(), dim);
        }

        // Product-rule part: p^2 n_j (n_i - delta_ij) xi_{theta - e_j - e_i}.
        for (int j = 0; j < m; ++j) {
            for (int i = 0; i < m; ++i) {
                const int ni_eff = term.exponents[i] - (i == j ? 1 : 0);
                if (ni_eff <= 0) continue;
                std::vector<int> reduced = term.exponents;
                reduced[j] -= 1;
                reduced[i] -= 1;
                const double c = coeff * p * p * term.exponents[j] * ni_eff *
                                 term_value(fs, reduced);
                if (c == 0.0) continue;
                H += c * (a[j] * a[i].transpose());
            }
        }

        // Hadamard-power part: p (p-1) R^{o(p-2)} on the diagonal pairs.
        if (p >= 2) {
            const Eigen::MatrixXd Rp2 = hadamard_pow(R, p - 2);
            for (int j = 0; j < m; ++j) {
                std::vector<int> reduced = term.exponents;
                reduced[j] -= 1;
                const double c = coeff * p * (p - 1) * term.exponents[j] *
                                 term_value(fs, reduced);
                if (c == 0.0) continue;
                const Eigen::VectorXd& w = term.vectors[j];
                for (int k = 0; k < kappa; ++k) {
                    for (int kp = 0; kp < kappa; ++kp) {
                        const int idx = k + kappa * kp;  // column-major vec index
                        H(idx, idx) += c * Rp2(k, kp) * w(k) * w(kp);
                    }
                }
            }
        }
    }
    return H;
}

double eval_vartheta(const CovarianceSpec& spec, const Eigen::MatrixXd& R) {
    check_domain(spec, R);
    return (R.cwiseProduct(eval_grad_xi(spec, R))).sum() - eval_xi(spec, R);
}

namespace {

struct CanonicalTerm {
    int p;
    std::vector<std::pair<int, std::vector<double>>> factors;

    bool operator<(const CanonicalTerm& other) const {
        if (p != other.p) return p < other.p;
        return factors < other.factors;
    }
    bool operator==(const CanonicalTerm& other) const {
        return p == other.p && factors == other.factors;
    }
};

CanonicalTerm canonicalize(const InteractionTerm& term) {
    CanonicalTerm ct;
    ct.p = term.hadamard_power;
    for (int j = 0; j < term.factor_count(); ++j) {
        std::vector<double> w(term.vectors[j].data(),
                              term.vectors[j].data() + term.vectors[j].size());
        ct.factors.emplace_back(term.exponents[j], std::move(w));
    }
    std::sort(ct.factors.begin(), ct.factors.end());
    return ct;
}

// Aggregated (canonical term -> total coefficient) list, sorted by term.
std::vector<std::pair<CanonicalTerm, double>> aggregate(
    const std::vector<std::pair<double, CanonicalTerm>>& raw) {
    std::vector<std::pair<CanonicalTerm, double>> out;
    std::vector<std::pair<CanonicalTerm, double>> sorted;
    sorted.reserve(raw.size());
    for (const auto& [c, t] : raw) sorted.emplace_back(t, c);
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [t, c] : sorted) {
        if (!out.empty() && out.back().first == t)
            out.back().second += c;
        else
            out.emplace_back(t, c);
    }
    return out;
}

bool coefficients_match(const std::vector<std::pair<CanonicalTerm, double>>& a,
                        const std::vector<std::pair<CanonicalTerm, double>>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(a[i].first == b[i].first)) return false;
        const double scale = std::max(std::abs(a[i].second), std::abs(b[i].second));
        if (std::abs(a[i].second - b[i].second) > 1e-12 * (1.0 + scale)) return false;
    }
    return true;
}

}  // namespace

bool check_symmetry(const CovarianceSpec& spec) {
    spec.validate();
    std::vector<std::pair<double, CanonicalTerm>> base;
    for (const auto& [coeff, term] : spec.terms)
        if (coeff != 0.0) base.emplace_back(coeff, canonicalize(term));
    const auto reference = aggregate(base);

    std::vector<int> perm(spec.kappa);
    std::iota(perm.begin(), perm.end(), 0);
    while (std::next_permutation(perm.begin(), perm.end())) {
        std::vector<std::pair<double, CanonicalTerm>> permuted;
        for (const auto& [coeff, term] : spec.terms) {
            if (coeff == 0.0) continue;
            InteractionTerm t = term;
            for (auto& w : t.vectors) {
                Eigen::VectorXd pw(w.size());
                // (omega . w)(k) = w(omega^{-1}(k)); perm[k] = omega^{-1}(k)
                for (int k = 0; k < w.size(); ++k) pw(k) = w(perm[k]);
                w = pw;
            }
            permuted.emplace_back(coeff, canonicalize(t));
        }
        if (!coefficients_match(reference, aggregate(permuted))) return false;
    }
    return true;
}

ConvexityReport check_convexity_sampled(const CovarianceSpec& spec, int n_samples,
                                        std::uint64_t seed) {
    if (n_samples < 1) throw std::invalid_argument("check_convexity_sampled: n_samples >= 1");
    spec.validate();
    RngStream rng(seed, "convexity");
    ConvexityReport report;
    report.min_eigenvalue = std::numeric_limits<double>::infinity();
    report.samples = n_samples;
    const int kappa = spec.kappa;
    for (int s = 0; s < n_samples; ++s) {
        // Uniform over {entries >= 0, entry sum <= 1}: Dirichlet over
        // kappa^2 + 1 slots, last slot is slack.
        Eigen::MatrixXd R(kappa, kappa);
        double total = rng.exponential();
        for (int k = 0; k < kappa; ++k)
            for (int kp = 0; kp < kappa; ++kp) {
                R(k, kp) = rng.exponential();
                total += R(k, kp);
            }
        R /= total;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(eval_hessian(spec, R));
        const double lo = es.eigenvalues().minCoeff();
        if (lo < report.min_eigenvalue) {
            report.min_eigenvalue = lo;
            report.worst_point = R;
        }
    }
    return report;
}

}  // namespace pottsglass
