#include "pottsglass/finite.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "pottsglass/numerics.hpp"
#include "pottsglass/rng.hpp"

namespace pottsglass {

namespace {

// Per-symbol admissible count ranges for the epsilon box.
struct CountBox {
    std::vector<int> lo;
    std::vector<int> hi;
};

CountBox count_box(int N, const Magnetization& d, double epsilon) {
    CountBox box;
    const int kappa = d.kappa();
    box.lo.resize(kappa);
    box.hi.resize(kappa);
    for (int k = 0; k < kappa; ++k) {
        // Small slack so exact grid points are not lost to rounding.
        box.lo[k] = std::max(0, static_cast<int>(std::ceil(N * (d.d(k) - epsilon) - 1e-9)));
        box.hi[k] = std::min(N, static_cast<int>(std::floor(N * (d.d(k) + epsilon) + 1e-9)));
    }
    return box;
}

void enumerate_rec(int site, int N, int kappa, const CountBox& box, std::vector<int>& used,
                   SpinConfig& current, std::vector<SpinConfig>& out, long long max_count) {
    if (site == N) {
        for (int k = 0; k < kappa; ++k)
            if (used[k] < box.lo[k]) return;
        out.push_back(current);
        if (static_cast<long long>(out.size()) > max_count)
            throw std::invalid_argument("enumerate_configs: configuration count exceeds limit");
        return;
    }
    const int remaining = N - site - 1;
    for (int k = 0; k < kappa; ++k) {
        if (used[k] + 1 > box.hi[k]) continue;
        // Feasibility: the other symbols' minimum requirements must still fit.
        used[k] += 1;
        int deficit = 0;
        for (int j = 0; j < kappa; ++j) deficit += std::max(0, box.lo[j] - used[j]);
        if (deficit <= remaining) {
            current[site] = k;
            enumerate_rec(site + 1, N, kappa, box, used, current, out, max_count);
        }
        used[k] -= 1;
    }
}

}  // namespace

std::vector<SpinConfig> enumerate_configs(int N, int kappa, const Magnetization& d,
                                          double epsilon, long long max_count) {
    d.validate();
    if (N < 1) throw std::invalid_argument("enumerate_configs: N must be >= 1");
    if (kappa != d.kappa())
        throw std::invalid_argument("enumerate_configs: kappa does not match d");
    if (epsilon < 0.0) throw std::invalid_argument("enumerate_configs: epsilon must be >= 0");
    if (epsilon == 0.0 && !d.in_grid(N))
        throw std::invalid_argument(
            "enumerate_configs: d is not achievable at volume N (N d_k must be integral)");

    const CountBox box = count_box(N, d, epsilon);
    std::vector<int> used(kappa, 0);
    SpinConfig current(N, 0);
    std::vector<SpinConfig> out;
    enumerate_rec(0, N, kappa, box, used, current, out, max_count);
    if (out.empty()) throw std::invalid_argument("enumerate_configs: constraint set is empty");
    return out;
}

Eigen::MatrixXd overlap_matrix(const SpinConfig& a, const SpinConfig& b, int kappa) {
    if (a.size() != b.size())
        throw std::invalid_argument("overlap_matrix: configurations must share N");
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(kappa, kappa);
    for (std::size_t i = 0; i < a.size(); ++i) R(a[i], b[i]) += 1.0;
    return R / static_cast<double>(a.size());
}

Eigen::MatrixXd potts_gaussian_couplings(int N, std::uint64_t seed, std::uint64_t replica) {
    RngStream rng(seed, "disorder", replica);
    Eigen::MatrixXd g(N, N);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) g(i, j) = rng.normal();
    return g;
}

namespace {

// The Potts preset is the single term (p=2, m=1, n=1, w=ones).
bool is_potts_form(const CovarianceSpec& spec, double* beta2) {
    if (spec.terms.size() != 1) return false;
    const auto& [coeff, term] = spec.terms.front();
    if (term.hadamard_power != 2 || term.exponents != std::vector<int>{1}) return false;
    if ((term.vectors[0].array() != 1.0).any()) return false;
    *beta2 = coeff;
    return true;
}

}  // namespace

struct HamiltonianSampler::Impl {
    CovarianceSpec spec;
    std::vector<SpinConfig> configs;
    int N = 0;
    bool direct = false;
    double beta = 0.0;
    // Site classes per config for the direct bilinear form.
    std::vector<std::vector<std::vector<int>>> classes;
    // Factor of the |S| x |S| covariance for general mixtures.
    Eigen::MatrixXd factor;
};

HamiltonianSampler::HamiltonianSampler(const CovarianceSpec& spec,
                                       std::vector<SpinConfig> configs, int N)
    : impl_(std::make_unique<Impl>()) {
    spec.validate();
    if (configs.empty()) throw std::invalid_argument("hamiltonian: no configurations");
    for (const auto& c : configs) {
        if (static_cast<int>(c.size()) != N)
            throw std::invalid_argument("hamiltonian: configuration length mismatch");
        for (int x : c)
            if (x < 0 || x >= spec.kappa)
                throw std::invalid_argument("hamiltonian: symbol out of range");
    }
    impl_->spec = spec;
    impl_->configs = std::move(configs);
    impl_->N = N;

    double beta2 = 0.0;
    if (is_potts_form(spec, &beta2)) {
        impl_->direct = true;
        impl_->beta = std::sqrt(beta2);
        impl_->classes.reserve(impl_->configs.size());
        for (const auto& c : impl_->configs) {
            std::vector<std::vector<int>> cls(spec.kappa);
            for (int i = 0; i < N; ++i) cls[c[i]].push_back(i);
            impl_->classes.push_back(std::move(cls));
        }
        return;
    }

    // General mixture: one joint Gaussian draw over configs via the exact
    // covariance N xi(R(sigma, sigma')); PSD by construction, factor with a
    // clipped eigendecomposition.
    const std::size_t S = impl_->configs.size();
    Eigen::MatrixXd cov(S, S);
    for (std::size_t a = 0; a < S; ++a) {
        for (std::size_t b = a; b < S; ++b) {
            const Eigen::MatrixXd R =
                overlap_matrix(impl_->configs[a], impl_->configs[b], spec.kappa);
            cov(a, b) = cov(b, a) = N * eval_xi(spec, R);
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    const double scale = 1.0 + std::abs(es.eigenvalues().maxCoeff());
    if (es.eigenvalues().minCoeff() < -1e-8 * scale)
        throw std::runtime_error(
            "hamiltonian: covariance factorization failed (spec is not a valid "
            "covariance on this configuration set)");
    impl_->factor = es.eigenvectors() *
                    es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

HamiltonianSampler::~HamiltonianSampler() = default;
HamiltonianSampler::HamiltonianSampler(HamiltonianSampler&&) noexcept = default;

const std::vector<SpinConfig>& HamiltonianSampler::configs() const { return impl_->configs; }
bool HamiltonianSampler::uses_direct_couplings() const { return impl_->direct; }

Eigen::VectorXd HamiltonianSampler::sample(std::uint64_t seed, std::uint64_t replica) const {
    const std::size_t S = impl_->configs.size();
    Eigen::VectorXd energies(S);
    if (impl_->direct) {
        const Eigen::MatrixXd g = potts_gaussian_couplings(impl_->N, seed, replica);
        const double scale = impl_->beta / std::sqrt(static_cast<double>(impl_->N));
        for (std::size_t c = 0; c < S; ++c) {
            double acc = 0.0;
            for (const auto& cls : impl_->classes[c])
                for (int i : cls)
                    for (int j : cls) acc += g(i, j);
            energies(c) = scale * acc;
        }
        return energies;
    }
    RngStream rng(seed, "disorder", replica);
    Eigen::VectorXd z(S);
    for (std::size_t i = 0; i < S; ++i) z(i) = rng.normal();
    return impl_->factor * z;
}

Eigen::VectorXd sample_hamiltonian(const CovarianceSpec& spec,
                                   const std::vector<SpinConfig>& configs, int N,
                                   std::uint64_t seed, std::uint64_t replica) {
    HamiltonianSampler sampler(spec, configs, N);
    return sampler.sample(seed, replica);
}

void FiniteModelConfig::validate() const {
    spec.validate();
    d.validate();
    if (N < 1) throw std::invalid_argument("finite model: N must be >= 1");
    if (d.kappa() != spec.kappa)
        throw std::invalid_argument("finite model: d dimension does not match spec");
    if (n_disorder < 1) throw std::invalid_argument("finite model: n_disorder must be >= 1");
    if (epsilon < 0.0) throw std::invalid_argument("finite model: epsilon must be >= 0");
}

FreeEnergyEstimate estimate_FN(const FiniteModelConfig& config) {
    config.validate();
    double beta2_unused = 0.0;
    const bool potts = is_potts_form(config.spec, &beta2_unused);
    const long long cap = potts ? 1000000 : 100000;
    auto configs = enumerate_configs(config.N, config.spec.kappa, config.d, config.epsilon, cap);
    HamiltonianSampler sampler(config.spec, std::move(configs), config.N);

    std::vector<double> values(static_cast<std::size_t>(config.n_disorder));
    parallel_for(values.size(), resolve_threads(config.threads), [&](std::size_t rep) {
        const Eigen::VectorXd h = sampler.sample(config.seed, rep);
        const double m = h.maxCoeff();
        double acc = 0.0;
        for (long long c = 0; c < h.size(); ++c) acc += std::exp(h(c) - m);
        values[rep] = (m + std::log(acc)) / config.N;
    });

    OnlineMeanVar stats;
    for (double v : values) stats.add(v);
    FreeEnergyEstimate out;
    out.mean = stats.mean();
    out.stderror = stats.stderror();
    out.n_disorder = config.n_disorder;
    out.n_configs = static_cast<long long>(sampler.configs().size());
    return out;
}

GuerraReport guerra_bound_check(const FiniteModelConfig& config,
                                const std::vector<std::pair<double, double>>& dual_bounds) {
    if (config.epsilon != 0.0)
        throw std::invalid_argument("guerra_bound_check: requires epsilon = 0");
    if (!config.d.in_grid(config.N))
        throw std::invalid_argument("guerra_bound_check: d must lie in the volume-N grid");
    if (dual_bounds.empty())
        throw std::invalid_argument("guerra_bound_check: need at least one dual value");

    const FreeEnergyEstimate fe = estimate_FN(config);
    GuerraReport report;
    report.f_hat = fe.mean;
    report.f_stderror = fe.stderror;
    report.best_bound = std::numeric_limits<double>::infinity();
    for (const auto& [value, error] : dual_bounds) {
        if (value < report.best_bound) {
            report.best_bound = value;
            report.best_bound_error = error;
        }
    }
    const double slack = 3.0 * (report.f_stderror + report.best_bound_error);
    report.margin = report.best_bound + slack - report.f_hat;
    report.pass = report.margin >= 0.0;
    return report;
}

}  // namespace pottsglass
