#include "pottsglass/parisi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <stdexcept>

#include "pottsglass/numerics.hpp"
#include "pottsglass/rng.hpp"

namespace pottsglass {

void EvalSettings::validate() const {
    if (nodes_per_dim < 2) throw std::invalid_argument("settings: nodes_per_dim must be >= 2");
    if (samples_per_level < 100)
        throw std::invalid_argument("settings: samples_per_level must be >= 100");
    if (quadrature_budget < 1.0)
        throw std::invalid_argument("settings: quadrature_budget must be positive");
}

namespace {

struct Level {
    // z-offset per node (columns) and log-weight per node.
    Eigen::MatrixXd offsets;  // kappa x n_nodes
    std::vector<double> log_weights;
    double tilt = 0.0;  // 0 means plain expectation (outermost level)
};

// Increment covariances Delta_r = grad xi(gamma_{r+1}) - grad xi(gamma_r) 1{r>0}.
std::vector<Eigen::MatrixXd> path_increments(const CovarianceSpec& spec,
                                             const DiscretePath& path) {
    std::vector<Eigen::MatrixXd> deltas;
    deltas.reserve(path.levels());
    Eigen::MatrixXd prev;
    for (int r = 0; r < path.levels(); ++r) {
        Eigen::MatrixXd grad = eval_grad_xi(spec, path.gammas[r]);
        deltas.push_back(r == 0 ? grad : Eigen::MatrixXd(grad - prev));
        prev = std::move(grad);
    }
    return deltas;
}

// Tilt applied when integrating increment r: plain mean for r = 0, else m_r.
double tilt_for(const DiscretePath& path, int r) {
    return r == 0 ? 0.0 : path.m_upper[r - 1];
}

// Columns of L with L L^T = Delta, negative eigenvalues beyond tolerance
// rejected, near-zero directions dropped.
Eigen::MatrixXd increment_factor(const Eigen::MatrixXd& delta) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(delta);
    const double scale = 1.0 + delta.cwiseAbs().maxCoeff();
    const Eigen::VectorXd& lam = es.eigenvalues();
    if (lam.minCoeff() < -kPsdTol * scale)
        throw std::invalid_argument(
            "eval_P1: non-PSD covariance increment (path monotonicity violated)");
    std::vector<int> keep;
    for (int i = 0; i < lam.size(); ++i)
        if (lam(i) > 1e-13 * scale) keep.push_back(i);
    Eigen::MatrixXd L(delta.rows(), static_cast<int>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c)
        L.col(c) = es.eigenvectors().col(keep[c]) * std::sqrt(lam(keep[c]));
    return L;
}

// Decomposition Delta = a I + b 11^T if the matrix has constant diagonal and
// constant off-diagonal, else nullopt-style flag.
struct IsotropicForm {
    bool ok = false;
    double a = 0.0;
    double b = 0.0;
};

IsotropicForm isotropic_form(const Eigen::MatrixXd& delta) {
    IsotropicForm f;
    const int kappa = static_cast<int>(delta.rows());
    if (kappa < 2) return f;
    const double diag = delta(0, 0);
    const double off = kappa > 1 ? delta(0, 1) : 0.0;
    const double tol = 1e-12 * (1.0 + delta.cwiseAbs().maxCoeff());
    for (int i = 0; i < kappa; ++i) {
        for (int j = 0; j < kappa; ++j) {
            const double want = i == j ? diag : off;
            if (std::abs(delta(i, j) - want) > tol) return f;
        }
    }
    f.ok = true;
    f.a = diag - off;
    f.b = off;
    return f;
}

// Orthonormal basis of the zero-sum subspace, kappa x (kappa - 1).
Eigen::MatrixXd zero_sum_basis(int kappa) {
    Eigen::MatrixXd M(kappa, kappa);
    M.col(0) = Eigen::VectorXd::Ones(kappa);
    M.block(0, 1, kappa, kappa - 1) =
        Eigen::MatrixXd::Identity(kappa, kappa).block(0, 0, kappa, kappa - 1);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(M);
    Eigen::MatrixXd Q = qr.householderQ();
    return Q.block(0, 1, kappa, kappa - 1);
}

struct Plan {
    std::vector<Level> levels;
    double analytic_shift = 0.0;
    long long leaves = 1;
};

long long tensor_size(int nodes, int dim) {
    long long total = 1;
    for (int i = 0; i < dim; ++i) total *= nodes;
    return total;
}

// Tensor nodes for one level: offsets = L * (x_{i1},...,x_{ik}).
Level build_quadrature_level(const Eigen::MatrixXd& L, double tilt, const GaussHermite& rule) {
    const int kappa = static_cast<int>(L.rows());
    const int dim = static_cast<int>(L.cols());
    const int n = static_cast<int>(rule.nodes.size());
    const long long total = tensor_size(n, dim);
    Level level;
    level.tilt = tilt;
    level.offsets.resize(kappa, total);
    level.log_weights.resize(total);
    std::vector<int> idx(dim, 0);
    Eigen::VectorXd x(dim);
    for (long long t = 0; t < total; ++t) {
        double logw = 0.0;
        for (int i = 0; i < dim; ++i) {
            x(i) = rule.nodes[idx[i]];
            logw += std::log(rule.weights[idx[i]]);
        }
        level.offsets.col(t) = L * x;
        level.log_weights[t] = logw;
        for (int i = dim - 1; i >= 0; --i) {
            if (++idx[i] < n) break;
            idx[i] = 0;
        }
    }
    return level;
}

Level build_mc_level(const Eigen::MatrixXd& L, double tilt, int samples, RngStream& rng) {
    const int kappa = static_cast<int>(L.rows());
    const int dim = static_cast<int>(L.cols());
    Level level;
    level.tilt = tilt;
    level.offsets.resize(kappa, samples);
    level.log_weights.assign(samples, -std::log(static_cast<double>(samples)));
    Eigen::VectorXd x(dim);
    for (int t = 0; t < samples; ++t) {
        for (int i = 0; i < dim; ++i) x(i) = rng.normal();
        level.offsets.col(t) = L * x;
    }
    return level;
}

// Nested evaluation over the level node lists with preallocated scratch:
// z[r] holds lambda plus the offsets chosen at levels < r.
class Walker {
  public:
    Walker(const std::vector<Level>& levels, int kappa)
        : levels_(levels), z_(levels.size() + 1, Eigen::VectorXd::Zero(kappa)) {
        vals_.resize(levels.size());
        for (std::size_t r = 0; r < levels.size(); ++r)
            vals_[r].resize(static_cast<std::size_t>(levels[r].offsets.cols()));
    }

    double run(const Eigen::VectorXd& lambda) {
        z_[0] = lambda;
        return descend(0);
    }

  private:
    double descend(std::size_t r) {
        if (r == levels_.size()) {
            const Eigen::VectorXd& z = z_[r];
            const double m = z.maxCoeff();
            double acc = 0.0;
            for (int k = 0; k < z.size(); ++k) acc += std::exp(z(k) - m);
            return m + std::log(acc);
        }
        const Level& level = levels_[r];
        const long long n = level.offsets.cols();
        if (level.tilt == 0.0) {
            double acc = 0.0;
            for (long long t = 0; t < n; ++t) {
                z_[r + 1] = z_[r] + level.offsets.col(t);
                acc += std::exp(level.log_weights[t]) * descend(r + 1);
            }
            return acc;
        }
        // (1/t) log sum_j w_j exp(t v_j), max-shifted.
        std::vector<double>& vals = vals_[r];
        double vmax = -std::numeric_limits<double>::infinity();
        for (long long t = 0; t < n; ++t) {
            z_[r + 1] = z_[r] + level.offsets.col(t);
            vals[static_cast<std::size_t>(t)] = descend(r + 1);
            vmax = std::max(vmax, vals[static_cast<std::size_t>(t)]);
        }
        double acc = 0.0;
        for (long long t = 0; t < n; ++t)
            acc += std::exp(level.log_weights[t] +
                            level.tilt * (vals[static_cast<std::size_t>(t)] - vmax));
        return vmax + std::log(acc) / level.tilt;
    }

    const std::vector<Level>& levels_;
    std::vector<Eigen::VectorXd> z_;
    std::vector<std::vector<double>> vals_;
};

double evaluate_plan(const Plan& plan, const Eigen::VectorXd& lambda, int threads) {
    const int kappa = static_cast<int>(lambda.size());
    if (plan.levels.empty()) {
        Walker w(plan.levels, kappa);
        return plan.analytic_shift + w.run(lambda);
    }

    // Parallelize over the outermost level (always a plain expectation).
    const Level& outer = plan.levels.front();
    const long long n = outer.offsets.cols();
    if (outer.tilt != 0.0 || threads <= 1 || n < 64 || plan.levels.size() < 2) {
        Walker w(plan.levels, kappa);
        return plan.analytic_shift + w.run(lambda);
    }
    std::vector<Level> inner(plan.levels.begin() + 1, plan.levels.end());
    std::vector<double> partial(static_cast<std::size_t>(n));
    parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t t) {
        Walker w(inner, kappa);
        partial[t] = w.run(lambda + outer.offsets.col(t));
    });
    double acc = 0.0;
    for (long long t = 0; t < n; ++t)
        acc += std::exp(outer.log_weights[t]) * partial[static_cast<std::size_t>(t)];
    return plan.analytic_shift + acc;
}

}  // namespace

struct ParisiEvaluator::Impl {
    int kappa = 0;
    EvalSettings settings;
    std::string method;
    long long leaves = 1;

    Plan base;
    mutable Plan refined;           // quadrature, nodes + 4 (built lazily)
    mutable bool refined_built = false;
    mutable std::mutex refine_mutex;

    std::vector<Plan> mc_replicates;  // Monte Carlo error replicates

    // Build inputs retained for lazy refinement.
    std::vector<Eigen::MatrixXd> factors;
    std::vector<double> tilts;
    double analytic_shift = 0.0;

    Plan build_quadrature(int nodes) const {
        Plan plan;
        plan.analytic_shift = analytic_shift;
        const GaussHermite rule = gauss_hermite(nodes);
        for (std::size_t r = 0; r < factors.size(); ++r) {
            if (factors[r].cols() == 0) continue;
            plan.levels.push_back(build_quadrature_level(factors[r], tilts[r], rule));
            plan.leaves *= plan.levels.back().offsets.cols();
        }
        return plan;
    }

    Plan build_mc(std::uint64_t replicate) const {
        Plan plan;
        plan.analytic_shift = analytic_shift;
        RngStream rng(settings.seed, "parisi-mc", replicate);
        for (std::size_t r = 0; r < factors.size(); ++r) {
            if (factors[r].cols() == 0) continue;
            plan.levels.push_back(
                build_mc_level(factors[r], tilts[r], settings.samples_per_level, rng));
            plan.leaves *= plan.levels.back().offsets.cols();
        }
        return plan;
    }
};

ParisiEvaluator::ParisiEvaluator(const CovarianceSpec& spec, const DiscretePath& path,
                                 const EvalSettings& settings)
    : impl_(std::make_unique<Impl>()) {
    settings.validate();
    spec.validate();
    path.validate();
    if (path.kappa() != spec.kappa)
        throw std::invalid_argument("eval_P1: path dimension does not match spec");
    impl_->kappa = spec.kappa;
    impl_->settings = settings;

    const auto deltas = path_increments(spec, path);
    const int s = path.levels();

    // Try the symmetric fast path: every increment of the form a I + b 11^T
    // splits into a zero-sum component (quadrature dimension kappa - 1) and a
    // rank-one common shift that integrates in closed form.
    bool all_isotropic = settings.reduce_symmetric;
    std::vector<IsotropicForm> forms(s);
    for (int r = 0; r < s && all_isotropic; ++r) {
        forms[r] = isotropic_form(deltas[r]);
        all_isotropic = forms[r].ok;
    }

    if (all_isotropic) {
        const Eigen::MatrixXd basis = zero_sum_basis(impl_->kappa);
        for (int r = 0; r < s; ++r) {
            const double scale = 1.0 + std::abs(forms[r].a) + std::abs(forms[r].b);
            double a = forms[r].a;
            double e = forms[r].a + impl_->kappa * forms[r].b;
            if (a < -kPsdTol * scale || e < -kPsdTol * scale)
                throw std::invalid_argument(
                    "eval_P1: non-PSD covariance increment (path monotonicity violated)");
            a = std::max(a, 0.0);
            e = std::max(e, 0.0);
            const double tilt = tilt_for(path, r);
            if (tilt > 0.0) impl_->analytic_shift += tilt * e / (2.0 * impl_->kappa);
            if (a > 0.0) {
                impl_->factors.push_back(std::sqrt(a) * basis);
                impl_->tilts.push_back(tilt);
            } else {
                impl_->factors.push_back(Eigen::MatrixXd(impl_->kappa, 0));
                impl_->tilts.push_back(tilt);
            }
        }
    } else {
        for (int r = 0; r < s; ++r) {
            impl_->factors.push_back(increment_factor(deltas[r]));
            impl_->tilts.push_back(tilt_for(path, r));
        }
    }

    // Method selection.
    long long quad_leaves = 1;
    bool overflow = false;
    for (const auto& L : impl_->factors) {
        for (int i = 0; i < L.cols(); ++i) {
            quad_leaves *= settings.nodes_per_dim;
            if (static_cast<double>(quad_leaves) > settings.quadrature_budget) overflow = true;
            if (overflow) break;
        }
        if (overflow) break;
    }

    EvalMethod method = settings.method;
    if (method == EvalMethod::Auto)
        method = overflow ? EvalMethod::MonteCarlo : EvalMethod::TensorQuadrature;
    if (method == EvalMethod::TensorQuadrature && overflow)
        throw std::invalid_argument("eval_P1: tensor quadrature exceeds the leaf budget");

    if (method == EvalMethod::TensorQuadrature) {
        impl_->method = "quadrature";
        impl_->base = impl_->build_quadrature(settings.nodes_per_dim);
        impl_->leaves = impl_->base.leaves;
    } else {
        impl_->method = "monte-carlo";
        impl_->base = impl_->build_mc(0);
        impl_->leaves = impl_->base.leaves;
        if (settings.with_error)
            for (std::uint64_t rep = 1; rep < 4; ++rep)
                impl_->mc_replicates.push_back(impl_->build_mc(rep));
    }
}

ParisiEvaluator::~ParisiEvaluator() = default;
ParisiEvaluator::ParisiEvaluator(ParisiEvaluator&&) noexcept = default;
ParisiEvaluator& ParisiEvaluator::operator=(ParisiEvaluator&&) noexcept = default;

double ParisiEvaluator::value(const Eigen::VectorXd& lambda) const {
    if (lambda.size() != impl_->kappa)
        throw std::invalid_argument("eval_P1: lambda dimension does not match kappa");
    return evaluate_plan(impl_->base, lambda, resolve_threads(impl_->settings.threads));
}

ParisiValue ParisiEvaluator::evaluate(const Eigen::VectorXd& lambda) const {
    ParisiValue out;
    out.lambda = lambda;
    out.method = impl_->method;
    out.seed = impl_->settings.seed;
    out.nodes_or_samples = impl_->method == "quadrature"
                               ? impl_->settings.nodes_per_dim
                               : impl_->settings.samples_per_level;
    const int threads = resolve_threads(impl_->settings.threads);
    if (impl_->method == "quadrature") {
        const double coarse = evaluate_plan(impl_->base, lambda, threads);
        if (!impl_->settings.with_error) {
            out.value = coarse;
            return out;
        }
        {
            std::lock_guard<std::mutex> lock(impl_->refine_mutex);
            if (!impl_->refined_built) {
                impl_->refined = impl_->build_quadrature(impl_->settings.nodes_per_dim + 4);
                impl_->refined_built = true;
            }
        }
        const double fine = evaluate_plan(impl_->refined, lambda, threads);
        out.value = fine;
        out.error_estimate = std::abs(fine - coarse);
    } else {
        OnlineMeanVar stats;
        stats.add(evaluate_plan(impl_->base, lambda, threads));
        for (const auto& rep : impl_->mc_replicates)
            stats.add(evaluate_plan(rep, lambda, threads));
        out.value = stats.mean();
        out.error_estimate = stats.count() > 1 ? stats.stderror() : 0.0;
    }
    return out;
}

const std::string& ParisiEvaluator::method_name() const { return impl_->method; }
long long ParisiEvaluator::work_per_evaluation() const { return impl_->leaves; }

ParisiValue eval_P1(const CovarianceSpec& spec, const DiscretePath& path,
                    const Eigen::VectorXd& lambda, const EvalSettings& settings) {
    return ParisiEvaluator(spec, path, settings).evaluate(lambda);
}

double eval_P2(const CovarianceSpec& spec, const DiscretePath& path) {
    spec.validate();
    path.validate(/*require_terminal_diag=*/true);
    if (path.kappa() != spec.kappa)
        throw std::invalid_argument("eval_P2: path dimension does not match spec");
    double acc = 0.0;
    double prev_m = 0.0;
    for (int r = 0; r < path.levels(); ++r) {
        acc += (path.m_upper[r] - prev_m) * eval_vartheta(spec, path.gammas[r]);
        prev_m = path.m_upper[r];
    }
    return 0.5 * acc - 0.5 * eval_vartheta(spec, path.gammas.back());
}

ParisiValue eval_P(const CovarianceSpec& spec, const DiscretePath& path,
                   const Eigen::VectorXd& lambda, const EvalSettings& settings) {
    ParisiValue out = eval_P1(spec, path, lambda, settings);
    out.value += eval_P2(spec, path);
    return out;
}

Eigen::VectorXd grad_lambda(const CovarianceSpec& spec, const DiscretePath& path,
                            const Eigen::VectorXd& lambda, const EvalSettings& settings) {
    EvalSettings fast = settings;
    fast.with_error = false;
    ParisiEvaluator eval(spec, path, fast);
    const double h = 1e-4;
    Eigen::VectorXd grad(lambda.size());
    for (int k = 0; k < lambda.size(); ++k) {
        Eigen::VectorXd up = lambda, dn = lambda;
        up(k) += h;
        dn(k) -= h;
        grad(k) = (eval.value(up) - eval.value(dn)) / (2.0 * h);
    }
    return grad;
}

ParisiValue eval_parisi(const CovarianceSpec& spec, const DiscretePath& path,
                        const Magnetization& d, const EvalSettings& settings) {
    d.validate();
    if (d.kappa() != spec.kappa)
        throw std::invalid_argument("eval_parisi: magnetization dimension mismatch");
    EvalSettings fast = settings;
    fast.with_error = false;
    ParisiEvaluator eval(spec, path, fast);
    const double p2 = eval_P2(spec, path);
    const int kappa = spec.kappa;
    const int free = kappa - 1;  // lambda_kappa gauge-fixed to 0

    auto lift = [&](const Eigen::VectorXd& x) {
        Eigen::VectorXd lambda = Eigen::VectorXd::Zero(kappa);
        lambda.head(free) = x;
        return lambda;
    };
    auto objective = [&](const Eigen::VectorXd& x) {
        const Eigen::VectorXd lambda = lift(x);
        return eval.value(lambda) - lambda.dot(d.d);
    };

    Eigen::VectorXd x = Eigen::VectorXd::Zero(free);
    NelderMeadResult best;
    best.value = objective(x);
    best.x = x;
    bool converged = false;
    double step = 0.5;
    for (int attempt = 0; attempt < 3; ++attempt) {
        NelderMeadResult r = nelder_mead(objective, best.x, step, 400, 1e-11);
        if (r.value < best.value || attempt == 0) best = r;
        if (r.converged) {
            converged = true;
            break;
        }
        step *= 0.25;  // restart on stall with a tighter simplex
    }

    ParisiValue out = ParisiEvaluator(spec, path, settings).evaluate(lift(best.x));
    out.value += p2 + (-lift(best.x).dot(d.d));
    out.lambda = lift(best.x);
    out.converged = converged;
    return out;
}

}  // namespace pottsglass
