#include "pottsglass/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pottsglass/numerics.hpp"
#include "pottsglass/rng.hpp"

namespace pottsglass {

void OptimizeConfig::validate() const {
    if (levels < 1) throw std::invalid_argument("optimize: levels must be >= 1");
    if (restarts < 1) throw std::invalid_argument("optimize: restarts must be >= 1");
    eval.validate();
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) {
    const double q = std::clamp(p, 1e-9, 1.0 - 1e-9);
    return std::log(q / (1.0 - q));
}

// Stick-breaking chain: values v_1 < ... < v_{count} inside (lo, hi), each
// step consuming a sigmoid fraction of the remaining interval.
std::vector<double> chain_from_coords(const double* coords, int count, double lo, double hi) {
    std::vector<double> out(count);
    double cur = lo;
    for (int i = 0; i < count; ++i) {
        cur += (hi - cur) * sigmoid(coords[i]);
        out[i] = cur;
    }
    return out;
}

void coords_from_chain(const std::vector<double>& chain, double lo, double hi, double* coords) {
    double cur = lo;
    for (std::size_t i = 0; i < chain.size(); ++i) {
        const double span = hi - cur;
        coords[i] = logit(span > 0 ? (chain[i] - cur) / span : 0.5);
        cur = chain[i];
    }
}

SymmetricPath symmetric_from_coords(const Eigen::VectorXd& x, int s) {
    SymmetricPath path;
    if (s == 1) {
        path.m_upper = {1.0};
        path.atoms = {1.0};
        return path;
    }
    path.m_upper = chain_from_coords(x.data(), s - 1, 0.0, 1.0);
    path.m_upper.push_back(1.0);
    path.atoms = chain_from_coords(x.data() + (s - 1), s - 1, 0.0, 1.0);
    path.atoms.push_back(1.0);
    return path;
}

Eigen::VectorXd coords_from_symmetric(const SymmetricPath& path) {
    const int s = path.levels();
    Eigen::VectorXd x(2 * (s - 1));
    if (s == 1) return x;
    std::vector<double> weights(path.m_upper.begin(), path.m_upper.end() - 1);
    std::vector<double> atoms(path.atoms.begin(), path.atoms.end() - 1);
    coords_from_chain(weights, 0.0, 1.0, x.data());
    coords_from_chain(atoms, 0.0, 1.0, x.data() + (s - 1));
    return x;
}

struct Candidate {
    Eigen::VectorXd x;
    double value = std::numeric_limits<double>::infinity();
    bool converged = false;
};

// Multi-start Nelder-Mead with deterministic index-ordered merge.
Candidate multistart(const std::function<double(const Eigen::VectorXd&)>& objective, int dim,
                     const OptimizeConfig& config,
                     const std::vector<Eigen::VectorXd>& extra_starts) {
    std::vector<Eigen::VectorXd> starts;
    starts.push_back(Eigen::VectorXd::Zero(dim));
    for (const auto& s : extra_starts) starts.push_back(s);
    for (int r = static_cast<int>(starts.size());
         r < config.restarts + static_cast<int>(extra_starts.size()); ++r) {
        RngStream rng(config.eval.seed, "minimize-restart", static_cast<std::uint64_t>(r));
        Eigen::VectorXd x(dim);
        for (int i = 0; i < dim; ++i) x(i) = 1.5 * rng.normal();
        starts.push_back(x);
    }

    std::vector<Candidate> results(starts.size());
    parallel_for(starts.size(), resolve_threads(config.eval.threads), [&](std::size_t i) {
        NelderMeadResult r =
            nelder_mead(objective, starts[i], 0.7, config.max_iterations, config.tolerance);
        if (!r.converged) {
            // Restart once from the stalled point with a tighter simplex.
            NelderMeadResult r2 =
                nelder_mead(objective, r.x, 0.15, config.max_iterations, config.tolerance);
            if (r2.value <= r.value) r = r2;
        }
        results[i] = Candidate{r.x, r.value, r.converged};
    });

    Candidate best = results.front();
    for (const auto& c : results)
        if (c.value < best.value) best = c;
    return best;
}

}  // namespace

MinimizeResult minimize_symmetric(const CovarianceSpec& spec, int kappa,
                                  const OptimizeConfig& config,
                                  const std::optional<SymmetricPath>& warm_start) {
    config.validate();
    spec.validate();
    if (spec.kappa != kappa)
        throw std::invalid_argument("minimize_symmetric: kappa does not match spec");
    if (!check_symmetry(spec))
        throw std::invalid_argument(
            "minimize_symmetric: spec is not permutation-symmetric; the lambda = 0 "
            "shortcut is invalid");

    const int s = config.levels;
    const Eigen::VectorXd zero_lambda = Eigen::VectorXd::Zero(kappa);

    EvalSettings inner = config.eval;
    inner.with_error = false;
    inner.threads = 1;  // parallelism lives at the restart level

    auto path_value = [&](const SymmetricPath& sp) {
        const DiscretePath dp = symmetric_to_discrete(sp, kappa);
        ParisiEvaluator eval(spec, dp, inner);
        return eval.value(zero_lambda) + eval_P2(spec, dp);
    };

    MinimizeResult out;
    if (s == 1) {
        out.symmetric_path = SymmetricPath{{1.0}, {1.0}};
    } else {
        auto objective = [&](const Eigen::VectorXd& x) {
            return path_value(symmetric_from_coords(x, s));
        };
        std::vector<Eigen::VectorXd> extra;
        if (warm_start) {
            if (warm_start->levels() != s)
                throw std::invalid_argument("minimize_symmetric: warm start has wrong depth");
            extra.push_back(coords_from_symmetric(*warm_start));
        }
        Candidate best = multistart(objective, 2 * (s - 1), config, extra);
        out.symmetric_path = symmetric_from_coords(best.x, s);
        out.converged = best.converged;
    }

    out.path = symmetric_to_discrete(out.symmetric_path, kappa);
    ParisiEvaluator final_eval(spec, out.path, config.eval);
    out.value = final_eval.evaluate(zero_lambda);
    out.value.value += eval_P2(spec, out.path);
    out.value.lambda = zero_lambda;
    return out;
}

namespace {

Eigen::MatrixXd k2_level_matrix(double x, const Magnetization& d) {
    Eigen::MatrixXd g(2, 2);
    g(0, 0) = x;
    g(0, 1) = g(1, 0) = d.d(0) - x;
    g(1, 1) = d.d(1) - d.d(0) + x;
    return g;
}

}  // namespace

MinimizeResult minimize_general_k2(const CovarianceSpec& spec, const Magnetization& d,
                                   const OptimizeConfig& config) {
    config.validate();
    spec.validate();
    d.validate();
    if (spec.kappa != 2 || d.kappa() != 2)
        throw std::invalid_argument(
            "minimize_general_k2: only kappa = 2 is supported (Gamma_2(d) is a "
            "one-parameter family per level)");

    const int s = config.levels;
    const double d1 = d.d(0);
    // Feasible (1,1) entries: PSD needs x >= d1^2, entries need x <= d1.
    const double lo = d1 * d1;
    const double hi = d1;

    EvalSettings inner = config.eval;
    inner.with_error = false;
    inner.threads = 1;

    auto build_path = [&](const Eigen::VectorXd& x) {
        DiscretePath path;
        if (s > 1) {
            path.m_upper = chain_from_coords(x.data(), s - 1, 0.0, 1.0);
            const auto entries = chain_from_coords(x.data() + (s - 1), s - 1, lo, hi);
            for (double e : entries) path.gammas.push_back(k2_level_matrix(e, d));
        }
        path.m_upper.push_back(1.0);
        path.gammas.push_back(k2_level_matrix(hi, d));  // diag(d)
        return path;
    };

    auto objective = [&](const Eigen::VectorXd& x) {
        return eval_parisi(spec, build_path(x), d, inner).value;
    };

    MinimizeResult out;
    if (s == 1) {
        out.path = build_path(Eigen::VectorXd());
        out.converged = true;
    } else {
        Candidate best = multistart(objective, 2 * (s - 1), config, {});
        out.path = build_path(best.x);
        out.converged = best.converged;
    }
    out.value = eval_parisi(spec, out.path, d, config.eval);
    out.converged = out.converged && out.value.converged;
    return out;
}

GroundStateReport ground_state(const std::function<CovarianceSpec(double)>& spec_template,
                               int kappa, const std::vector<double>& betas,
                               const OptimizeConfig& config) {
    config.validate();
    if (betas.empty()) throw std::invalid_argument("ground_state: empty beta list");
    for (std::size_t i = 1; i < betas.size(); ++i)
        if (!(betas[i] > betas[i - 1]))
            throw std::invalid_argument("ground_state: betas must be strictly increasing");

    GroundStateReport report;
    for (double beta : betas) {
        const CovarianceSpec spec = spec_template(beta);
        GroundStatePoint point;
        point.beta = beta;
        std::optional<SymmetricPath> warm;
        for (int s = 1; s <= config.levels; ++s) {
            OptimizeConfig cfg = config;
            cfg.levels = s;
            std::optional<SymmetricPath> start;
            if (warm) {
                // Duplicate the deepest atom; the duplicated path evaluates
                // to the depth-(s-1) optimum, so depth s starts no worse.
                SymmetricPath grown = *warm;
                const double m_prev = s >= 3 ? grown.m_upper[s - 3] : 0.0;
                grown.m_upper.back() = 0.5 * (m_prev + 1.0);
                grown.m_upper.push_back(1.0);
                grown.atoms.push_back(1.0);  // duplicate terminal atom
                start = grown;
            }
            MinimizeResult res = minimize_symmetric(spec, kappa, cfg, start);
            point.value_by_s.push_back(res.value.value / beta);
            point.error_by_s.push_back(res.value.error_estimate / beta);
            warm = res.symmetric_path;
        }
        point.value = point.value_by_s.back();
        point.error = point.error_by_s.back();
        for (std::size_t i = 1; i < point.value_by_s.size(); ++i) {
            const double slack = 2.0 * (point.error_by_s[i] + point.error_by_s[i - 1]);
            if (point.value_by_s[i] > point.value_by_s[i - 1] + slack)
                report.monotone_in_s = false;
        }
        report.points.push_back(std::move(point));
    }

    for (std::size_t i = 1; i < report.points.size(); ++i) {
        const double slack =
            2.0 * (report.points[i].error + report.points[i - 1].error) + 1e-12;
        if (report.points[i].value > report.points[i - 1].value + slack)
            report.monotone_in_beta = false;
    }

    // Least-squares fit value ~ a + b / beta.
    double s11 = 0, s1x = 0, sxx = 0, s1y = 0, sxy = 0;
    for (const auto& p : report.points) {
        const double x = 1.0 / p.beta;
        s11 += 1.0;
        s1x += x;
        sxx += x * x;
        s1y += p.value;
        sxy += x * p.value;
    }
    const double det = s11 * sxx - s1x * s1x;
    if (std::abs(det) > 1e-14) {
        report.extrapolated = (sxx * s1y - s1x * sxy) / det;
        report.slope = (s11 * sxy - s1x * s1y) / det;
    } else {
        report.extrapolated = report.points.back().value;
        report.slope = 0.0;
    }
    for (const auto& p : report.points) {
        const double fit = report.extrapolated + report.slope / p.beta;
        report.fit_residual = std::max(report.fit_residual, std::abs(p.value - fit));
    }
    return report;
}

}  // namespace pottsglass
