#include "pottsglass/rpc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "pottsglass/numerics.hpp"

namespace pottsglass {

void CascadeConfig::validate() const {
    double prev = 0.0;
    for (double m : weights) {
        if (!(m > prev) || m >= 1.0)
            throw std::invalid_argument("cascade: weights must satisfy 0 < m_1 < ... < 1");
        prev = m;
    }
    if (truncation < 2 && depth() > 0)
        throw std::invalid_argument("cascade: truncation must be >= 2");
    double leaves = 1.0;
    for (int r = 0; r < depth(); ++r) leaves *= truncation;
    if (leaves > 1e7) throw std::invalid_argument("cascade: K^(s-1) exceeds 1e7");
}

long long CascadeSample::ancestor(long long leaf, int r) const {
    long long div = 1;
    for (int i = 0; i < depth - r; ++i) div *= branching;
    return leaf / div;
}

int CascadeSample::overlap_depth(long long leaf_a, long long leaf_b) const {
    if (leaf_a == leaf_b) return depth + 1;  // r(alpha, alpha) = s
    for (int r = 1; r <= depth; ++r)
        if (ancestor(leaf_a, r) != ancestor(leaf_b, r)) return r;
    return depth + 1;
}

std::vector<double> CascadeSample::weight_cdf() const {
    std::vector<double> cdf(log_leaf_weights.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < log_leaf_weights.size(); ++i) {
        acc += std::exp(log_leaf_weights[i]);
        cdf[i] = acc;
    }
    cdf.back() = 1.0;
    return cdf;
}

long long CascadeSample::sample_leaf(RngStream& rng, const std::vector<double>& cdf) const {
    const double u = rng.uniform();
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    return static_cast<long long>(it - cdf.begin());
}

CascadeSample sample_cascade(const CascadeConfig& config, std::uint64_t replica) {
    config.validate();
    CascadeSample sample;
    sample.depth = config.depth();
    sample.branching = sample.depth == 0 ? 1 : config.truncation;
    RngStream rng(config.seed, "cascade", replica);

    if (sample.depth == 0) {
        sample.log_leaf_weights = {0.0};
        return sample;
    }

    const int K = config.truncation;
    // log-weights of all nodes at the current depth, extended level by level.
    std::vector<double> current{0.0};
    for (int r = 0; r < sample.depth; ++r) {
        const double m = config.weights[r];
        std::vector<double> next(current.size() * K);
        for (std::size_t node = 0; node < current.size(); ++node) {
            double arrivals = 0.0;
            for (int child = 0; child < K; ++child) {
                arrivals += rng.exponential();
                // Atom (E_1 + ... + E_i)^(-1/m): automatically decreasing.
                next[node * K + child] = current[node] - std::log(arrivals) / m;
            }
        }
        current.swap(next);
    }

    const double logz = logsumexp(current);
    for (double& w : current) w -= logz;
    sample.log_leaf_weights = std::move(current);
    return sample;
}

TreeFields sample_tree_fields(const CascadeSample& cascade, const DiscretePath& path,
                              const CovarianceSpec& spec, int n_sites, RngStream& rng) {
    path.validate();
    spec.validate();
    if (n_sites < 0) throw std::invalid_argument("sample_tree_fields: n_sites must be >= 0");
    const int s = path.levels();
    if (cascade.depth != s - 1)
        throw std::invalid_argument("sample_tree_fields: cascade depth must equal s - 1");
    const int kappa = spec.kappa;

    // Increment factors for Z and scalar standard deviations for Y.
    std::vector<Eigen::MatrixXd> factors(s);
    std::vector<double> y_sd(s);
    Eigen::MatrixXd prev_grad;
    double prev_theta = 0.0;
    for (int r = 0; r < s; ++r) {
        Eigen::MatrixXd grad = eval_grad_xi(spec, path.gammas[r]);
        Eigen::MatrixXd delta = r == 0 ? grad : Eigen::MatrixXd(grad - prev_grad);
        factors[r] = sqrt_psd(delta);
        prev_grad = std::move(grad);

        const double theta = eval_vartheta(spec, path.gammas[r]);
        const double inc = theta - prev_theta;
        if (inc < -1e-12)
            throw std::invalid_argument(
                "sample_tree_fields: negative vartheta increment (monotonicity violated)");
        y_sd[r] = std::sqrt(std::max(inc, 0.0));
        prev_theta = theta;
    }

    const long long leaves = cascade.leaves();
    TreeFields fields;
    fields.z.assign(n_sites, Eigen::MatrixXd::Zero(kappa, leaves));
    fields.y = Eigen::VectorXd::Zero(leaves);

    // Walk depth by depth; each node's innovation is shared by all leaves in
    // its subtree.  Node at depth r has K^(s-1-r) leaves under it.
    Eigen::VectorXd eta(kappa);
    for (int r = 0; r < s; ++r) {
        long long nodes = 1;
        for (int i = 0; i < std::min(r, cascade.depth); ++i) nodes *= cascade.branching;
        const long long span = leaves / nodes;
        for (long long node = 0; node < nodes; ++node) {
            for (int i = 0; i < n_sites; ++i) {
                for (int k = 0; k < kappa; ++k) eta(k) = rng.normal();
                const Eigen::VectorXd contrib = factors[r] * eta;
                for (long long leaf = node * span; leaf < (node + 1) * span; ++leaf)
                    fields.z[i].col(leaf) += contrib;
            }
            const double eta_y = rng.normal();
            for (long long leaf = node * span; leaf < (node + 1) * span; ++leaf)
                fields.y(leaf) += y_sd[r] * eta_y;
        }
    }
    return fields;
}

namespace {

// Exact log sum over the magnetization-constrained slice by dynamic
// programming over per-symbol counts (mixed-radix state space).
class ConstrainedLogSum {
  public:
    ConstrainedLogSum(int N, const std::vector<int>& counts)
        : N_(N), counts_(counts), kappa_(static_cast<int>(counts.size())) {
        strides_.assign(kappa_, 1);
        for (int k = 1; k < kappa_; ++k)
            strides_[k] = strides_[k - 1] * (counts_[k - 1] + 1);
        total_ = strides_[kappa_ - 1] * (counts_[kappa_ - 1] + 1);
        dp_.resize(total_);
        scratch_.resize(total_);
    }

    // w(i, k) = weight of assigning symbol k at site i.
    template <typename W>
    double run(const W& w) {
        const double ninf = -std::numeric_limits<double>::infinity();
        std::fill(dp_.begin(), dp_.end(), ninf);
        dp_[0] = 0.0;
        for (int i = 0; i < N_; ++i) {
            std::fill(scratch_.begin(), scratch_.end(), ninf);
            for (int state = 0; state < total_; ++state) {
                const double base = dp_[state];
                if (base == ninf) continue;
                for (int k = 0; k < kappa_; ++k) {
                    const int used = (state / strides_[k]) % (counts_[k] + 1);
                    if (used >= counts_[k]) continue;
                    const int next = state + strides_[k];
                    const double cand = base + w(i, k);
                    double& slot = scratch_[next];
                    if (slot == ninf)
                        slot = cand;
                    else if (cand > slot)
                        slot = cand + std::log1p(std::exp(slot - cand));
                    else
                        slot = slot + std::log1p(std::exp(cand - slot));
                }
            }
            dp_.swap(scratch_);
        }
        return dp_[total_ - 1];
    }

  private:
    int N_;
    std::vector<int> counts_;
    int kappa_;
    std::vector<int> strides_;
    int total_ = 0;
    std::vector<double> dp_;
    std::vector<double> scratch_;
};

}  // namespace

P1NEstimate estimate_P1_N(const CovarianceSpec& spec, const DiscretePath& path,
                          const Eigen::VectorXd& lambda, int N, ConstraintMode mode,
                          const Magnetization* d, const CascadeConfig& config,
                          int n_replicas, int threads) {
    spec.validate();
    path.validate();
    config.validate();
    if (N < 1) throw std::invalid_argument("estimate_P1_N: N must be >= 1");
    if (lambda.size() != spec.kappa)
        throw std::invalid_argument("estimate_P1_N: lambda dimension mismatch");
    if (N * std::log(static_cast<double>(spec.kappa)) > std::log(1e6))
        throw std::invalid_argument("estimate_P1_N: kappa^N exceeds 1e6");
    if (n_replicas < 2) throw std::invalid_argument("estimate_P1_N: need >= 2 replicas");

    std::vector<int> counts;
    if (mode == ConstraintMode::Magnetization) {
        if (d == nullptr)
            throw std::invalid_argument("estimate_P1_N: constrained mode needs d");
        if (!d->in_grid(N))
            throw std::invalid_argument("estimate_P1_N: d is not in the volume-N grid");
        for (int k = 0; k < d->kappa(); ++k)
            counts.push_back(static_cast<int>(std::llround(d->d(k) * N)));
    }

    const int kappa = spec.kappa;
    std::vector<double> values(static_cast<std::size_t>(n_replicas));
    parallel_for(static_cast<std::size_t>(n_replicas), resolve_threads(threads),
                 [&](std::size_t rep) {
        const CascadeSample cascade = sample_cascade(config, rep);
        RngStream field_rng(config.seed, "tree-fields", rep);
        const TreeFields fields = sample_tree_fields(cascade, path, spec, N, field_rng);
        const long long leaves = cascade.leaves();

        std::vector<double> per_leaf(static_cast<std::size_t>(leaves));
        if (mode == ConstraintMode::Full) {
            for (long long a = 0; a < leaves; ++a) {
                double acc = 0.0;
                for (int i = 0; i < N; ++i) {
                    double m = -std::numeric_limits<double>::infinity();
                    for (int k = 0; k < kappa; ++k)
                        m = std::max(m, fields.z[i](k, a) + lambda(k));
                    double e = 0.0;
                    for (int k = 0; k < kappa; ++k)
                        e += std::exp(fields.z[i](k, a) + lambda(k) - m);
                    acc += m + std::log(e);
                }
                per_leaf[static_cast<std::size_t>(a)] =
                    cascade.log_leaf_weights[static_cast<std::size_t>(a)] + acc;
            }
        } else {
            ConstrainedLogSum sum(N, counts);
            for (long long a = 0; a < leaves; ++a) {
                const double logsum = sum.run(
                    [&](int i, int k) { return fields.z[i](k, a) + lambda(k); });
                per_leaf[static_cast<std::size_t>(a)] =
                    cascade.log_leaf_weights[static_cast<std::size_t>(a)] + logsum;
            }
        }
        values[rep] = logsumexp(per_leaf) / N;
    });

    OnlineMeanVar stats;
    for (double v : values) stats.add(v);
    P1NEstimate out;
    out.value = stats.mean();
    out.stderror = stats.stderror();
    out.replicas = n_replicas;
    return out;
}

OverlapLawReport check_overlap_law(const CascadeConfig& config, long long n_pairs,
                                   double pass_threshold, int threads) {
    config.validate();
    if (n_pairs < 1000) throw std::invalid_argument("check_overlap_law: need >= 1000 pairs");
    const int s = config.depth() + 1;

    std::vector<int> depth_of_pair(static_cast<std::size_t>(n_pairs));
    parallel_for(static_cast<std::size_t>(n_pairs), resolve_threads(threads),
                 [&](std::size_t rep) {
        const CascadeSample cascade = sample_cascade(config, rep);
        RngStream pair_rng(config.seed, "overlap-pairs", rep);
        const auto cdf = cascade.weight_cdf();
        const long long a = cascade.sample_leaf(pair_rng, cdf);
        const long long b = cascade.sample_leaf(pair_rng, cdf);
        depth_of_pair[rep] = cascade.overlap_depth(a, b);
    });

    OverlapLawReport report;
    report.pairs = n_pairs;
    report.counts.assign(s, 0);
    for (int r : depth_of_pair) report.counts[r - 1] += 1;
    report.expected.resize(s);
    double prev = 0.0;
    for (int r = 0; r < s; ++r) {
        const double m = r + 1 < s ? config.weights[r] : 1.0;
        report.expected[r] = static_cast<double>(n_pairs) * (m - prev);
        prev = m;
    }
    if (s == 1) {
        report.statistic = 0.0;
        report.p_value = 1.0;
        report.pass = true;
        return report;
    }
    for (int r = 0; r < s; ++r) {
        const double e = report.expected[r];
        if (e > 0.0) {
            const double diff = report.counts[r] - e;
            report.statistic += diff * diff / e;
        }
    }
    report.p_value = chi_square_pvalue(report.statistic, s - 1);
    report.pass = report.p_value >= pass_threshold;
    return report;
}

namespace {

double poly_eval(const std::vector<double>& coeffs, double x) {
    double acc = 0.0;
    for (std::size_t i = coeffs.size(); i-- > 0;) acc = acc * x + coeffs[i];
    return acc;
}

}  // namespace

GgReport check_gg_identities(const CascadeConfig& config, const std::vector<double>& atoms,
                             int n, const std::vector<double>& psi_coeffs,
                             bool f_is_overlap, int n_replicas, int threads) {
    config.validate();
    if (n < 2 || n > 8) throw std::invalid_argument("check_gg_identities: n out of range");
    if (n_replicas < 100) throw std::invalid_argument("check_gg_identities: need >= 100 replicas");
    const int s = config.depth() + 1;
    if (static_cast<int>(atoms.size()) != s)
        throw std::invalid_argument("check_gg_identities: need one atom per level");
    for (std::size_t i = 1; i < atoms.size(); ++i)
        if (atoms[i] < atoms[i - 1])
            throw std::invalid_argument("check_gg_identities: atoms must be nondecreasing");
    if (psi_coeffs.empty() || psi_coeffs.size() > 4)
        throw std::invalid_argument("check_gg_identities: psi must have degree <= 3");

    // Per replica means of A = f psi(Q_{1,n+1}), B = f, C = psi(Q_{1,2}),
    // D_l = f psi(Q_{1,l}).
    const int terms = 3 + (n - 1);
    std::vector<std::vector<double>> samples(static_cast<std::size_t>(n_replicas),
                                             std::vector<double>(terms, 0.0));
    parallel_for(static_cast<std::size_t>(n_replicas), resolve_threads(threads),
                 [&](std::size_t rep) {
        const CascadeSample cascade = sample_cascade(config, rep);
        RngStream leaf_rng(config.seed, "gg-leaves", rep);
        const auto cdf = cascade.weight_cdf();
        std::vector<long long> leaves(static_cast<std::size_t>(n + 1));
        for (auto& leaf : leaves) leaf = cascade.sample_leaf(leaf_rng, cdf);

        auto overlap = [&](int l, int lp) {
            const int r = cascade.overlap_depth(leaves[l], leaves[lp]);
            return atoms[static_cast<std::size_t>(r - 1)];
        };
        const double f = f_is_overlap ? overlap(0, 1) : 1.0;
        auto& row = samples[rep];
        row[0] = f * poly_eval(psi_coeffs, overlap(0, n));  // A
        row[1] = f;                                         // B
        row[2] = poly_eval(psi_coeffs, overlap(0, 1));      // C
        for (int l = 1; l < n; ++l) row[3 + (l - 1)] = f * poly_eval(psi_coeffs, overlap(0, l));
    });

    // Residual as a smooth function of the term means; jackknife stderr.
    std::vector<double> sums(terms, 0.0);
    for (const auto& row : samples)
        for (int t = 0; t < terms; ++t) sums[t] += row[t];

    auto residual_from = [&](const std::vector<double>& means) {
        double rhs = means[1] * means[2] / n;
        for (int l = 1; l < n; ++l) rhs += means[3 + (l - 1)] / n;
        return means[0] - rhs;
    };

    std::vector<double> means(terms);
    for (int t = 0; t < terms; ++t) means[t] = sums[t] / n_replicas;
    const double res = residual_from(means);

    OnlineMeanVar jack;
    std::vector<double> loo(terms);
    for (int i = 0; i < n_replicas; ++i) {
        for (int t = 0; t < terms; ++t)
            loo[t] = (sums[t] - samples[i][t]) / (n_replicas - 1);
        jack.add(residual_from(loo));
    }
    const double jackknife_var =
        (n_replicas - 1.0) / n_replicas * jack.variance() * (n_replicas - 1.0);

    GgReport report;
    report.n = n;
    report.f = f_is_overlap ? "q12" : "one";
    report.lhs = means[0];
    report.rhs = means[0] - res;
    report.residual = res;
    report.stderror = std::sqrt(jackknife_var);
    report.pass = std::abs(res) <= 3.0 * report.stderror + 1e-12;
    return report;
}

double truncation_mass_ratio(const CascadeConfig& config, int n_replicas) {
    config.validate();
    if (config.depth() == 0) return 1.0;
    const int K = config.truncation;
    const int K2 = 2 * K;
    double total_kept = 0.0, total_all = 0.0;
    for (int rep = 0; rep < n_replicas; ++rep) {
        RngStream rng(config.seed, "truncation", static_cast<std::uint64_t>(rep));
        // Build the 2K-ary tree; the K-truncated tree uses the first K
        // children of every node (arrivals come out in decreasing order).
        std::vector<double> nodes_all{0.0};
        std::vector<bool> alive{true};  // survives K-truncation
        for (int r = 0; r < config.depth(); ++r) {
            const double m = config.weights[r];
            std::vector<double> next_all(nodes_all.size() * K2);
            std::vector<bool> next_alive(nodes_all.size() * K2);
            for (std::size_t node = 0; node < nodes_all.size(); ++node) {
                double arrivals = 0.0;
                for (int child = 0; child < K2; ++child) {
                    arrivals += rng.exponential();
                    next_all[node * K2 + child] = nodes_all[node] - std::log(arrivals) / m;
                    next_alive[node * K2 + child] = alive[node] && child < K;
                }
            }
            nodes_all.swap(next_all);
            alive.swap(next_alive);
            if (nodes_all.size() > static_cast<std::size_t>(2e7))
                throw std::invalid_argument("truncation_mass_ratio: control tree too large");
        }
        double kept = 0.0, all = 0.0;
        const double shift = *std::max_element(nodes_all.begin(), nodes_all.end());
        for (std::size_t i = 0; i < nodes_all.size(); ++i) {
            const double w = std::exp(nodes_all[i] - shift);
            all += w;
            if (alive[i]) kept += w;
        }
        total_kept += kept / all;
        total_all += 1.0;
    }
    return total_kept / total_all;
}

}  // namespace pottsglass
