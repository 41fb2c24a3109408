#include "pottsglass/numerics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <thread>

namespace pottsglass {

double logsumexp(std::span<const double> xs) {
    if (xs.empty()) return -std::numeric_limits<double>::infinity();
    double m = *std::max_element(xs.begin(), xs.end());
    if (!std::isfinite(m)) return m;
    double acc = 0.0;
    for (double x : xs) acc += std::exp(x - m);
    return m + std::log(acc);
}

GaussHermite gauss_hermite(int n) {
    if (n < 1) throw std::invalid_argument("gauss_hermite: need at least one node");
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i + 1 < n; ++i) {
        const double b = std::sqrt(static_cast<double>(i + 1));
        jacobi(i, i + 1) = b;
        jacobi(i + 1, i) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
    GaussHermite rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        rule.nodes[i] = es.eigenvalues()(i);
        const double v0 = es.eigenvectors()(0, i);
        rule.weights[i] = v0 * v0;
    }
    return rule;
}

double OnlineMeanVar::stderror() const {
    if (n_ < 2) return 0.0;
    return std::sqrt(variance() / static_cast<double>(n_));
}

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& start, double initial_step,
                             int max_iterations, double tolerance) {
    const int n = static_cast<int>(start.size());
    NelderMeadResult result;
    if (n == 0) {
        result.x = start;
        result.value = f(start);
        result.converged = true;
        return result;
    }

    std::vector<Eigen::VectorXd> simplex(n + 1, start);
    std::vector<double> values(n + 1);
    for (int i = 0; i < n; ++i) simplex[i + 1](i) += initial_step;
    for (int i = 0; i <= n; ++i) values[i] = f(simplex[i]);

    const double alpha = 1.0, gamma = 2.0, rho = 0.5, sigma = 0.5;
    int iter = 0;
    for (; iter < max_iterations; ++iter) {
        std::vector<int> order(n + 1);
        for (int i = 0; i <= n; ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](int a, int b) { return values[a] < values[b]; });
        {
            std::vector<Eigen::VectorXd> s2(n + 1);
            std::vector<double> v2(n + 1);
            for (int i = 0; i <= n; ++i) {
                s2[i] = simplex[order[i]];
                v2[i] = values[order[i]];
            }
            simplex.swap(s2);
            values.swap(v2);
        }

        if (std::abs(values[n] - values[0]) <=
            tolerance * (1.0 + std::abs(values[0]))) {
            result.converged = true;
            break;
        }

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (int i = 0; i < n; ++i) centroid += simplex[i];
        centroid /= static_cast<double>(n);

        Eigen::VectorXd reflected = centroid + alpha * (centroid - simplex[n]);
        const double fr = f(reflected);
        if (fr < values[0]) {
            Eigen::VectorXd expanded = centroid + gamma * (reflected - centroid);
            const double fe = f(expanded);
            if (fe < fr) {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
            continue;
        }
        if (fr < values[n - 1]) {
            simplex[n] = reflected;
            values[n] = fr;
            continue;
        }
        Eigen::VectorXd contracted = centroid + rho * (simplex[n] - centroid);
        const double fc = f(contracted);
        if (fc < values[n]) {
            simplex[n] = contracted;
            values[n] = fc;
            continue;
        }
        for (int i = 1; i <= n; ++i) {
            simplex[i] = simplex[0] + sigma * (simplex[i] - simplex[0]);
            values[i] = f(simplex[i]);
        }
    }

    int best = 0;
    for (int i = 1; i <= n; ++i)
        if (values[i] < values[best]) best = i;
    result.x = simplex[best];
    result.value = values[best];
    result.iterations = iter;
    return result;
}

namespace {

// Series expansion of P(a, x), valid for x < a + 1.
double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < 500; ++i) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::abs(del) < std::abs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction for Q(a, x), valid for x >= a + 1.
double gamma_q_cf(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 500; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-15) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double gamma_p(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_p: bad arguments");
    if (x == 0.0) return 0.0;
    if (x < a + 1.0) return gamma_p_series(a, x);
    return 1.0 - gamma_q_cf(a, x);
}

double gamma_q(double a, double x) { return 1.0 - gamma_p(a, x); }

double chi_square_pvalue(double statistic, int dof) {
    if (dof < 1) throw std::invalid_argument("chi_square_pvalue: dof must be >= 1");
    if (statistic <= 0.0) return 1.0;
    return gamma_q(0.5 * dof, 0.5 * statistic);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    threads = std::max(1, threads);
    if (threads == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) break;
            fn(i);
        }
    };
    std::vector<std::thread> pool;
    const int count = std::min<std::size_t>(threads, n);
    pool.reserve(count);
    for (int t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("POTTSGLASS_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    return 1;
}

}  // namespace pottsglass
