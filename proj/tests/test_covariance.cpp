#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>

#include "pottsglass/covariance.hpp"
#include "pottsglass/paths.hpp"
#include "pottsglass/rng.hpp"

using namespace pottsglass;

namespace {

CovarianceSpec single_term_spec(int kappa, double coeff, int p, std::vector<int> exps,
                                std::vector<Eigen::VectorXd> ws) {
    CovarianceSpec spec;
    spec.kappa = kappa;
    InteractionTerm term;
    term.hadamard_power = p;
    term.exponents = std::move(exps);
    term.vectors = std::move(ws);
    spec.terms.emplace_back(coeff, std::move(term));
    spec.validate();
    return spec;
}

// Random point with nonnegative entries and entry sum <= target.
Eigen::MatrixXd random_ball_point(int kappa, RngStream& rng, double target = 0.9) {
    Eigen::MatrixXd R(kappa, kappa);
    double total = rng.exponential();
    for (int i = 0; i < kappa; ++i)
        for (int j = 0; j < kappa; ++j) {
            R(i, j) = rng.exponential();
            total += R(i, j);
        }
    return R * (target / total);
}

// Random ordered PSD pair 0 <= Q <= R with ||R||_1 <= 1.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> random_ordered_pair(int kappa, RngStream& rng) {
    Eigen::MatrixXd A(kappa, kappa), B(kappa, kappa);
    for (int i = 0; i < kappa; ++i)
        for (int j = 0; j < kappa; ++j) {
            A(i, j) = rng.normal();
            B(i, j) = rng.normal();
        }
    Eigen::MatrixXd Q = A * A.transpose();
    Eigen::MatrixXd D = B * B.transpose();
    Eigen::MatrixXd R = Q + D;
    const double scale = 0.95 / R.cwiseAbs().sum();
    return {Q * scale, R * scale};
}

}  // namespace

TEST_CASE("potts preset evaluates tr(R^T R)") {
    const auto spec = CovarianceSpec::potts(2, 1.0);
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(2, 2);
    R(0, 0) = R(1, 1) = 0.5;
    CHECK(eval_xi(spec, R) == doctest::Approx(0.5).epsilon(1e-14));

    // Homogeneous polynomial vanishes at 0.
    CHECK(eval_xi(spec, Eigen::MatrixXd::Zero(2, 2)) == 0.0);

    // beta scaling.
    const auto spec_b = CovarianceSpec::potts(3, 1.7);
    RngStream rng(7, "potts-eval");
    const Eigen::MatrixXd P = random_ball_point(3, rng);
    CHECK(eval_xi(spec_b, P) ==
          doctest::Approx(1.7 * 1.7 * (P.transpose() * P).trace()).epsilon(1e-13));
}

TEST_CASE("hand-expanded degree-2 Hadamard term") {
    // (p=2, m=1, n=1, w=(1,1)) at R with all entries 1/4: <R^{o2} 1, 1> = 1/4.
    const auto spec = single_term_spec(2, 1.0, 2, {1}, {Eigen::VectorXd::Ones(2)});
    const Eigen::MatrixXd R = Eigen::MatrixXd::Constant(2, 2, 0.25);
    CHECK(eval_xi(spec, R) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("eval_xi input validation") {
    const auto spec = CovarianceSpec::potts(2, 1.0);
    CHECK_THROWS_AS(eval_xi(spec, Eigen::MatrixXd::Zero(3, 3)), std::invalid_argument);
    CHECK_THROWS_AS(eval_xi(spec, Eigen::MatrixXd::Constant(2, 2, 0.5)), std::domain_error);
}

TEST_CASE("gradient: potts closed form and finite differences") {
    const double beta = 0.8;
    const auto spec = CovarianceSpec::potts(2, beta);
    RngStream rng(3, "grad");
    const Eigen::MatrixXd R = random_ball_point(2, rng);
    const Eigen::MatrixXd grad = eval_grad_xi(spec, R);
    CHECK((grad - 2.0 * beta * beta * R).cwiseAbs().maxCoeff() < 1e-13);

    // Zero-coefficient spec.
    auto zero = spec;
    zero.terms[0].first = 0.0;
    CHECK(eval_grad_xi(zero, R).cwiseAbs().maxCoeff() == 0.0);

    // (p=1, m=1, n=2, w=(1,0)): grad at diag(1/2,1/2) has (1,1) entry 1.
    Eigen::VectorXd w(2);
    w << 1.0, 0.0;
    const auto spec_w = single_term_spec(2, 1.0, 1, {2}, {w});
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(2, 2);
    D(0, 0) = D(1, 1) = 0.5;
    const Eigen::MatrixXd g = eval_grad_xi(spec_w, D);
    CHECK(g(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(g(0, 1)) + std::abs(g(1, 0)) + std::abs(g(1, 1)) < 1e-14);
}

TEST_CASE("gradient matches central finite differences on random mixtures") {
    RngStream rng(11, "fd");
    Eigen::VectorXd w1(3), w2(3);
    w1 << 1.0, -0.5, 0.25;
    w2 << 0.5, 1.0, -1.0;
    CovarianceSpec spec;
    spec.kappa = 3;
    {
        InteractionTerm t1;
        t1.hadamard_power = 2;
        t1.exponents = {1};
        t1.vectors = {Eigen::VectorXd::Ones(3)};
        spec.terms.emplace_back(0.7, t1);
        InteractionTerm t2;
        t2.hadamard_power = 1;
        t2.exponents = {2, 1};
        t2.vectors = {w1, w2};
        spec.terms.emplace_back(0.3, t2);
    }
    spec.validate();

    const double h = 1e-6;
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::MatrixXd R = random_ball_point(3, rng, 0.8);
        const Eigen::MatrixXd grad = eval_grad_xi(spec, R);
        for (int k = 0; k < 3; ++k)
            for (int kp = 0; kp < 3; ++kp) {
                Eigen::MatrixXd up = R, dn = R;
                up(k, kp) += h;
                dn(k, kp) -= h;
                const double fd = (eval_xi(spec, up) - eval_xi(spec, dn)) / (2.0 * h);
                CHECK(std::abs(grad(k, kp) - fd) < 1e-6);
            }
    }
}

TEST_CASE("hessian: potts constant operator") {
    const double beta = 1.3;
    const auto spec = CovarianceSpec::potts(2, beta);
    RngStream rng(5, "hess");
    const Eigen::MatrixXd R = random_ball_point(2, rng);
    const Eigen::MatrixXd H = eval_hessian(spec, R);
    CHECK((H - 2.0 * beta * beta * Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() <
          1e-12);

    auto zero = spec;
    zero.terms[0].first = 0.0;
    CHECK(eval_hessian(zero, R).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("hessian finite-difference oracle on a mixed term") {
    Eigen::VectorXd w1(2), w2(2);
    w1 << 0.9, -0.4;
    w2 << 0.3, 1.0;
    CovarianceSpec spec;
    spec.kappa = 2;
    InteractionTerm t;
    t.hadamard_power = 2;
    t.exponents = {2, 1};
    t.vectors = {w1, w2};
    spec.terms.emplace_back(0.6, t);
    spec.validate();

    RngStream rng(9, "hess-fd");
    const double h = 1e-5;
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::MatrixXd R = random_ball_point(2, rng, 0.8);
        const Eigen::MatrixXd H = eval_hessian(spec, R);
        for (int l = 0; l < 2; ++l)
            for (int lp = 0; lp < 2; ++lp) {
                Eigen::MatrixXd up = R, dn = R;
                up(l, lp) += h;
                dn(l, lp) -= h;
                const Eigen::MatrixXd fd =
                    (eval_grad_xi(spec, up) - eval_grad_xi(spec, dn)) / (2.0 * h);
                for (int k = 0; k < 2; ++k)
                    for (int kp = 0; kp < 2; ++kp) {
                        const int row = k + 2 * kp;
                        const int col = l + 2 * lp;
                        CHECK(std::abs(H(row, col) - fd(k, kp)) < 1e-6);
                    }
            }
    }
}

TEST_CASE("vartheta identities") {
    const auto potts = CovarianceSpec::potts(2, 1.1);
    RngStream rng(13, "theta");
    const Eigen::MatrixXd R = random_ball_point(2, rng);
    // Degree 2: vartheta = xi.
    CHECK(eval_vartheta(potts, R) == doctest::Approx(eval_xi(potts, R)).epsilon(1e-12));
    CHECK(eval_vartheta(potts, Eigen::MatrixXd::Zero(2, 2)) == 0.0);

    // Degree 4 single term: vartheta = 3 xi.
    Eigen::VectorXd w(2);
    w << 0.7, -1.0;
    const auto quartic = single_term_spec(2, 0.9, 2, {2}, {w});
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::MatrixXd P = random_ball_point(2, rng);
        CHECK(eval_vartheta(quartic, P) ==
              doctest::Approx(3.0 * eval_xi(quartic, P)).epsilon(1e-12));
    }
}

TEST_CASE("monotonicity of xi, grad xi, vartheta on ordered PSD pairs") {
    CovarianceSpec spec;
    spec.kappa = 3;
    {
        InteractionTerm t1;
        t1.hadamard_power = 2;
        t1.exponents = {1};
        t1.vectors = {Eigen::VectorXd::Ones(3)};
        spec.terms.emplace_back(1.0, t1);
        Eigen::VectorXd w(3);
        w << 0.5, -0.5, 1.0;
        InteractionTerm t2;
        t2.hadamard_power = 1;
        t2.exponents = {3};
        t2.vectors = {w};
        spec.terms.emplace_back(0.4, t2);
    }
    RngStream rng(17, "mono");
    for (int trial = 0; trial < 200; ++trial) {
        const auto [Q, R] = random_ordered_pair(3, rng);
        CHECK(eval_xi(spec, Q) <= eval_xi(spec, R) + 1e-12);
        CHECK(eval_vartheta(spec, Q) <= eval_vartheta(spec, R) + 1e-12);
        const Eigen::MatrixXd diff = eval_grad_xi(spec, R) - eval_grad_xi(spec, Q);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(diff, Eigen::EigenvaluesOnly);
        CHECK(es.eigenvalues().minCoeff() >= -1e-10);
    }
}

TEST_CASE("symmetry checker") {
    CHECK(check_symmetry(CovarianceSpec::potts(3, 1.0)));

    Eigen::VectorXd e1(2), e2(2);
    e1 << 1.0, 0.0;
    e2 << 0.0, 1.0;
    const auto lopsided = single_term_spec(2, 1.0, 1, {2}, {e1});
    CHECK_FALSE(check_symmetry(lopsided));

    // Full orbit with equal coefficients is symmetric.
    CovarianceSpec orbit;
    orbit.kappa = 2;
    InteractionTerm ta, tb;
    ta.hadamard_power = tb.hadamard_power = 1;
    ta.exponents = tb.exponents = {2};
    ta.vectors = {e1};
    tb.vectors = {e2};
    orbit.terms.emplace_back(0.5, ta);
    orbit.terms.emplace_back(0.5, tb);
    CHECK(check_symmetry(orbit));

    // Unequal coefficients on the orbit break it.
    orbit.terms[1].first = 0.25;
    CHECK_FALSE(check_symmetry(orbit));
}

TEST_CASE("symmetry action leaves eval_xi invariant for symmetric specs") {
    const auto spec = CovarianceSpec::potts(3, 0.9);
    RngStream rng(19, "sym-action");
    std::vector<int> perm{2, 0, 1};
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::MatrixXd R = random_ball_point(3, rng);
        Eigen::MatrixXd pR(3, 3);
        // (omega . R)_{k,k'} = R_{omega^{-1}(k), omega^{-1}(k')}
        for (int k = 0; k < 3; ++k)
            for (int kp = 0; kp < 3; ++kp) pR(perm[k], perm[kp]) = R(k, kp);
        CHECK(eval_xi(spec, pR) == doctest::Approx(eval_xi(spec, R)).epsilon(1e-12));
    }
}

TEST_CASE("sampled convexity diagnostics") {
    const auto potts = CovarianceSpec::potts(2, 1.0);
    auto report = check_convexity_sampled(potts, 64, 123);
    CHECK(report.min_eigenvalue == doctest::Approx(2.0).epsilon(1e-9));

    CovarianceSpec zero;
    zero.kappa = 2;
    auto zr = check_convexity_sampled(zero, 8, 1);
    CHECK(zr.min_eigenvalue == doctest::Approx(0.0));

    // Potts plus a small degree-4 term stays positive over many samples.
    CovarianceSpec mix = CovarianceSpec::potts(2, 1.0);
    InteractionTerm quart;
    quart.hadamard_power = 2;
    quart.exponents = {2};
    quart.vectors = {Eigen::VectorXd::Ones(2)};
    mix.terms.emplace_back(0.05, quart);
    auto mr = check_convexity_sampled(mix, 10000, 42);
    CHECK(mr.min_eigenvalue > 0.0);
}
