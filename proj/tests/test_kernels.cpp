#include <doctest.h>

#include <cmath>
#include <random>

#include "../src/dense_eig.hpp"
#include "helpers.hpp"
#include "svgpkan/kernels.hpp"
#include "svgpkan/rng.hpp"

using namespace svgpkan;

namespace {

KernelParams params(double sf2, double l) {
    KernelParams p;
    p.log_signal_variance = std::log(sf2);
    p.log_lengthscale = std::log(l);
    return p;
}

double max_rel(const Tensor& a, const Tensor& b) {
    double worst = 0.0;
    for (i64 i = 0; i < a.size(); ++i) {
        const double d = std::abs(a.at(i) - b.at(i));
        const double s = std::max(std::abs(a.at(i)), std::abs(b.at(i)));
        worst = std::max(worst, d / std::max(s, 1e-300));
    }
    return worst;
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("squared exponential basics") {
    KernelParams p = params(2.5, 0.7);
    CHECK(k_se(0.3, 0.3, p) == doctest::Approx(2.5));
    CHECK(k_se(0.1, 0.9, p) == doctest::Approx(k_se(0.9, 0.1, p)));
    CHECK(k_se(0.0, 1.0, p) == doctest::Approx(2.5 * std::exp(-0.5 / 0.49)));
    CHECK(k_se(0.0, 10.0, p) < 1e-30);
    CHECK(k_se(0.0, 0.5, p) > k_se(0.0, 1.5, p));
}

TEST_CASE("gram matrix is symmetric with positive spectrum under jitter") {
    Rng rng(101);
    Tensor z = Tensor::zeros({12});
    for (i64 i = 0; i < 12; ++i) z.mutable_data()[i] = rng.uniform(-2.0, 2.0);
    KernelParams p = params(1.3, 0.8);
    Tensor K = gram(z, p);
    for (i64 i = 0; i < 12; ++i) {
        CHECK(K.at(i * 12 + i) == doctest::Approx(1.3));
        for (i64 j = 0; j < 12; ++j) CHECK(K.at(i * 12 + j) == K.at(j * 12 + i));
    }
    std::vector<double> A(K.data(), K.data() + K.size());
    for (i64 i = 0; i < 12; ++i) A[static_cast<size_t>(i * 12 + i)] += 1e-6 * 1.3;
    std::vector<double> vals, vecs;
    detail::jacobi_eigensymm(A, 12, vals, vecs);
    for (double v : vals) CHECK(v > 0.0);
}

TEST_CASE("gauss-hermite rule integrates gaussian moments") {
    const GaussHermiteRule& r = gauss_hermite(20);
    REQUIRE(r.nodes.size() == 20);
    double wsum = 0.0;
    for (double w : r.weights) wsum += w;
    CHECK(wsum == doctest::Approx(std::sqrt(M_PI)).epsilon(1e-12));
    for (size_t i = 0; i < 10; ++i) CHECK(r.nodes[i] == doctest::Approx(-r.nodes[19 - i]).epsilon(1e-10));
    for (size_t i = 1; i < 20; ++i) CHECK(r.nodes[i] > r.nodes[i - 1]);

    const double mu = 0.7, var = 1.9;
    CHECK(gauss_hermite_expect([](double) { return 1.0; }, mu, var, 20) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(gauss_hermite_expect([](double x) { return x; }, mu, var, 20) == doctest::Approx(mu).epsilon(1e-12));
    CHECK(gauss_hermite_expect([](double x) { return x * x; }, mu, var, 20) ==
          doctest::Approx(mu * mu + var).epsilon(1e-12));
    // E[(x-mu)^4] = 3 var^2, E[(x-mu)^6] = 15 var^3
    CHECK(gauss_hermite_expect([&](double x) { return std::pow(x - mu, 4); }, mu, var, 20) ==
          doctest::Approx(3 * var * var).epsilon(1e-11));
    CHECK(gauss_hermite_expect([&](double x) { return std::pow(x - mu, 6); }, mu, var, 20) ==
          doctest::Approx(15 * var * var * var).epsilon(1e-11));
    // degree 2H-1 polynomial is integrated exactly
    CHECK(gauss_hermite_expect([](double x) { return std::pow(x, 7) - 3 * std::pow(x, 5); }, 0.0, 0.5, 4) ==
          doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("psi1 matches quadrature and collapses at zero variance") {
    Rng rng(202);
    for (int trial = 0; trial < 100; ++trial) {
        const double sf2 = rng.uniform(0.4, 2.5);
        const double l = rng.uniform(0.6, 1.5);
        const double mu = rng.uniform(-2.0, 2.0);
        // keep var <= l^2 so the H=40 rule fully resolves the integrand
        const double var = rng.uniform(0.0, 0.8) * l * l;
        KernelParams p = params(sf2, l);
        Tensor z = Tensor::zeros({8});
        for (i64 i = 0; i < 8; ++i) z.mutable_data()[i] = rng.uniform(-2.5, 2.5);

        Tensor closed = psi1(mu, var, z, p);
        Tensor quad = psi1_quadrature(mu, var, z, p, 40);
        CHECK(max_rel(closed, quad) < 1e-7);
        for (i64 i = 0; i < 8; ++i) CHECK(closed.at(i) <= sf2 * (1 + 1e-12));
    }

    KernelParams p = params(1.7, 0.9);
    Tensor z = Tensor::from_data({3}, {-1.0, 0.2, 1.4});
    Tensor at0 = psi1(0.3, 0.0, z, p);
    for (i64 i = 0; i < 3; ++i) CHECK(at0.at(i) == doctest::Approx(k_se(0.3, z.at(i), p)).epsilon(1e-14));
}

TEST_CASE("psi2 matches quadrature, is symmetric PSD, collapses at zero variance") {
    Rng rng(303);
    for (int trial = 0; trial < 100; ++trial) {
        const double sf2 = rng.uniform(0.4, 2.5);
        const double l = rng.uniform(0.6, 1.5);
        const double mu = rng.uniform(-2.0, 2.0);
        const double var = rng.uniform(0.0, 0.8) * l * l;
        KernelParams p = params(sf2, l);
        Tensor z = Tensor::zeros({6});
        for (i64 i = 0; i < 6; ++i) z.mutable_data()[i] = rng.uniform(-2.5, 2.5);

        Tensor closed = psi2(mu, var, z, p);
        Tensor quad = psi2_quadrature(mu, var, z, p, 40);
        CHECK(max_rel(closed, quad) < 1e-7);

        for (i64 i = 0; i < 6; ++i)
            for (i64 j = 0; j < 6; ++j) CHECK(closed.at(i * 6 + j) == closed.at(j * 6 + i));
        std::vector<double> A(closed.data(), closed.data() + closed.size());
        std::vector<double> vals, vecs;
        detail::jacobi_eigensymm(A, 6, vals, vecs);
        for (double v : vals) CHECK(v > -1e-10 * sf2 * sf2);
    }

    KernelParams p = params(0.8, 1.1);
    Tensor z = Tensor::from_data({3}, {-0.7, 0.0, 0.9});
    Tensor at0 = psi2(0.4, 0.0, z, p);
    for (i64 i = 0; i < 3; ++i)
        for (i64 j = 0; j < 3; ++j)
            CHECK(at0.at(i * 3 + j) ==
                  doctest::Approx(k_se(0.4, z.at(i), p) * k_se(0.4, z.at(j), p)).epsilon(1e-13));
}

TEST_CASE("psi1 smooths with growing input variance") {
    // larger input variance means a wider effective lengthscale: values decay
    // more slowly in |z - mu| but the peak shrinks
    KernelParams p = params(1.0, 0.5);
    Tensor z = Tensor::from_data({2}, {0.0, 3.0});
    Tensor tight = psi1(0.0, 0.0, z, p);
    Tensor wide = psi1(0.0, 2.0, z, p);
    CHECK(wide.at(0) < tight.at(0));
    CHECK(wide.at(1) > tight.at(1));
}

TEST_CASE("negative variance is rejected") {
    KernelParams p = params(1.0, 1.0);
    Tensor z = Tensor::from_data({2}, {0.0, 1.0});
    CHECK_THROWS_AS(psi1(0.0, -0.1, z, p), std::domain_error);
    CHECK_THROWS_AS(psi2(0.0, -1e-9, z, p), std::domain_error);
    CHECK_THROWS_AS(gauss_hermite_expect([](double x) { return x; }, 0.0, -1.0, 10), std::domain_error);
}

TEST_CASE("quadrature fallback at H=20 stays close to closed form") {
    KernelParams p = params(1.2, 0.9);
    Tensor z = Tensor::from_data({5}, {-1.5, -0.5, 0.0, 0.8, 1.7});
    Tensor c1 = psi1(0.4, 0.3, z, p);
    Tensor q1 = psi1_quadrature(0.4, 0.3, z, p, 20);
    CHECK(max_rel(c1, q1) < 1e-9);
    Tensor c2 = psi2(0.4, 0.3, z, p);
    Tensor q2 = psi2_quadrature(0.4, 0.3, z, p, 20);
    CHECK(max_rel(c2, q2) < 1e-8);
}

TEST_CASE("counter rng is reproducible and splits decorrelate") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng base(42);
    Rng s1 = base.split(1), s2 = base.split(2);
    CHECK(s1.seed() != s2.seed());
    // frozen first draw: same seed must give the same stream forever
    Rng frozen(42);
    CHECK(frozen.next_u64() == 13679457532755275413ULL);

    Rng n(7);
    double m1 = 0, m2 = 0;
    const int N = 200000;
    for (int i = 0; i < N; ++i) {
        const double x = n.normal();
        m1 += x;
        m2 += x * x;
    }
    m1 /= N;
    m2 /= N;
    CHECK(std::abs(m1) < 0.01);
    CHECK(std::abs(m2 - 1.0) < 0.02);
}

}  // TEST_SUITE
