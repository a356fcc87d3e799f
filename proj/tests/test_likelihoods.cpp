#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <doctest.h>

#include "helpers.hpp"
#include "svgpkan/likelihoods.hpp"
#include "svgpkan/tape.hpp"

using namespace svgpkan;
using testutil::randt;
using testutil::rel_err;

namespace {
const double kLog2Pi = std::log(2.0 * 3.14159265358979323846);
}

TEST_SUITE("likelihoods") {

TEST_CASE("gaussian nll matches the explicit density") {
    std::mt19937 rng(11);
    Tensor y = randt({5, 3}, rng, -2.0, 2.0);
    Tensor mean = randt({5, 3}, rng, -2.0, 2.0);
    Tensor var = randt({5, 3}, rng, 0.1, 1.5);
    Tensor noise = Tensor::scalar(0.04);

    Tensor nll = gaussian_nll(y, mean, var, noise);
    REQUIRE(nll.shape() == Shape{5, 3});
    for (i64 i = 0; i < nll.size(); ++i) {
        const double v = var.at(i) + 0.04;
        const double r = y.at(i) - mean.at(i);
        const double want = 0.5 * std::log(2.0 * M_PI * v) + r * r / (2.0 * v);
        CHECK(rel_err(nll.at(i), want) < 1e-12);
    }

    SUBCASE("noise broadcasts per column") {
        Tensor noise_row = randt({1, 3}, rng, 0.01, 0.2);
        Tensor n2 = gaussian_nll(y, mean, var, noise_row);
        for (i64 r = 0; r < 5; ++r)
            for (i64 c = 0; c < 3; ++c) {
                const i64 i = r * 3 + c;
                const double v = var.at(i) + noise_row.at(c);
                const double d = y.at(i) - mean.at(i);
                const double want = 0.5 * std::log(2.0 * M_PI * v) + d * d / (2.0 * v);
                CHECK(rel_err(n2.at(i), want) < 1e-12);
            }
    }
}

TEST_CASE("heteroscedastic expected nll matches a monte carlo average") {
    // Sample f ~ N(mean_f, var_f), g ~ N(mean_g, var_g) and average the plain
    // Gaussian nll of y under N(f, exp(g)). The closed form claims to be that
    // expectation exactly.
    struct Case {
        double y, mf, vf, mg, vg;
    };
    const std::vector<Case> cases = {
        {0.3, -0.2, 0.40, -1.0, 0.30},
        {-1.1, 0.8, 0.15, 0.4, 0.05},
        {0.0, 0.0, 0.90, -1.5, 0.50},
        {1.7, 1.2, 0.25, -0.3, 0.12},
        {-0.4, -0.9, 0.60, 0.1, 0.40},
    };
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> nd(0.0, 1.0);
    const int n = 1'000'000;
    for (const Case& c : cases) {
        CAPTURE(c.y);
        double acc = 0.0;
        const double sf = std::sqrt(c.vf);
        const double sg = std::sqrt(c.vg);
        for (int i = 0; i < n; ++i) {
            const double f = c.mf + sf * nd(rng);
            const double g = c.mg + sg * nd(rng);
            const double r = c.y - f;
            acc += 0.5 * (kLog2Pi + g) + 0.5 * r * r * std::exp(-g);
        }
        const double mc = acc / n;
        Tensor got = hetero_expected_nll(Tensor::scalar(c.y), Tensor::scalar(c.mf),
                                         Tensor::scalar(c.vf), Tensor::scalar(c.mg),
                                         Tensor::scalar(c.vg));
        CHECK(rel_err(got.item(), mc) < 5e-3);
    }
}

TEST_CASE("vanishing log noise variance recovers the fixed noise limit") {
    // At var_g = 0 only the f average remains:
    //   0.5 log 2pi + 0.5 mean_g + 0.5 ((y - mean_f)^2 + var_f) exp(-mean_g)
    std::mt19937 rng(7);
    Tensor y = randt({10}, rng, -2.0, 2.0);
    Tensor mf = randt({10}, rng, -2.0, 2.0);
    Tensor vf = randt({10}, rng, 0.05, 1.0);
    Tensor mg = randt({10}, rng, -1.5, 0.5);
    Tensor got = hetero_expected_nll(y, mf, vf, mg, Tensor::full({10}, 1e-12));
    for (i64 i = 0; i < 10; ++i) {
        const double spread = (y.at(i) - mf.at(i)) * (y.at(i) - mf.at(i)) + vf.at(i);
        const double want = 0.5 * (kLog2Pi + mg.at(i)) + 0.5 * spread * std::exp(-mg.at(i));
        CHECK(std::abs(got.at(i) - want) < 1e-8);
    }
}

TEST_CASE("negative elbo is an unbiased full batch estimate over half batches") {
    const i64 n_total = 64;
    std::mt19937 rng(99);
    Tensor nll = randt({n_total}, rng, 0.5, 1.5);
    Tensor kl = Tensor::scalar(3.7);
    const double w = 0.01;

    const double full = negative_elbo(nll, n_total, n_total, kl, w).item();
    CHECK(rel_err(full, sum(nll).item() + w * 3.7) < 1e-12);

    std::vector<i64> idx(n_total);
    std::iota(idx.begin(), idx.end(), 0);
    double acc = 0.0;
    const int reps = 200;
    for (int r = 0; r < reps; ++r) {
        std::shuffle(idx.begin(), idx.end(), rng);
        std::vector<double> half(32);
        for (int i = 0; i < 32; ++i) half[static_cast<size_t>(i)] = nll.at(idx[static_cast<size_t>(i)]);
        acc += negative_elbo(Tensor::from_data({32}, std::move(half)), n_total, 32, kl, w).item();
    }
    CHECK(rel_err(acc / reps, full) < 0.01);
}

TEST_CASE("mse plus kl hand oracle") {
    Tensor pred = Tensor::from_data({2, 3}, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0});
    Tensor target = Tensor::from_data({2, 3}, {1.5, 2.0, 2.0, 6.0, 5.0, 5.5});
    // squared errors: 0.25, 0, 1, 4, 0, 0.25 -> mean 5.5 / 6
    Tensor out = mse_plus_kl(pred, target, Tensor::scalar(2.0), 0.01);
    CHECK(rel_err(out.item(), 5.5 / 6.0 + 0.02) < 1e-12);
}

TEST_CASE("gradients agree with finite differences") {
    std::mt19937 rng(301);
    Tensor y = randt({6}, rng, -1.5, 1.5);

    SUBCASE("gaussian nll") {
        Param mean("mean", randt({6}, rng, -1.0, 1.0));
        Param var("var", randt({6}, rng, 0.3, 1.0));
        Param noise("noise", Tensor::scalar(0.1));
        auto loss = [&] { return sum(gaussian_nll(y, use(mean), use(var), use(noise))); };
        testutil::check_grads(loss, {&mean, &var, &noise});
    }

    SUBCASE("heteroscedastic expected nll") {
        Param mf("mf", randt({6}, rng, -1.0, 1.0));
        Param vf("vf", randt({6}, rng, 0.3, 1.0));
        Param mg("mg", randt({6}, rng, -1.0, 0.5));
        Param vg("vg", randt({6}, rng, 0.1, 0.5));
        auto loss = [&] {
            return sum(hetero_expected_nll(y, use(mf), use(vf), use(mg), use(vg)));
        };
        testutil::check_grads(loss, {&mf, &vf, &mg, &vg});
    }

    SUBCASE("negative elbo and mse plus kl") {
        Param mean("mean", randt({6}, rng, -1.0, 1.0));
        Param kl("kl", Tensor::scalar(1.3));
        auto loss = [&] {
            Tensor nll = gaussian_nll(y, use(mean), Tensor::full({6}, 0.2), Tensor::scalar(0.05));
            Tensor a = negative_elbo(nll, 100.0, 6.0, use(kl), 0.01);
            Tensor b = mse_plus_kl(use(mean), y, use(kl), 0.05);
            return add(a, b);
        };
        testutil::check_grads(loss, {&mean, &kl});
    }
}

}  // TEST_SUITE
