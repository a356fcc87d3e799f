#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>

#include <doctest.h>

#include "helpers.hpp"
#include "svgpkan/metrics.hpp"

using namespace svgpkan;
using testutil::rel_err;

namespace {

// Threshold-sweep ROC curve integrated with the trapezoid rule. Independent
// of the rank formulation under test; ties produce diagonal segments whose
// trapezoids equal the half-credit correction.
double trapezoid_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
    std::vector<double> thr;
    thr.insert(thr.end(), pos.begin(), pos.end());
    thr.insert(thr.end(), neg.begin(), neg.end());
    std::sort(thr.begin(), thr.end(), std::greater<double>());
    thr.erase(std::unique(thr.begin(), thr.end()), thr.end());

    double auc = 0.0, px = 0.0, py = 0.0;
    for (double t : thr) {
        double tp = 0.0, fp = 0.0;
        for (double s : pos)
            if (s >= t) ++tp;
        for (double s : neg)
            if (s >= t) ++fp;
        const double x = fp / static_cast<double>(neg.size());
        const double y = tp / static_cast<double>(pos.size());
        auc += (x - px) * (y + py) / 2.0;
        px = x;
        py = y;
    }
    auc += (1.0 - px) * (1.0 + py) / 2.0;
    return auc;
}

std::filesystem::path tmp_dir() {
    auto p = std::filesystem::temp_directory_path() / "svgpkan_metrics_test";
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("pearson endpoints and brute force oracle") {
    std::mt19937 mt(5);
    std::vector<double> a(1000), b(1000);
    for (size_t i = 0; i < a.size(); ++i) {
        a[i] = std::uniform_real_distribution<double>(-2.0, 2.0)(mt);
        b[i] = 0.3 * a[i] + std::uniform_real_distribution<double>(-1.0, 1.0)(mt);
    }
    CHECK(pearson(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    std::vector<double> na(a);
    for (double& x : na) x = -x;
    CHECK(pearson(a, na) == doctest::Approx(-1.0).epsilon(1e-12));

    // brute force: E[ab] - E[a]E[b] over sqrt of the same for squares
    const double n = static_cast<double>(a.size());
    double sa = 0.0, sb = 0.0, sab = 0.0, saa = 0.0, sbb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        sa += a[i];
        sb += b[i];
        sab += a[i] * b[i];
        saa += a[i] * a[i];
        sbb += b[i] * b[i];
    }
    const double want = (sab / n - sa / n * sb / n) /
                        std::sqrt((saa / n - sa / n * sa / n) * (sbb / n - sb / n * sb / n));
    CHECK(std::abs(pearson(a, b) - want) < 1e-12);
}

TEST_CASE("pearson is invariant under positive affine maps") {
    std::mt19937 mt(6);
    std::vector<double> a = {0.1, -0.4, 2.0, 1.3, -0.7, 0.0, 5.5};
    std::vector<double> b = {1.0, 0.2, -0.3, 2.2, 0.4, 1.1, -2.0};
    const double base = pearson(a, b);
    std::vector<double> a2(a);
    for (double& x : a2) x = 2.5 * x + 3.0;
    std::vector<double> b2(b);
    for (double& x : b2) x = 0.1 * x - 7.0;
    CHECK(std::abs(pearson(a2, b) - base) < 1e-12);
    CHECK(std::abs(pearson(a, b2) - base) < 1e-12);
    CHECK(std::abs(pearson(a2, b2) - base) < 1e-12);
}

TEST_CASE("pearson rejects degenerate input") {
    CHECK_THROWS_AS(pearson({1.0}, {2.0}), std::invalid_argument);
    CHECK_THROWS_AS(pearson({1.0, 2.0}, {2.0}), std::invalid_argument);
    CHECK_THROWS_AS(pearson({1.0, 1.0}, {2.0, 3.0}), std::invalid_argument);
}

TEST_CASE("coverage matches gaussian quantiles and a direct count") {
    std::mt19937_64 mt(17);
    std::normal_distribution<double> nd(0.0, 1.0);
    const size_t n = 1'000'000;
    std::vector<double> y(n), mu(n, 0.0), sigma(n);
    for (size_t i = 0; i < n; ++i) {
        const double s = 0.5 + 1.5 * std::uniform_real_distribution<double>(0.0, 1.0)(mt);
        sigma[i] = s;
        y[i] = s * nd(mt);
    }
    CHECK(std::abs(coverage(y, mu, sigma, 1.0) - 68.27) < 0.5);
    CHECK(std::abs(coverage(y, mu, sigma, 2.0) - 95.45) < 0.5);
    CHECK(std::abs(coverage(y, mu, sigma, 3.0) - 99.73) < 0.5);

    SUBCASE("monotone in k") {
        const double c1 = coverage(y, mu, sigma, 1.0);
        const double c2 = coverage(y, mu, sigma, 2.0);
        const double c3 = coverage(y, mu, sigma, 3.0);
        CHECK(c1 <= c2);
        CHECK(c2 <= c3);
    }

    SUBCASE("huge sigma covers everything") {
        std::vector<double> wide(n, 1e12);
        CHECK(coverage(y, mu, wide, 1.0) == 100.0);
    }

    SUBCASE("direct count on a hand case") {
        // |y - mu| = 1, 2, 3, 4 against sigma = 2: k=1 covers the first two
        std::vector<double> yy = {1.0, -2.0, 3.0, 4.0};
        std::vector<double> mm = {0.0, 0.0, 0.0, 0.0};
        std::vector<double> ss = {2.0, 2.0, 2.0, 2.0};
        CHECK(coverage(yy, mm, ss, 1.0) == 50.0);
        CHECK(coverage(yy, mm, ss, 1.5) == 75.0);
        CHECK(coverage(yy, mm, ss, 2.0) == 100.0);
    }
}

TEST_CASE("standardized errors: calibration, sign convention, hand oracle") {
    std::mt19937_64 mt(23);
    std::normal_distribution<double> nd(0.0, 1.0);
    const size_t n = 200'000;
    std::vector<double> y(n), mu(n), sigma(n);
    for (size_t i = 0; i < n; ++i) {
        mu[i] = std::uniform_real_distribution<double>(-1.0, 1.0)(mt);
        sigma[i] = 0.5 + std::uniform_real_distribution<double>(0.0, 1.0)(mt);
        y[i] = mu[i] + sigma[i] * nd(mt);
    }
    MomentPair p = standardized_errors(y, mu, sigma);
    CHECK(std::abs(p.mean) < 0.01);
    CHECK(std::abs(p.sd - 1.0) < 0.01);

    SUBCASE("constant bias appears with positive sign") {
        // y sits 0.8 above every predicted mean at sigma 1
        std::vector<double> yb(100), mb(100), sb(100, 1.0);
        for (size_t i = 0; i < 100; ++i) {
            mb[i] = static_cast<double>(i) * 0.01;
            yb[i] = mb[i] + 0.8;
        }
        MomentPair q = standardized_errors(yb, mb, sb);
        CHECK(q.mean == doctest::Approx(0.8).epsilon(1e-12));
        CHECK(q.sd == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    }

    SUBCASE("five sample hand computation") {
        std::vector<double> yy = {1.0, 2.0, 0.0, -1.0, 3.0};
        std::vector<double> mm = {0.5, 2.5, 0.0, -2.0, 1.0};
        std::vector<double> ss = {0.5, 1.0, 2.0, 1.0, 4.0};
        // z = {1, -0.5, 0, 1, 0.5}; mean 0.4; var = (0.36+0.81+0.16+0.36+0.01)/4
        MomentPair q = standardized_errors(yy, mm, ss);
        CHECK(q.mean == doctest::Approx(0.4).epsilon(1e-12));
        CHECK(q.sd == doctest::Approx(std::sqrt(1.7 / 4.0)).epsilon(1e-12));
    }
}

TEST_CASE("calibration report composes its parts") {
    std::mt19937_64 mt(31);
    std::normal_distribution<double> nd(0.0, 1.0);
    const size_t n = 50'000;
    std::vector<double> y(n), mu(n), sigma(n);
    double sq = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mu[i] = std::uniform_real_distribution<double>(-1.0, 1.0)(mt);
        sigma[i] = 0.5 + std::uniform_real_distribution<double>(0.0, 1.5)(mt);
        y[i] = mu[i] + sigma[i] * nd(mt);
        sq += (y[i] - mu[i]) * (y[i] - mu[i]);
    }
    CalibrationReport r = calibration_report(y, mu, sigma);
    CHECK(r.coverage1 <= r.coverage2);
    CHECK(r.coverage2 <= r.coverage3);
    CHECK(std::abs(r.coverage2 - 95.45) < 0.75);
    // calibrated noise of varying scale: sigma and |error| correlate
    CHECK(r.pearson_sigma_abs_err > 0.3);
    CHECK(std::abs(r.std_mean) < 0.02);
    CHECK(std::abs(r.std_sd - 1.0) < 0.02);
    CHECK(rel_err(r.rmse, std::sqrt(sq / static_cast<double>(n))) < 1e-12);
    KvList kv = r.kv();
    CHECK(kv.size() == 7);
    CHECK(kv[0].first == "pearson_sigma_abs_err");
}

TEST_CASE("roc auc endpoints") {
    CHECK(roc_auc({10.0, 11.0, 12.0}, {1.0, 2.0, 3.0}) == 1.0);
    CHECK(roc_auc({1.0, 2.0, 3.0}, {10.0, 11.0, 12.0}) == 0.0);
    // identical score multisets: every comparison is a tie -> exactly 0.5
    CHECK(roc_auc({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}) == 0.5);
}

TEST_CASE("roc auc matches trapezoidal roc integration") {
    std::mt19937 mt(41);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> pos, neg;
        const int np = 5 + static_cast<int>(mt() % 60);
        const int nn = 5 + static_cast<int>(mt() % 60);
        // integer grid scores force plenty of ties
        for (int i = 0; i < np; ++i)
            pos.push_back(static_cast<double>(mt() % 12) + (rep % 2 ? 0.5 : 0.0));
        for (int i = 0; i < nn; ++i) neg.push_back(static_cast<double>(mt() % 12));
        CHECK(std::abs(roc_auc(pos, neg) - trapezoid_auc(pos, neg)) < 1e-10);
    }
}

TEST_CASE("roc auc is invariant under strictly monotone transforms") {
    std::mt19937 mt(43);
    std::vector<double> pos, neg;
    for (int i = 0; i < 40; ++i) pos.push_back(std::uniform_real_distribution<double>(0.0, 3.0)(mt));
    for (int i = 0; i < 55; ++i) neg.push_back(std::uniform_real_distribution<double>(-1.0, 2.0)(mt));
    const double base = roc_auc(pos, neg);
    auto apply = [](std::vector<double> v, auto f) {
        for (double& x : v) x = f(x);
        return v;
    };
    auto expf = [](double x) { return std::exp(x); };
    auto affine = [](double x) { return 3.0 * x + 11.0; };
    CHECK(roc_auc(apply(pos, expf), apply(neg, expf)) == doctest::Approx(base).epsilon(1e-14));
    CHECK(roc_auc(apply(pos, affine), apply(neg, affine)) == doctest::Approx(base).epsilon(1e-14));
}

TEST_CASE("identity model keeps ensemble spread flat") {
    Field2D T = study_b_initial(16, 16);
    Rng rng(4);
    SpreadReport r = ensemble_rollout_spread([](const Field2D& f) { return f; }, T, 10, 0.01, 14, rng);
    REQUIRE(r.mean_std_per_step.size() == 15);
    CHECK(r.growth_factor == 1.0);
    for (double s : r.mean_std_per_step) CHECK(s == r.mean_std_per_step[0]);
    CHECK(r.mean_std_per_step[0] > 0.0);
}

TEST_CASE("doubling model grows spread by two to the fourteenth") {
    Field2D T(16, 16, 0.0, 1.0, 0.0, 1.0, true);  // zero field: perturbation is absolute
    Rng rng(8);
    SpreadReport r = ensemble_rollout_spread(
        [](const Field2D& f) {
            Field2D g = f;
            for (double& x : g.v) x *= 2.0;
            return g;
        },
        T, 10, 1e-5, 14, rng);
    CHECK(r.growth_factor == doctest::Approx(16384.0).epsilon(1e-12));
}

TEST_CASE("member states clip to the stability box") {
    Field2D T(8, 8, 0.0, 1.0, 0.0, 1.0, true);
    Rng rng(9);
    SpreadReport r = ensemble_rollout_spread(
        [](const Field2D& f) {
            Field2D g = f;
            for (double& x : g.v) x += 10.0;
            return g;
        },
        T, 4, 1e-3, 2, rng);
    // everything saturates at +2, so the ensemble collapses
    CHECK(r.mean_std_per_step[1] == 0.0);
    CHECK(r.mean_std_per_step[2] == 0.0);
}

TEST_CASE("nan members abort with member and step") {
    Field2D T = study_b_initial(8, 8);
    Rng rng(10);
    auto calls = std::make_shared<int>(0);
    const i64 n_ens = 2;
    auto model = [calls, n_ens](const Field2D& f) {
        ++*calls;
        Field2D g = f;
        if (*calls > 2 * n_ens) g.v[5] = std::numeric_limits<double>::quiet_NaN();
        return g;
    };
    try {
        ensemble_rollout_spread(model, T, n_ens, 0.01, 5, rng);
        FAIL("expected SpreadError");
    } catch (const SpreadError& e) {
        CHECK(e.member == 0);
        CHECK(e.step == 3);
    }
}

TEST_CASE("ensemble spread is bitwise reproducible under the seed") {
    Field2D T = study_b_initial(12, 12);
    auto model = [](const Field2D& f) {
        Field2D g = f;
        for (size_t i = 0; i < g.v.size(); ++i) g.v[i] = 0.9 * g.v[i] + 0.01 * std::sin(g.v[i]);
        return g;
    };
    Rng r1(123), r2(123);
    SpreadReport a = ensemble_rollout_spread(model, T, 6, 0.01, 8, r1);
    SpreadReport b = ensemble_rollout_spread(model, T, 6, 0.01, 8, r2);
    CHECK(a.mean_std_per_step == b.mean_std_per_step);
    CHECK(a.final_std.v == b.final_std.v);
    CHECK(a.growth_factor == b.growth_factor);
    CHECK(a.spatial_ratio == b.spatial_ratio);
    CHECK(a.spatial_ratio_raw >= a.spatial_ratio);

    CHECK_THROWS_AS(ensemble_rollout_spread(model, T, 1, 0.01, 3, r1), std::invalid_argument);
}

TEST_CASE("anomaly scores on hand picked groups") {
    SUBCASE("identical groups are indistinguishable") {
        AnomalyReport r = anomaly_scores({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0},
                                         {0.5, 0.5, 0.5}, {0.5, 0.5, 0.5});
        CHECK(r.uncertainty_ratio == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(r.auc == 0.5);
        CHECK(r.recon_mse_ratio == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(r.tail_fraction == 0.0);
    }
    SUBCASE("planted tenfold separation") {
        AnomalyReport r = anomaly_scores({1.0, 2.0}, {10.0, 20.0}, {1.0, 2.0}, {10.0, 20.0});
        CHECK(r.uncertainty_ratio == doctest::Approx(10.0).epsilon(1e-12));
        CHECK(r.auc == 1.0);
        CHECK(r.recon_mse_ratio == doctest::Approx(10.0).epsilon(1e-12));
        CHECK(r.tail_fraction == 1.0);
        KvList kv = r.kv();
        CHECK(kv.size() == 4);
    }
}

TEST_CASE("key value files round trip doubles exactly") {
    auto dir = tmp_dir();
    const std::string p = (dir / "summary.txt").string();
    const double tricky = 1.0 / 3.0;
    write_kv(p, {{"alpha", fmt_g17(tricky)}, {"count", "42"}});
    std::ifstream in(p);
    std::string l1, l2;
    std::getline(in, l1);
    std::getline(in, l2);
    CHECK(l2 == "count=42");
    REQUIRE(l1.rfind("alpha=", 0) == 0);
    CHECK(std::strtod(l1.c_str() + 6, nullptr) == tricky);
}

}  // TEST_SUITE
