#include "svgpkan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace svgpkan {

namespace {

void require_same(const std::vector<double>& a, const std::vector<double>& b, const char* op) {
    if (a.size() != b.size()) throw std::invalid_argument(std::string(op) + ": length mismatch");
}

double vec_mean(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double rms(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    require_same(a, b, "pearson");
    if (a.size() < 2) throw std::invalid_argument("pearson: need at least two samples");
    const double ma = vec_mean(a), mb = vec_mean(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) throw std::invalid_argument("pearson: zero variance input");
    return sab / std::sqrt(saa * sbb);
}

double coverage(const std::vector<double>& y, const std::vector<double>& mu,
                const std::vector<double>& sigma, double k) {
    require_same(y, mu, "coverage");
    require_same(y, sigma, "coverage");
    if (y.empty()) throw std::invalid_argument("coverage: empty input");
    i64 inside = 0;
    for (size_t i = 0; i < y.size(); ++i)
        if (std::abs(y[i] - mu[i]) <= k * sigma[i]) ++inside;
    return 100.0 * static_cast<double>(inside) / static_cast<double>(y.size());
}

MomentPair standardized_errors(const std::vector<double>& y, const std::vector<double>& mu,
                               const std::vector<double>& sigma) {
    require_same(y, mu, "standardized_errors");
    require_same(y, sigma, "standardized_errors");
    if (y.size() < 2) throw std::invalid_argument("standardized_errors: need at least two samples");
    std::vector<double> z(y.size());
    for (size_t i = 0; i < y.size(); ++i) z[i] = (y[i] - mu[i]) / sigma[i];
    const double m = vec_mean(z);
    double s2 = 0.0;
    for (double v : z) s2 += (v - m) * (v - m);
    return {m, std::sqrt(s2 / static_cast<double>(z.size() - 1))};
}

CalibrationReport calibration_report(const std::vector<double>& y,
                                     const std::vector<double>& mu,
                                     const std::vector<double>& sigma) {
    std::vector<double> abs_err(y.size());
    double sq = 0.0;
    for (size_t i = 0; i < y.size(); ++i) {
        abs_err[i] = std::abs(y[i] - mu[i]);
        sq += abs_err[i] * abs_err[i];
    }
    CalibrationReport r;
    r.pearson_sigma_abs_err = pearson(sigma, abs_err);
    r.coverage1 = coverage(y, mu, sigma, 1.0);
    r.coverage2 = coverage(y, mu, sigma, 2.0);
    r.coverage3 = coverage(y, mu, sigma, 3.0);
    const MomentPair mp = standardized_errors(y, mu, sigma);
    r.std_mean = mp.mean;
    r.std_sd = mp.sd;
    r.rmse = std::sqrt(sq / static_cast<double>(y.size()));
    return r;
}

KvList CalibrationReport::kv() const {
    return {{"pearson_sigma_abs_err", fmt_g17(pearson_sigma_abs_err)},
            {"coverage_1sigma_pct", fmt_g17(coverage1)},
            {"coverage_2sigma_pct", fmt_g17(coverage2)},
            {"coverage_3sigma_pct", fmt_g17(coverage3)},
            {"standardized_mean", fmt_g17(std_mean)},
            {"standardized_std", fmt_g17(std_sd)},
            {"rmse", fmt_g17(rmse)}};
}

double roc_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
    if (pos.empty() || neg.empty()) throw std::invalid_argument("roc_auc: empty class");
    struct Tagged {
        double s;
        bool positive;
    };
    std::vector<Tagged> all;
    all.reserve(pos.size() + neg.size());
    for (double s : pos) all.push_back({s, true});
    for (double s : neg) all.push_back({s, false});
    std::sort(all.begin(), all.end(), [](const Tagged& a, const Tagged& b) { return a.s < b.s; });

    // average ranks over tie groups keep the 0.5-per-tie correction exact
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < all.size()) {
        size_t j = i;
        while (j < all.size() && all[j].s == all[i].s) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
        for (size_t t = i; t < j; ++t)
            if (all[t].positive) rank_sum_pos += avg_rank;
        i = j;
    }
    const double np = static_cast<double>(pos.size());
    const double nn = static_cast<double>(neg.size());
    const double u = rank_sum_pos - np * (np + 1.0) / 2.0;
    return u / (np * nn);
}

KvList SpreadReport::kv() const {
    KvList kv = {{"growth_factor", fmt_g17(growth_factor)},
                 {"spatial_ratio_p99_p1", fmt_g17(spatial_ratio)},
                 {"spatial_ratio_raw", fmt_g17(spatial_ratio_raw)},
                 {"steps", std::to_string(mean_std_per_step.size() - 1)}};
    for (size_t s = 0; s < mean_std_per_step.size(); ++s)
        kv.emplace_back("mean_std_step_" + std::to_string(s), fmt_g17(mean_std_per_step[s]));
    return kv;
}

SpreadReport ensemble_rollout_spread(const StepFn& model, const Field2D& T0, i64 n_ens,
                                     double perturbation, i64 steps, Rng& rng,
                                     const std::vector<i64>& snapshot_steps) {
    if (n_ens < 2) throw std::invalid_argument("ensemble_rollout_spread: need n_ens >= 2");
    const double base = rms(T0.v);
    const double sd = perturbation * (base > 0.0 ? base : 1.0);

    std::vector<Field2D> members(static_cast<size_t>(n_ens), T0);
    for (i64 m = 0; m < n_ens; ++m) {
        Rng mr = rng.split(static_cast<std::uint64_t>(m));
        for (double& x : members[static_cast<size_t>(m)].v) x += sd * mr.normal();
    }

    const size_t npix = T0.v.size();
    auto pixel_std = [&](Field2D& out) {
        for (size_t p = 0; p < npix; ++p) {
            double mean = 0.0;
            for (const Field2D& f : members) mean += f.v[p];
            mean /= static_cast<double>(n_ens);
            double s2 = 0.0;
            for (const Field2D& f : members) s2 += (f.v[p] - mean) * (f.v[p] - mean);
            out.v[p] = std::sqrt(s2 / static_cast<double>(n_ens - 1));
        }
    };

    SpreadReport rep;
    auto wants = [&](i64 s) {
        return std::find(snapshot_steps.begin(), snapshot_steps.end(), s) != snapshot_steps.end();
    };
    Field2D stdf = T0;
    pixel_std(stdf);
    rep.mean_std_per_step.push_back(vec_mean(stdf.v));
    if (wants(0)) rep.snapshots.emplace_back(0, stdf);

    for (i64 s = 1; s <= steps; ++s) {
        for (i64 m = 0; m < n_ens; ++m) {
            Field2D& f = members[static_cast<size_t>(m)];
            f = model(f);
            for (double& x : f.v) x = std::clamp(x, -2.0, 2.0);
            for (double x : f.v)
                if (!std::isfinite(x))
                    throw SpreadError(m, s,
                                      "ensemble_rollout_spread: non-finite member " +
                                          std::to_string(m) + " at step " + std::to_string(s));
        }
        pixel_std(stdf);
        rep.mean_std_per_step.push_back(vec_mean(stdf.v));
        if (wants(s)) rep.snapshots.emplace_back(s, stdf);
    }

    rep.final_std = stdf;
    rep.growth_factor = rep.mean_std_per_step.back() / rep.mean_std_per_step.front();

    std::vector<double> sorted = stdf.v;
    std::sort(sorted.begin(), sorted.end());
    auto pct = [&](double q) {
        const double idx = q * static_cast<double>(sorted.size() - 1);
        const size_t lo = static_cast<size_t>(idx);
        const size_t hi = std::min(lo + 1, sorted.size() - 1);
        const double f = idx - static_cast<double>(lo);
        return sorted[lo] * (1.0 - f) + sorted[hi] * f;
    };
    rep.spatial_ratio = pct(0.99) / pct(0.01);
    rep.spatial_ratio_raw = sorted.back() / sorted.front();
    return rep;
}

AnomalyReport anomaly_scores(const std::vector<double>& unc_normal,
                             const std::vector<double>& unc_anomalous,
                             const std::vector<double>& mse_normal,
                             const std::vector<double>& mse_anomalous) {
    if (unc_normal.empty() || unc_anomalous.empty())
        throw std::invalid_argument("anomaly_scores: empty group");
    AnomalyReport r;
    r.uncertainty_ratio = vec_mean(unc_anomalous) / vec_mean(unc_normal);
    r.auc = roc_auc(unc_anomalous, unc_normal);
    r.recon_mse_ratio = vec_mean(mse_anomalous) / vec_mean(mse_normal);
    const double normal_max = *std::max_element(unc_normal.begin(), unc_normal.end());
    i64 above = 0;
    for (double u : unc_anomalous)
        if (u > normal_max) ++above;
    r.tail_fraction = static_cast<double>(above) / static_cast<double>(unc_anomalous.size());
    return r;
}

KvList AnomalyReport::kv() const {
    return {{"uncertainty_ratio", fmt_g17(uncertainty_ratio)},
            {"roc_auc", fmt_g17(auc)},
            {"recon_mse_ratio", fmt_g17(recon_mse_ratio)},
            {"tail_fraction", fmt_g17(tail_fraction)}};
}

void write_kv(const std::string& path, const KvList& kv) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_kv: cannot write " + path);
    for (const auto& [k, v] : kv) out << k << "=" << v << "\n";
}

std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace svgpkan
