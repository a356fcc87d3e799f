#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "svgpkan/datagen.hpp"
#include "svgpkan/rng.hpp"

namespace svgpkan {

using KvList = std::vector<std::pair<std::string, std::string>>;

// Sample Pearson correlation. Requires equal lengths >= 2 and nonzero
// variance on both sides.
double pearson(const std::vector<double>& a, const std::vector<double>& b);

// Percentage of |y - mu| <= k * sigma.
double coverage(const std::vector<double>& y, const std::vector<double>& mu,
                const std::vector<double>& sigma, double k);

struct MomentPair {
    double mean;
    double sd;
};

// Moments of the standardized residuals (y - mu) / sigma. Sign convention:
// y above the mean gives positive residuals.
MomentPair standardized_errors(const std::vector<double>& y, const std::vector<double>& mu,
                               const std::vector<double>& sigma);

struct CalibrationReport {
    double pearson_sigma_abs_err;
    double coverage1, coverage2, coverage3;  // percentages at 1/2/3 sigma
    double std_mean, std_sd;
    double rmse;
    KvList kv() const;
};

CalibrationReport calibration_report(const std::vector<double>& y,
                                     const std::vector<double>& mu,
                                     const std::vector<double>& sigma);

// Mann-Whitney AUC: P(score+ > score-) + 0.5 P(tie), computed from pooled
// average ranks. Invariant under strictly monotone transforms of the scores.
double roc_auc(const std::vector<double>& pos, const std::vector<double>& neg);

struct SpreadError : std::runtime_error {
    i64 member, step;
    SpreadError(i64 m, i64 s, const std::string& msg)
        : std::runtime_error(msg), member(m), step(s) {}
};

struct SpreadReport {
    std::vector<double> mean_std_per_step;  // steps + 1 entries, step 0 first
    double growth_factor;                   // last entry / first entry
    double spatial_ratio;                   // p99 / p1 of final-step pixelwise std
    double spatial_ratio_raw;               // max / min, reported for transparency
    Field2D final_std;                      // pixelwise std at the last step
    // (step, pixelwise std field) for each requested snapshot step
    std::vector<std::pair<i64, Field2D>> snapshots;
    KvList kv() const;
};

using StepFn = std::function<Field2D(const Field2D&)>;

// Propagates n_ens perturbed copies of T0 through the one-step model,
// clipping member states to [-2, 2] after every step. Initial noise is white
// N(0, (perturbation * rms(T0))^2) per pixel, absolute when rms(T0) = 0.
// Pixelwise std uses the n-1 normalization. NaN in any member aborts with
// (member, step). snapshot_steps requests std-field captures for figures.
SpreadReport ensemble_rollout_spread(const StepFn& model, const Field2D& T0, i64 n_ens,
                                     double perturbation, i64 steps, Rng& rng,
                                     const std::vector<i64>& snapshot_steps = {});

struct AnomalyReport {
    double uncertainty_ratio;  // mean anomalous / mean normal uncertainty
    double auc;                // roc_auc over the uncertainty scores
    double recon_mse_ratio;    // mean anomalous / mean normal reconstruction mse
    double tail_fraction;      // anomalies whose uncertainty exceeds the normal max
    KvList kv() const;
};

// Aggregates per-sample scores; the model evaluation that produces them lives
// with the experiment runners.
AnomalyReport anomaly_scores(const std::vector<double>& unc_normal,
                             const std::vector<double>& unc_anomalous,
                             const std::vector<double>& mse_normal,
                             const std::vector<double>& mse_anomalous);

// One "key=value" line per pair.
void write_kv(const std::string& path, const KvList& kv);

// Shortest round-trip decimal for doubles (%.17g).
std::string fmt_g17(double v);

}  // namespace svgpkan
