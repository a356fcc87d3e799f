#include <cmath>
#include <fstream>

#include "run_common.hpp"
#include "svgpkan/cli.hpp"
#include "svgpkan/likelihoods.hpp"
#include "svgpkan/nn.hpp"
#include "svgpkan/ops.hpp"

namespace svgpkan {

namespace {

constexpr i64 kGrid = 64;        // evaluation grid, one side
constexpr i64 kEvalChunk = 512;  // limits the Psi2 working set during eval

Tensor coords_tensor(const ObservationBatch& ob, i64 lo, i64 n) {
    std::vector<double> d(static_cast<size_t>(n) * 2);
    for (i64 k = 0; k < n; ++k) {
        d[2 * k] = ob.x[lo + k];
        d[2 * k + 1] = ob.y[lo + k];
    }
    return Tensor::from_data({n, 2}, std::move(d));
}

Tensor targets_tensor(const ObservationBatch& ob, i64 lo, i64 n) {
    std::vector<double> d(static_cast<size_t>(n) * 2);
    for (i64 k = 0; k < n; ++k) {
        d[2 * k] = ob.vx[lo + k];
        d[2 * k + 1] = ob.vy[lo + k];
    }
    return Tensor::from_data({n, 2}, std::move(d));
}

struct EvalChunk {
    Tensor mean_f, var_f;  // n x 2
    Tensor mean_g, var_g;  // n x 1
};

EvalChunk eval_points(StudyANet& net, const Tensor& x) {
    NetTrace f = net.mean_net.forward(x, ForwardMode::MomentMatched);
    NetTrace g = net.noise_net.forward(x, ForwardMode::MomentMatched);
    return {f.out.mean, f.out.var, g.out.mean, g.out.var};
}

}  // namespace

CalibrationReport run_study_a(const RunConfig& cfg_in) {
    RunConfig cfg = cfg_in;
    cfg.study = "study-a";
    apply_study_defaults(cfg);
    if (!cfg.seed_set) throw std::invalid_argument("study-a: seed is required");
    runio::prepare_out_dir(cfg);

    Rng root(cfg.seed);
    Rng data_rng = root.split(1);
    Rng eval_rng = root.split(2);

    const FlowField flow = stream_function_flow(study_a_modes(), 1.0, kGrid, kGrid);
    const Field2D noise = study_a_noise_field(kGrid, kGrid);

    StudyANet net = build_study_a_net(cfg.m);
    std::vector<Param*> params = net.mean_net.params();
    const size_t mean_count = params.size();
    for (Param* p : net.noise_net.params()) params.push_back(p);
    AdamConfig ocfg;
    ocfg.lr = cfg.lr;
    Adam opt(params, ocfg);

    // While the mean network is unfit the residuals would teach the noise GP
    // "everything is noise"; its exp() link then amplifies small variational
    // drift into overflow. So the noise head sits out the warmup epochs.
    std::vector<bool> noise_frozen(params.size(), false);
    for (size_t i = mean_count; i < params.size(); ++i) noise_frozen[i] = true;

    runio::LossCsv loss_csv(cfg.out_dir + "/loss.csv");
    for (i64 epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        i64 applied = 0;
        for (i64 s = 0; s < cfg.steps_per_epoch; ++s) {
            ObservationBatch ob = sample_noisy_observations(flow, noise, data_rng, cfg.batch);
            Tensor x = coords_tensor(ob, 0, ob.size());
            Tensor y = targets_tensor(ob, 0, ob.size());

            Tape tape;
            TapeScope scope(tape);
            NetTrace f = net.mean_net.forward(x, ForwardMode::MomentMatched);
            NetTrace g = net.noise_net.forward(x, ForwardMode::MomentMatched);
            Tensor nll = hetero_expected_nll(y, f.out.mean, f.out.var, g.out.mean, g.out.var);
            Tensor kl = add(net.mean_net.kl(), net.noise_net.kl());
            Tensor loss = negative_elbo(nll, static_cast<double>(cfg.nominal_n),
                                        static_cast<double>(ob.size()), kl, cfg.kl_weight);
            double lv = loss.item();
            if (!std::isfinite(lv)) continue;  // skip the update, keep sampling
            tape.backward(loss);
            const std::vector<bool>* frozen = epoch < cfg.noise_warmup ? &noise_frozen : nullptr;
            if (runio::step_adam(opt, tape, cfg.grad_clip, frozen)) {
                epoch_loss += lv;
                ++applied;
            }
        }
        if (applied == 0) throw TrainError(epoch, "study-a: every step in the epoch was non-finite");
        if (epoch == 0) net.mean_net.freeze_standardize();
        loss_csv.row(epoch, epoch_loss / static_cast<double>(applied));
    }

    // Held-out evaluation: cfg.eval_fields fresh noisy realizations of the
    // whole grid; both velocity components pool into one calibration set.
    std::vector<double> ys, mus, sigmas;
    ys.reserve(static_cast<size_t>(cfg.eval_fields) * kGrid * kGrid * 2);
    mus.reserve(ys.capacity());
    sigmas.reserve(ys.capacity());

    Field2D pred_vx(kGrid, kGrid, 0.0, 1.0, 0.0, 1.0, false);
    Field2D sigma_vx = pred_vx;
    Field2D abs_err_vx = pred_vx;

    for (i64 r = 0; r < cfg.eval_fields; ++r) {
        ObservationBatch ob = noisy_field_realization(flow, noise, eval_rng);
        for (i64 lo = 0; lo < ob.size(); lo += kEvalChunk) {
            i64 n = std::min<i64>(kEvalChunk, ob.size() - lo);
            EvalChunk ec = eval_points(net, coords_tensor(ob, lo, n));
            for (i64 k = 0; k < n; ++k) {
                double mg = ec.mean_g.at(k);
                double vg = ec.var_g.at(k);
                double noise_mean = std::exp(mg + 0.5 * vg);  // lognormal mean of exp(g)
                for (int c = 0; c < 2; ++c) {
                    double yv = c == 0 ? ob.vx[lo + k] : ob.vy[lo + k];
                    double mu = ec.mean_f.at(2 * k + c);
                    double s2 = ec.var_f.at(2 * k + c) + noise_mean;
                    ys.push_back(yv);
                    mus.push_back(mu);
                    sigmas.push_back(std::sqrt(s2));
                    if (r == 0 && c == 0) {
                        i64 flat = lo + k;  // realization covers the grid row-major
                        pred_vx.v[static_cast<size_t>(flat)] = mu;
                        sigma_vx.v[static_cast<size_t>(flat)] = std::sqrt(s2);
                        abs_err_vx.v[static_cast<size_t>(flat)] =
                            std::abs(flow.vx.v[static_cast<size_t>(flat)] - mu);
                    }
                }
            }
        }
    }

    CalibrationReport report = calibration_report(ys, mus, sigmas);

    render_field(flow.vx, Colormap::Diverging, cfg.out_dir + "/truth_vx.ppm");
    render_field(pred_vx, Colormap::Diverging, cfg.out_dir + "/prediction_vx.ppm");
    render_field(sigma_vx, Colormap::Viridis, cfg.out_dir + "/sigma_vx.ppm");
    render_field(abs_err_vx, Colormap::Viridis, cfg.out_dir + "/abs_error_vx.ppm");

    // Scatter feed for the sigma-vs-|error| panel, thinned to ~4096 points.
    {
        std::ofstream sc(cfg.out_dir + "/calibration_scatter.csv");
        sc << "sigma,abs_err\n";
        size_t stride = std::max<size_t>(1, ys.size() / 4096);
        for (size_t i = 0; i < ys.size(); i += stride)
            sc << fmt_g17(sigmas[i]) << "," << fmt_g17(std::abs(ys[i] - mus[i])) << "\n";
    }

    write_kv(cfg.out_dir + "/summary.txt", report.kv());

    std::vector<Param*> saved = params;
    for (Param* p : net.mean_net.state_params()) saved.push_back(p);
    for (Param* p : net.noise_net.state_params()) saved.push_back(p);
    runio::save_net_checkpoint(cfg.out_dir + "/checkpoint.bin", cfg, opt.step_count(), saved);
    return report;
}

}  // namespace svgpkan
