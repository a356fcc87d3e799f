#include <algorithm>
#include <cmath>
#include <numeric>

#include "run_common.hpp"
#include "svgpkan/cli.hpp"
#include "svgpkan/likelihoods.hpp"
#include "svgpkan/nn.hpp"
#include "svgpkan/ops.hpp"

namespace svgpkan {

namespace {

constexpr double kKappa = 0.002;
constexpr double kDt = 0.1;
constexpr double kTwoPi = 6.283185307179586476925286766559;

double rms(const Field2D& f) {
    double s = 0.0;
    for (double v : f.v) s += v * v;
    return std::sqrt(s / static_cast<double>(f.v.size()));
}

// Canonical blob state plus a smooth jittered variant per trajectory so the
// one-step dataset sees more than one flow configuration.
Field2D jittered_initial(i64 g, Rng& rng, double rel) {
    Field2D T0 = study_b_initial(g, g);
    if (rel <= 0.0) return T0;
    Field2D j = smooth_random_field(rng, g, g, 0.0, kTwoPi, 0.0, kTwoPi);
    double jr = rms(j);
    double scale = jr > 0 ? rel * rms(T0) / jr : 0.0;
    for (size_t i = 0; i < T0.v.size(); ++i) T0.v[i] += scale * j.v[i];
    return T0;
}

Tensor fields_tensor(const std::vector<const Field2D*>& fs) {
    i64 b = static_cast<i64>(fs.size());
    i64 g = fs[0]->h;
    std::vector<double> d;
    d.reserve(static_cast<size_t>(b) * g * g);
    for (const Field2D* f : fs) d.insert(d.end(), f->v.begin(), f->v.end());
    return Tensor::from_data({b, 1, g, g}, std::move(d));
}

Field2D field_from_row(const Tensor& t, i64 row, const Field2D& like) {
    Field2D out = like;
    i64 n = like.h * like.w;
    for (i64 i = 0; i < n; ++i) out.v[static_cast<size_t>(i)] = t.at(row * n + i);
    return out;
}

}  // namespace

StudyBResult run_study_b(const RunConfig& cfg_in) {
    RunConfig cfg = cfg_in;
    cfg.study = "study-b";
    apply_study_defaults(cfg);
    if (!cfg.seed_set) throw std::invalid_argument("study-b: seed is required");
    if (cfg.n_traj < 2) throw std::invalid_argument("study-b: n_traj must be >= 2");
    runio::prepare_out_dir(cfg);

    const i64 g = cfg.grid;
    Rng root(cfg.seed);
    Rng init_rng = root.split(0);
    Rng source_rng = root.split(1);
    Rng jitter_rng = root.split(2);
    Rng shuffle_rng = root.split(3);
    Rng rollout_rng = root.split(4);
    Rng physics_rng = root.split(5);

    const Field2D source = study_b_source(source_rng, g, g);
    auto velocity = [](double t, i64 h, i64 w) { return time_dependent_velocity(t, h, w); };

    // Ground-truth one-step pairs. Trajectory 0 starts from the canonical
    // state; later ones jitter it. The last trajectory is held out.
    std::vector<Field2D> inputs, targets;
    for (i64 j = 0; j < cfg.n_traj; ++j) {
        Field2D T = jittered_initial(g, jitter_rng, j == 0 ? 0.0 : 0.25);
        for (i64 n = 0; n < cfg.traj_steps; ++n) {
            FlowField vel = velocity(n * kDt, g, g);
            Field2D next = advection_diffusion_step(T, vel.vx, vel.vy, kKappa, kDt, source, n);
            inputs.push_back(T);
            targets.push_back(next);
            T = std::move(next);
        }
    }
    const i64 n_pairs = static_cast<i64>(inputs.size());
    const i64 n_train = n_pairs - cfg.traj_steps;  // hold out the last trajectory

    Network net = build_study_b_net(init_rng, g, cfg.m, cfg.proj, cfg.code);
    AdamConfig ocfg;
    ocfg.lr = cfg.lr;
    Adam opt(net.params(), ocfg);

    std::vector<i64> order(static_cast<size_t>(n_train));
    std::iota(order.begin(), order.end(), 0);

    runio::LossCsv loss_csv(cfg.out_dir + "/loss.csv");
    for (i64 epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates off the counter rng keeps runs bit-reproducible.
        for (i64 i = n_train - 1; i > 0; --i) {
            i64 k = static_cast<i64>(shuffle_rng.next_u64() % static_cast<std::uint64_t>(i + 1));
            std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(k)]);
        }
        double epoch_loss = 0.0;
        i64 n_batches = 0;
        for (i64 lo = 0; lo < n_train; lo += cfg.batch) {
            i64 n = std::min<i64>(cfg.batch, n_train - lo);
            std::vector<const Field2D*> xs, ys;
            for (i64 k = 0; k < n; ++k) {
                xs.push_back(&inputs[static_cast<size_t>(order[static_cast<size_t>(lo + k)])]);
                ys.push_back(&targets[static_cast<size_t>(order[static_cast<size_t>(lo + k)])]);
            }
            Tensor x = fields_tensor(xs);
            Tensor y = fields_tensor(ys);

            Tape tape;
            TapeScope scope(tape);
            NetTrace f = net.forward(x, ForwardMode::DeterministicMean);
            Tensor loss = mse_plus_kl(f.out.mean, y, net.kl(), cfg.kl_weight);
            double lv = loss.item();
            if (!std::isfinite(lv)) continue;
            tape.backward(loss);
            if (runio::step_adam(opt, tape, cfg.grad_clip)) {
                epoch_loss += lv;
                ++n_batches;
            }
        }
        if (n_batches == 0) throw TrainError(epoch, "study-b: every step in the epoch was non-finite");
        if (epoch == 0) net.freeze_standardize();
        loss_csv.row(epoch, epoch_loss / static_cast<double>(n_batches));
    }

    // One-step skill on the held-out trajectory, against its own variance.
    double mse = 0.0, t_mean = 0.0, t_sqmean = 0.0;
    {
        i64 count = 0;
        for (i64 p = n_train; p < n_pairs; p += cfg.batch) {
            i64 n = std::min<i64>(cfg.batch, n_pairs - p);
            std::vector<const Field2D*> xs;
            for (i64 k = 0; k < n; ++k) xs.push_back(&inputs[static_cast<size_t>(p + k)]);
            NetTrace f = net.forward(fields_tensor(xs), ForwardMode::DeterministicMean);
            for (i64 k = 0; k < n; ++k) {
                const Field2D& y = targets[static_cast<size_t>(p + k)];
                i64 npix = y.h * y.w;
                for (i64 i = 0; i < npix; ++i) {
                    double yv = y.v[static_cast<size_t>(i)];
                    double pv = f.out.mean.at(k * npix + i);
                    mse += (yv - pv) * (yv - pv);
                    t_mean += yv;
                    t_sqmean += yv * yv;
                    ++count;
                }
            }
        }
        mse /= static_cast<double>(count);
        t_mean /= static_cast<double>(count);
        t_sqmean /= static_cast<double>(count);
    }
    double target_var = t_sqmean - t_mean * t_mean;

    const Field2D T0 = study_b_initial(g, g);
    SensitivityResult phys = physics_sensitivity_test(T0, cfg.traj_steps - 1, 0.001, kKappa, kDt,
                                                      source, physics_rng, velocity);

    auto model_step = [&](const Field2D& T) {
        std::vector<const Field2D*> one{&T};
        NetTrace f = net.forward(fields_tensor(one), ForwardMode::DeterministicMean);
        return field_from_row(f.out.mean, 0, T);
    };
    const std::vector<i64> snaps{0, 5, 10, 14};
    SpreadReport spread = ensemble_rollout_spread(model_step, T0, cfg.n_ens,
                                                  cfg.rollout_perturbation, cfg.traj_steps - 1,
                                                  rollout_rng, snaps);

    // Three figure rows: ground truth, unperturbed model rollout, ensemble
    // spread, each at the snapshot times.
    {
        Field2D truth = T0;
        Field2D pred = T0;
        auto want = [&](i64 s) { return std::find(snaps.begin(), snaps.end(), s) != snaps.end(); };
        if (want(0)) {
            render_field(truth, Colormap::Diverging, cfg.out_dir + "/truth_t0.ppm");
            render_field(pred, Colormap::Diverging, cfg.out_dir + "/prediction_t0.ppm");
        }
        for (i64 s = 1; s <= cfg.traj_steps - 1; ++s) {
            FlowField vel = velocity((s - 1) * kDt, g, g);
            truth = advection_diffusion_step(truth, vel.vx, vel.vy, kKappa, kDt, source, s - 1);
            pred = model_step(pred);
            if (want(s)) {
                std::string suffix = "_t" + std::to_string(s) + ".ppm";
                render_field(truth, Colormap::Diverging, cfg.out_dir + "/truth" + suffix);
                render_field(pred, Colormap::Diverging, cfg.out_dir + "/prediction" + suffix);
            }
        }
        for (const auto& [s, stdf] : spread.snapshots)
            render_field(stdf, Colormap::Viridis,
                         cfg.out_dir + "/spread_t" + std::to_string(s) + ".ppm");
    }

    KvList kv = spread.kv();
    kv.emplace_back("physics_factor", fmt_g17(phys.factor));
    kv.emplace_back("physics_initial_diff", fmt_g17(phys.initial_diff));
    kv.emplace_back("physics_final_diff", fmt_g17(phys.final_diff));
    kv.emplace_back("one_step_mse", fmt_g17(mse));
    kv.emplace_back("target_variance", fmt_g17(target_var));
    write_kv(cfg.out_dir + "/summary.txt", kv);

    std::vector<Param*> saved = net.params();
    for (Param* p : net.state_params()) saved.push_back(p);
    runio::save_net_checkpoint(cfg.out_dir + "/checkpoint.bin", cfg, opt.step_count(), saved);
    return {spread, phys.factor, mse, target_var};
}

}  // namespace svgpkan
