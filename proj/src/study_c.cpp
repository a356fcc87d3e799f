#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "run_common.hpp"
#include "svgpkan/cli.hpp"
#include "svgpkan/likelihoods.hpp"
#include "svgpkan/nn.hpp"
#include "svgpkan/ops.hpp"

namespace svgpkan {

namespace {

Tensor images_tensor(const MnistData& d, const std::vector<i64>& idx, i64 lo, i64 n) {
    std::vector<double> buf;
    buf.reserve(static_cast<size_t>(n) * d.rows * d.cols);
    for (i64 k = 0; k < n; ++k) {
        i64 img = idx[static_cast<size_t>(lo + k)];
        for (i64 r = 0; r < d.rows; ++r)
            for (i64 c = 0; c < d.cols; ++c) buf.push_back(d.pixel01(img, r, c));
    }
    return Tensor::from_data({n, 1, d.rows, d.cols}, std::move(buf));
}

std::vector<i64> iota_idx(i64 n) {
    std::vector<i64> v(static_cast<size_t>(n));
    std::iota(v.begin(), v.end(), 0);
    return v;
}

// Image row 0 is the top; Field2D row 0 is the bottom. Flip so renders come
// out upright.
Field2D image_field(const Tensor& batch, i64 row, i64 side) {
    Field2D f(side, side, 0.0, 1.0, 0.0, 1.0, false);
    for (i64 r = 0; r < side; ++r)
        for (i64 c = 0; c < side; ++c)
            f.v[static_cast<size_t>((side - 1 - r) * side + c)] = batch.at((row * side + r) * side + c);
    return f;
}

struct GroupScores {
    std::vector<double> unc, mse;
};

}  // namespace

AnomalyReport run_study_c(const RunConfig& cfg_in) {
    RunConfig cfg = cfg_in;
    cfg.study = "study-c";
    apply_study_defaults(cfg);
    if (!cfg.seed_set) throw std::invalid_argument("study-c: seed is required");
    runio::prepare_out_dir(cfg);

    Rng root(cfg.seed);
    Rng init_rng = root.split(0);
    Rng data_rng = root.split(1);
    Rng shuffle_rng = root.split(2);

    MnistData train, eval_normal, eval_anomal;
    bool synthetic = cfg.synthetic;
    if (!synthetic && cfg.mnist_dir.empty()) {
        std::cerr << "study-c: no MNIST directory configured, using the synthetic fallback\n";
        synthetic = true;
    }
    if (!synthetic) {
        try {
            MnistData tr = load_mnist_idx(cfg.mnist_dir + "/train-images-idx3-ubyte",
                                          cfg.mnist_dir + "/train-labels-idx1-ubyte");
            MnistData te = load_mnist_idx(cfg.mnist_dir + "/t10k-images-idx3-ubyte",
                                          cfg.mnist_dir + "/t10k-labels-idx1-ubyte");
            train = take(filter_label(tr, 0), cfg.train_images);
            eval_normal = take(filter_label(te, 0), cfg.eval_per_class);
            eval_anomal = take(filter_label(te, 7), cfg.eval_per_class);
        } catch (const IdxError& e) {
            std::cerr << "study-c: cannot load MNIST from " << cfg.mnist_dir << " (" << e.what()
                      << "), using the synthetic fallback\n";
            synthetic = true;
        }
    }
    if (synthetic) {
        train = filter_label(synthetic_digit_fallback(data_rng, cfg.train_images), 0);
        MnistData ev = synthetic_digit_fallback(data_rng, cfg.eval_per_class);
        eval_normal = filter_label(ev, 0);
        eval_anomal = filter_label(ev, 7);
    }
    if (train.count() < cfg.batch)
        throw std::invalid_argument("study-c: fewer training images than one batch");

    Network net = build_study_c_net(init_rng, cfg.m, cfg.shared_z);
    AdamConfig ocfg;
    ocfg.lr = cfg.lr;
    Adam opt(net.params(), ocfg);

    // Bottleneck variance enters the objective so the code's uncertainty
    // tightens on the training class instead of staying at the prior.
    auto var_term = [](const NetTrace& t) { return mean(sum(t.gp[0].detail.out.var, {1})); };

    std::vector<i64> order = iota_idx(train.count());
    runio::LossCsv loss_csv(cfg.out_dir + "/loss.csv");
    for (i64 epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (i64 i = train.count() - 1; i > 0; --i) {
            i64 k = static_cast<i64>(shuffle_rng.next_u64() % static_cast<std::uint64_t>(i + 1));
            std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(k)]);
        }
        double epoch_loss = 0.0;
        i64 n_batches = 0;
        for (i64 lo = 0; lo + cfg.batch <= train.count(); lo += cfg.batch) {
            Tensor x = images_tensor(train, order, lo, cfg.batch);
            Tape tape;
            TapeScope scope(tape);
            NetTrace f = net.forward(x, ForwardMode::MomentMatched);
            Tensor loss = mse_plus_kl(f.out.mean, x, net.kl(), cfg.kl_weight);
            if (cfg.var_penalty > 0.0)
                loss = add(loss, mul(var_term(f), Tensor::scalar(cfg.var_penalty)));
            double lv = loss.item();
            if (!std::isfinite(lv)) throw TrainError(epoch, "study-c: loss became non-finite");
            tape.backward(loss);
            runio::step_adam(opt, tape);
            epoch_loss += lv;
            ++n_batches;
        }
        if (epoch == 0) net.freeze_standardize();
        loss_csv.row(epoch, epoch_loss / static_cast<double>(n_batches));
    }

    auto score_group = [&](const MnistData& d) {
        GroupScores s;
        std::vector<i64> idx = iota_idx(d.count());
        const i64 chunk = 25;
        for (i64 lo = 0; lo < d.count(); lo += chunk) {
            i64 n = std::min<i64>(chunk, d.count() - lo);
            Tensor x = images_tensor(d, idx, lo, n);
            NetTrace f = net.forward(x, ForwardMode::MomentMatched);
            const Tensor& var = f.gp[0].detail.out.var;  // n x code
            i64 code = var.dim(1);
            i64 npix = d.rows * d.cols;
            for (i64 k = 0; k < n; ++k) {
                double u = 0.0;
                for (i64 j = 0; j < code; ++j) u += var.at(k * code + j);
                s.unc.push_back(u);
                double e = 0.0;
                for (i64 i = 0; i < npix; ++i) {
                    double diff = f.out.mean.at(k * npix + i) - x.at(k * npix + i);
                    e += diff * diff;
                }
                s.mse.push_back(e / static_cast<double>(npix));
            }
        }
        return s;
    };
    GroupScores sn = score_group(eval_normal);
    GroupScores sa = score_group(eval_anomal);
    AnomalyReport report = anomaly_scores(sn.unc, sa.unc, sn.mse, sa.mse);

    // Reconstruction pairs for the first few of each class.
    auto render_pairs = [&](const MnistData& d, const std::string& tag) {
        i64 n = std::min<i64>(4, d.count());
        if (n == 0) return;
        Tensor x = images_tensor(d, iota_idx(d.count()), 0, n);
        NetTrace f = net.forward(x, ForwardMode::MomentMatched);
        for (i64 k = 0; k < n; ++k) {
            render_field(image_field(x, k, d.rows), Colormap::Gray,
                         cfg.out_dir + "/input_" + tag + "_" + std::to_string(k) + ".ppm");
            render_field(image_field(f.out.mean, k, d.rows), Colormap::Gray,
                         cfg.out_dir + "/recon_" + tag + "_" + std::to_string(k) + ".ppm");
        }
    };
    render_pairs(eval_normal, "normal");
    render_pairs(eval_anomal, "anomaly");

    KvList kv = report.kv();
    kv.emplace_back("synthetic_data", synthetic ? "1" : "0");
    kv.emplace_back("train_count", std::to_string(train.count()));
    write_kv(cfg.out_dir + "/summary.txt", kv);

    runio::save_net_checkpoint(cfg.out_dir + "/checkpoint.bin", cfg, opt.step_count(),
                               net.state_params());
    return report;
}

}  // namespace svgpkan
