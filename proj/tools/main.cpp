#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "svgpkan/checks.hpp"
#include "svgpkan/cli.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_given = false;
    bool desk = false;
    std::string out_dir;
    std::string mnist_dir;
    bool synthetic = false;
};

void attach_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "key=value config file");
    cmd->add_option("--seed", f.seed, "run seed (required unless set in the config)")
        ->each([&f](const std::string&) { f.seed_given = true; });
    cmd->add_flag("--desk", f.desk, "desk-scale overrides (smaller, same thresholds)");
    cmd->add_option("--out", f.out_dir, "output directory (default: out)");
}

svgpkan::RunConfig build_config(const CommonFlags& f, const std::string& study) {
    svgpkan::RunConfig cfg;
    if (!f.config_path.empty()) cfg = svgpkan::parse_config_file(f.config_path);
    cfg.study = study;  // the subcommand wins over any study= key
    if (f.seed_given) {
        cfg.seed = f.seed;
        cfg.seed_set = true;
    }
    if (f.desk) cfg.desk = true;
    if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
    if (!f.mnist_dir.empty()) cfg.mnist_dir = f.mnist_dir;
    if (f.synthetic) cfg.synthetic = true;
    return cfg;
}

void print_kv(const svgpkan::KvList& kv) {
    for (const auto& [k, v] : kv) std::cout << k << "=" << v << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse variational GP Kolmogorov-Arnold networks: uncertainty studies"};
    app.require_subcommand(1);

    CommonFlags fa, fb, fc;
    CLI::App* a = app.add_subcommand("study-a", "heteroscedastic flow calibration");
    attach_common(a, fa);
    CLI::App* b = app.add_subcommand("study-b", "advection-diffusion surrogate and ensemble spread");
    attach_common(b, fb);
    CLI::App* c = app.add_subcommand("study-c", "anomaly detection on digit reconstructions");
    attach_common(c, fc);
    c->add_option("--mnist-dir", fc.mnist_dir, "directory with the IDX files (or SVGPKAN_MNIST_DIR)");
    c->add_flag("--synthetic", fc.synthetic, "force the synthetic digit fallback");
    CLI::App* s = app.add_subcommand("selftest", "fast oracle and invariant suite");
    (void)s;

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("selftest")) {
            return svgpkan::run_selftest(std::cout) == 0 ? 0 : 1;
        }
        if (app.got_subcommand("study-a")) {
            svgpkan::CalibrationReport r = svgpkan::run_study_a(build_config(fa, "study-a"));
            print_kv(r.kv());
            return 0;
        }
        if (app.got_subcommand("study-b")) {
            svgpkan::StudyBResult r = svgpkan::run_study_b(build_config(fb, "study-b"));
            svgpkan::KvList kv = r.spread.kv();
            kv.emplace_back("physics_factor", svgpkan::fmt_g17(r.physics_factor));
            kv.emplace_back("one_step_mse", svgpkan::fmt_g17(r.one_step_mse));
            kv.emplace_back("target_variance", svgpkan::fmt_g17(r.target_variance));
            print_kv(kv);
            return 0;
        }
        if (app.got_subcommand("study-c")) {
            svgpkan::AnomalyReport r = svgpkan::run_study_c(build_config(fc, "study-c"));
            print_kv(r.kv());
            return 0;
        }
    } catch (const svgpkan::TrainError& e) {
        std::cerr << "training diverged at epoch " << e.epoch << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
