#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "helpers.hpp"
#include "svgpkan/cli.hpp"
#include "svgpkan/nn.hpp"

using namespace svgpkan;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir(const std::string& leaf) {
    auto p = fs::temp_directory_path() / "svgpkan_cli_test" / leaf;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    REQUIRE(out.good());
    out << text;
}

std::string kv_text(const RunConfig& cfg) {
    std::string s;
    for (const auto& [k, v] : config_kv(cfg)) s += k + "=" + v + "\n";
    return s;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config keys apply, last assignment wins") {
    RunConfig cfg;
    apply_config_kv(cfg, "study", "study-b");
    apply_config_kv(cfg, "seed", "7");
    apply_config_kv(cfg, "epochs", "12");
    apply_config_kv(cfg, "kl_weight", "0.5");
    apply_config_kv(cfg, "desk", "true");
    apply_config_kv(cfg, "epochs", "3");
    CHECK(cfg.study == "study-b");
    CHECK(cfg.seed == 7);
    CHECK(cfg.seed_set);
    CHECK(cfg.epochs == 3);
    CHECK(cfg.kl_weight == 0.5);
    CHECK(cfg.desk);

    CHECK_THROWS_AS(apply_config_kv(cfg, "nope", "1"), std::invalid_argument);
    CHECK_THROWS_AS(apply_config_kv(cfg, "epochs", "12x"), std::invalid_argument);
    CHECK_THROWS_AS(apply_config_kv(cfg, "lr", ""), std::invalid_argument);
    CHECK_THROWS_AS(apply_config_kv(cfg, "desk", "maybe"), std::invalid_argument);
    CHECK_THROWS_AS(apply_config_kv(cfg, "study", "study-d"), std::invalid_argument);
}

TEST_CASE("config file: comments, blanks, malformed lines") {
    auto dir = tmp_dir("config");
    spit(dir / "ok.cfg",
         "# heteroscedastic run\n"
         "\n"
         "study=study-a\n"
         "seed=11\n"
         "  batch = 4 \n");
    RunConfig cfg = parse_config_file((dir / "ok.cfg").string());
    CHECK(cfg.study == "study-a");
    CHECK(cfg.seed == 11);
    CHECK(cfg.batch == 4);

    spit(dir / "bad.cfg", "study=study-a\nno_equals_here\n");
    CHECK_THROWS_WITH_AS(parse_config_file((dir / "bad.cfg").string()),
                         doctest::Contains("line 2"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_file((dir / "missing.cfg").string()), std::runtime_error);
}

TEST_CASE("study defaults and desk overrides") {
    RunConfig a;
    a.study = "study-a";
    apply_study_defaults(a);
    CHECK(a.epochs == 1000);
    CHECK(a.batch == 16);

    RunConfig ad;
    ad.study = "study-a";
    ad.desk = true;
    apply_study_defaults(ad);
    CHECK(ad.epochs == 300);

    RunConfig bd;
    bd.study = "study-b";
    bd.desk = true;
    apply_study_defaults(bd);
    CHECK(bd.epochs == 300);
    CHECK(bd.grid == 32);

    RunConfig c;
    c.study = "study-c";
    apply_study_defaults(c);
    CHECK(c.epochs == 70);
    CHECK(c.batch == 32);

    RunConfig cd;
    cd.study = "study-c";
    cd.desk = true;
    cd.train_images = 50000;
    apply_study_defaults(cd);
    CHECK(cd.epochs == 30);
    CHECK(cd.train_images == 2000);

    // explicit values survive the defaulting pass
    RunConfig e;
    e.study = "study-a";
    e.epochs = 5;
    e.desk = true;
    apply_study_defaults(e);
    CHECK(e.epochs == 5);
}

TEST_CASE("config snapshot round-trips through the parser") {
    RunConfig cfg;
    cfg.study = "study-b";
    cfg.seed = 123456789012345ULL;
    cfg.seed_set = true;
    cfg.epochs = 17;
    cfg.batch = 5;
    cfg.kl_weight = 0.037;
    cfg.lr = 1.5e-4;
    cfg.grid = 24;
    cfg.rollout_perturbation = 0.125;
    cfg.mnist_dir = "/data/mnist";
    cfg.synthetic = true;

    auto dir = tmp_dir("roundtrip");
    spit(dir / "snap.cfg", kv_text(cfg));
    RunConfig back = parse_config_file((dir / "snap.cfg").string());
    CHECK(kv_text(back) == kv_text(cfg));
}

TEST_CASE("checkpoints round-trip bitwise") {
    Param w("w", Tensor::from_data({2, 3}, {1.0 / 3.0, -2.0 / 7.0, 1e-300, 0.0, -0.0, 3.5}));
    Param b("b", Tensor::from_data({3}, {0.1, 0.2, 0.3}));

    Checkpoint c;
    c.step = 42;
    c.config_text = "study=study-a\nseed=1\n";
    capture_params(c, {&w, &b});

    auto dir = tmp_dir("ckpt");
    auto path = (dir / "model.bin").string();
    save_checkpoint(path, c);

    Checkpoint d = load_checkpoint(path);
    CHECK(d.version == 1);
    CHECK(d.step == 42);
    CHECK(d.config_text == c.config_text);
    REQUIRE(d.tensors.size() == 2);
    for (size_t i = 0; i < d.tensors.size(); ++i) {
        CHECK(d.tensors[i].first == c.tensors[i].first);
        REQUIRE(d.tensors[i].second.shape() == c.tensors[i].second.shape());
        CHECK(std::memcmp(d.tensors[i].second.data(), c.tensors[i].second.data(),
                          sizeof(double) * static_cast<size_t>(d.tensors[i].second.size())) == 0);
    }

    // resaving the loaded checkpoint reproduces the file exactly
    auto path2 = (dir / "model2.bin").string();
    save_checkpoint(path2, d);
    CHECK(slurp(path) == slurp(path2));

    Param w2("w", Tensor::zeros({2, 3}));
    Param b2("b", Tensor::zeros({3}));
    restore_params(d, {&w2, &b2});
    CHECK(std::memcmp(w2.value.data(), w.value.data(), sizeof(double) * 6) == 0);

    Param wrong_shape("w", Tensor::zeros({3, 2}));
    CHECK_THROWS_AS(restore_params(d, {&wrong_shape}), std::runtime_error);
    Param unknown("mystery", Tensor::zeros({1}));
    CHECK_THROWS_AS(restore_params(d, {&unknown}), std::runtime_error);

    std::string bytes = slurp(path);
    bytes[0] ^= 0x40;
    spit(dir / "corrupt.bin", bytes);
    CHECK_THROWS_WITH_AS(load_checkpoint((dir / "corrupt.bin").string()),
                         doctest::Contains("magic"), std::runtime_error);
}

TEST_CASE("field renderer: header, range sidecar, byte-exact endpoints") {
    auto dir = tmp_dir("render");

    Field2D f(2, 3, 0.0, 1.0, 0.0, 1.0, false);
    // min at the bottom-left corner, max at the top-right
    f.v = {-1.0, 0.0, 0.25, 0.5, 0.75, 3.0};
    auto path = (dir / "f.ppm").string();
    render_field(f, Colormap::Viridis, path);

    std::string ppm = slurp(path);
    CHECK(ppm.substr(0, 3) == "P6\n");
    std::istringstream head(ppm);
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    head >> magic >> w >> h >> maxval;
    CHECK(w == 3);
    CHECK(h == 2);
    CHECK(maxval == 255);
    head.get();  // single whitespace byte after the header
    const size_t pixel_start = static_cast<size_t>(head.tellg());
    REQUIRE(ppm.size() == pixel_start + 3u * 2u * 3u);

    auto px = [&](int row, int col) {
        size_t o = pixel_start + 3u * static_cast<size_t>(row * 3 + col);
        return std::array<unsigned char, 3>{static_cast<unsigned char>(ppm[o]),
                                            static_cast<unsigned char>(ppm[o + 1]),
                                            static_cast<unsigned char>(ppm[o + 2])};
    };
    // y runs upward, so grid row 0 lands on the last image row
    auto lo = px(1, 0);
    CHECK(lo[0] == 68);
    CHECK(lo[1] == 1);
    CHECK(lo[2] == 84);
    auto hi = px(0, 2);
    CHECK(hi[0] == 253);
    CHECK(hi[1] == 231);
    CHECK(hi[2] == 37);

    std::string side = slurp(path + ".minmax.txt");
    CHECK(side.find("min=-1") != std::string::npos);
    CHECK(side.find("max=3") != std::string::npos);

    // constant fields map to the middle of the ramp
    Field2D g(2, 2, 0.0, 1.0, 0.0, 1.0, false);
    g.v = {0.7, 0.7, 0.7, 0.7};
    auto gpath = (dir / "g.ppm").string();
    render_field(g, Colormap::Gray, gpath);
    std::string gp = slurp(gpath);
    unsigned char mid = static_cast<unsigned char>(gp[gp.size() - 1]);
    CHECK(static_cast<int>(mid) == 128);

    Field2D bad(1, 1, 0.0, 1.0, 0.0, 1.0, false);
    bad.v = {std::nan("")};
    CHECK_THROWS_AS(render_field(bad, Colormap::Gray, (dir / "bad.ppm").string()),
                    std::runtime_error);
}

TEST_CASE("study runners insist on a seed") {
    RunConfig cfg;
    cfg.out_dir = tmp_dir("noseed").string();
    cfg.epochs = 1;
    CHECK_THROWS_AS(run_study_a(cfg), std::invalid_argument);
    CHECK_THROWS_AS(run_study_b(cfg), std::invalid_argument);
    CHECK_THROWS_AS(run_study_c(cfg), std::invalid_argument);
}

TEST_CASE("study a: tiny run is bit-reproducible and writes every artifact") {
    RunConfig cfg;
    cfg.seed = 31;
    cfg.seed_set = true;
    cfg.epochs = 2;
    cfg.batch = 8;
    cfg.steps_per_epoch = 3;
    cfg.eval_fields = 2;
    cfg.m = 8;

    auto d1 = tmp_dir("a1");
    auto d2 = tmp_dir("a2");
    cfg.out_dir = d1.string();
    CalibrationReport r1 = run_study_a(cfg);
    cfg.out_dir = d2.string();
    CalibrationReport r2 = run_study_a(cfg);

    for (const char* name :
         {"config.txt", "loss.csv", "summary.txt", "checkpoint.bin", "truth_vx.ppm",
          "prediction_vx.ppm", "sigma_vx.ppm", "abs_error_vx.ppm", "calibration_scatter.csv"}) {
        CAPTURE(name);
        CHECK(fs::exists(d1 / name));
    }
    CHECK(fs::exists(d1 / "truth_vx.ppm.minmax.txt"));

    CHECK(slurp(d1 / "summary.txt") == slurp(d2 / "summary.txt"));
    CHECK(slurp(d1 / "loss.csv") == slurp(d2 / "loss.csv"));
    // checkpoints embed the config snapshot, whose out_dir differs; the
    // learned tensors must still match bit for bit
    Checkpoint c1 = load_checkpoint((d1 / "checkpoint.bin").string());
    Checkpoint c2 = load_checkpoint((d2 / "checkpoint.bin").string());
    CHECK(c1.step == c2.step);
    REQUIRE(c1.tensors.size() == c2.tensors.size());
    for (size_t i = 0; i < c1.tensors.size(); ++i) {
        CAPTURE(c1.tensors[i].first);
        CHECK(c1.tensors[i].first == c2.tensors[i].first);
        REQUIRE(c1.tensors[i].second.size() == c2.tensors[i].second.size());
        CHECK(std::memcmp(c1.tensors[i].second.data(), c2.tensors[i].second.data(),
                          sizeof(double) * static_cast<size_t>(c1.tensors[i].second.size())) == 0);
    }
    CHECK(r1.rmse == r2.rmse);
    CHECK(r1.pearson_sigma_abs_err == r2.pearson_sigma_abs_err);

    // loss.csv covers every epoch with finite losses
    std::istringstream ls(slurp(d1 / "loss.csv"));
    std::string line;
    std::getline(ls, line);
    CHECK(line == "epoch,loss");
    int rows = 0;
    while (std::getline(ls, line)) {
        if (line.empty()) continue;
        ++rows;
        double v = std::stod(line.substr(line.find(',') + 1));
        CHECK(std::isfinite(v));
    }
    CHECK(rows == 2);

    // a different seed actually changes the run
    cfg.seed = 32;
    cfg.out_dir = tmp_dir("a3").string();
    run_study_a(cfg);
    CHECK(slurp(cfg.out_dir + "/summary.txt") != slurp(d1 / "summary.txt"));
}

TEST_CASE("study b: tiny run writes rollout figures and physics numbers") {
    RunConfig cfg;
    cfg.seed = 5;
    cfg.seed_set = true;
    cfg.epochs = 2;
    cfg.batch = 4;
    cfg.grid = 12;
    cfg.n_traj = 2;
    cfg.traj_steps = 4;
    cfg.n_ens = 2;
    cfg.proj = 6;
    cfg.code = 3;
    cfg.m = 4;

    auto d1 = tmp_dir("b1");
    cfg.out_dir = d1.string();
    StudyBResult r1 = run_study_b(cfg);
    CHECK(std::isfinite(r1.physics_factor));
    CHECK(std::isfinite(r1.one_step_mse));
    CHECK(r1.target_variance > 0.0);

    for (const char* name : {"config.txt", "loss.csv", "summary.txt", "checkpoint.bin",
                             "truth_t0.ppm", "prediction_t0.ppm", "spread_t0.ppm"}) {
        CAPTURE(name);
        CHECK(fs::exists(d1 / name));
    }
    std::string summary = slurp(d1 / "summary.txt");
    CHECK(summary.find("physics_factor=") != std::string::npos);
    CHECK(summary.find("one_step_mse=") != std::string::npos);
    CHECK(summary.find("growth_factor=") != std::string::npos);

    auto d2 = tmp_dir("b2");
    cfg.out_dir = d2.string();
    run_study_b(cfg);
    CHECK(slurp(d1 / "summary.txt") == slurp(d2 / "summary.txt"));
    CHECK(slurp(d1 / "loss.csv") == slurp(d2 / "loss.csv"));
}

TEST_CASE("study c: tiny synthetic run scores both classes") {
    RunConfig cfg;
    cfg.seed = 9;
    cfg.seed_set = true;
    cfg.epochs = 1;
    cfg.batch = 16;
    cfg.synthetic = true;
    cfg.train_images = 40;
    cfg.eval_per_class = 5;
    cfg.m = 6;

    auto d1 = tmp_dir("c1");
    cfg.out_dir = d1.string();
    AnomalyReport r = run_study_c(cfg);
    CHECK(std::isfinite(r.uncertainty_ratio));
    CHECK(r.auc >= 0.0);
    CHECK(r.auc <= 1.0);

    for (const char* name :
         {"config.txt", "loss.csv", "summary.txt", "checkpoint.bin", "input_normal_0.ppm",
          "recon_normal_0.ppm", "input_anomaly_0.ppm", "recon_anomaly_0.ppm"}) {
        CAPTURE(name);
        CHECK(fs::exists(d1 / name));
    }
    std::string summary = slurp(d1 / "summary.txt");
    CHECK(summary.find("synthetic_data=1") != std::string::npos);
    CHECK(summary.find("uncertainty_ratio=") != std::string::npos);
}

TEST_CASE("checkpoint restores reproduce the saved net exactly") {
    // train a few steps, save, clobber, restore, compare parameters bitwise
    StudyANet net = build_study_a_net(4);
    std::vector<Param*> ps = net.mean_net.params();
    for (Param* p : net.noise_net.params()) ps.push_back(p);

    Checkpoint c;
    c.step = 0;
    capture_params(c, ps);

    auto dir = tmp_dir("restore");
    auto path = (dir / "net.bin").string();
    save_checkpoint(path, c);

    std::vector<std::vector<double>> before;
    for (Param* p : ps) before.emplace_back(p->value.data(), p->value.data() + p->value.size());

    for (Param* p : ps)
        for (i64 i = 0; i < p->value.size(); ++i) p->value.mutable_data()[i] += 1.0;

    restore_params(load_checkpoint(path), ps);
    for (size_t k = 0; k < ps.size(); ++k) {
        CAPTURE(ps[k]->name);
        CHECK(std::memcmp(ps[k]->value.data(), before[k].data(),
                          sizeof(double) * before[k].size()) == 0);
    }
}

}  // TEST_SUITE
