#include <cmath>
#include <random>

#include <doctest.h>

#include "helpers.hpp"
#include "svgpkan/adam.hpp"
#include "svgpkan/nn.hpp"
#include "svgpkan/rng.hpp"

using namespace svgpkan;

namespace {

Tensor random_input(const Shape& shape, unsigned seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937 mt(seed);
    return testutil::randt(shape, mt, lo, hi);
}

// The zero-initialized variational means are a stationary point of any loss
// that is even in the outputs, so fit nonzero targets and nudge the
// parameters first; a zero gradient then means a detached subgraph.
void check_all_grads_nonzero(Network& net, const Tensor& input, unsigned seed) {
    Rng jiggle(seed);
    for (Param* p : net.params())
        for (i64 i = 0; i < p->value.size(); ++i) p->value.mutable_data()[i] += jiggle.normal(0.0, 0.02);

    Tape tape;
    Tensor loss;
    {
        TapeScope ts(tape);
        NetTrace t = net.forward(input, ForwardMode::MomentMatched);
        std::mt19937 mt(seed + 1);
        Tensor target = testutil::randt(t.out.mean.shape(), mt, -1.0, 1.0);
        loss = sum(square(sub(t.out.mean, target)));
        for (auto& g : t.gp) {
            loss = add(loss, sum(g.detail.projected));
            loss = add(loss, sum(g.detail.orthogonal));
            loss = add(loss, sum(g.detail.mean_variation));
        }
        loss = add(loss, mul(net.kl(), Tensor::scalar(0.01)));
    }
    tape.backward(loss);
    for (Param* p : net.params()) {
        Tensor g = tape.grad(*p);
        double mx = 0.0;
        for (i64 i = 0; i < g.size(); ++i) mx = std::max(mx, std::abs(g.at(i)));
        INFO("parameter " << p->name);
        CHECK(mx > 0.0);
    }
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("autoencoder shapes round-trip for batches 1, 4 and 16") {
    Rng rng(21);
    for (i64 b : {1, 4, 16}) {
        Network bn = build_study_b_net(rng, 32, 4);
        NetTrace tb = bn.forward(Tensor::zeros({b, 1, 32, 32}), ForwardMode::DeterministicMean);
        CHECK(tb.out.mean.shape() == Shape{b, 1, 32, 32});

        Network cn = build_study_c_net(rng, 4);
        NetTrace tc = cn.forward(Tensor::zeros({b, 1, 28, 28}), ForwardMode::DeterministicMean);
        CHECK(tc.out.mean.shape() == Shape{b, 1, 28, 28});
    }
    Network b64 = build_study_b_net(rng, 64, 4);
    CHECK(b64.forward(Tensor::zeros({1, 1, 64, 64}), ForwardMode::DeterministicMean).out.mean.shape() ==
          Shape{1, 1, 64, 64});
}

TEST_CASE("study a nets: edge counts, noise offset, zero initial kl") {
    StudyANet net = build_study_a_net(20);
    auto gps = net.mean_net.gp_layers();
    REQUIRE(gps.size() == 3);
    i64 edges = 0;
    for (auto* g : gps) edges += g->edge_count();
    CHECK(edges == 45);
    CHECK(gps[0]->m() == 20);

    auto noise = net.noise_net.gp_layers();
    REQUIRE(noise.size() == 1);
    CHECK(noise[0]->edge_count() == 2);
    CHECK(noise[0]->bias_.value.at(0) == doctest::Approx(std::log(0.01)).epsilon(1e-12));

    CHECK(std::abs(net.mean_net.kl().item()) < 1e-8);
    CHECK(std::abs(net.noise_net.kl().item()) < 1e-8);

    // a batch of coordinates yields two means and two variances per point
    Tensor coords = random_input({7, 2}, 3, 0.0, 1.0);
    NetTrace t = net.mean_net.forward(coords, ForwardMode::MomentMatched);
    CHECK(t.out.mean.shape() == Shape{7, 2});
    REQUIRE(t.out.var.defined());
    CHECK(t.out.var.shape() == Shape{7, 2});
    NetTrace tn = net.noise_net.forward(coords, ForwardMode::MomentMatched);
    CHECK(tn.out.mean.shape() == Shape{7, 1});
}

TEST_CASE("network kl sums exactly the gp blocks") {
    Rng rng(22);
    Network net = build_study_b_net(rng, 32, 4);
    Rng jiggle(23);
    for (Param* p : net.params())
        for (i64 i = 0; i < p->value.size(); ++i) p->value.mutable_data()[i] += jiggle.normal(0.0, 0.05);

    double want = 0.0;
    for (GPKANLayer* g : net.gp_layers()) want += g->kl().item();
    CHECK(testutil::rel_err(net.kl().item(), want) < 1e-10);
    CHECK(net.gp_layers().size() == 2);

    Network plain("p");
    plain.add(std::make_unique<ReluBlock>("p.0.relu"));
    CHECK(plain.kl().item() == 0.0);
}

TEST_CASE("deterministic forward is repeatable and matches moment matching at zero upstream variance") {
    Rng rng(24);
    Network net = build_study_c_net(rng, 4);
    Tensor img = random_input({3, 1, 28, 28}, 9, 0.0, 1.0);

    net.forward(img, ForwardMode::DeterministicMean);
    net.freeze_standardize();

    NetTrace a = net.forward(img, ForwardMode::DeterministicMean);
    NetTrace b = net.forward(img, ForwardMode::DeterministicMean);
    for (i64 i = 0; i < a.out.mean.size(); ++i) CHECK(a.out.mean.at(i) == b.out.mean.at(i));

    // the single gp block sees deterministic input either way
    NetTrace mm = net.forward(img, ForwardMode::MomentMatched);
    for (i64 i = 0; i < a.out.mean.size(); ++i) CHECK(a.out.mean.at(i) == mm.out.mean.at(i));
    CHECK_FALSE(a.out.var.defined());
}

TEST_CASE("moment matched gp outputs keep nonnegative variances") {
    StudyANet net = build_study_a_net(6);
    Rng jiggle(25);
    for (Param* p : net.mean_net.params())
        for (i64 i = 0; i < p->value.size(); ++i) p->value.mutable_data()[i] += jiggle.normal(0.0, 0.1);

    Tensor coords = random_input({11, 2}, 4, 0.0, 1.0);
    NetTrace t = net.mean_net.forward(coords, ForwardMode::MomentMatched);
    REQUIRE(t.gp.size() == 3);
    for (auto& g : t.gp) {
        for (i64 i = 0; i < g.detail.projected.size(); ++i) {
            CHECK(g.detail.projected.at(i) >= 0.0);
            CHECK(g.detail.orthogonal.at(i) >= 0.0);
            CHECK(g.detail.mean_variation.at(i) >= 0.0);
        }
        for (i64 i = 0; i < g.detail.out.var.size(); ++i) CHECK(g.detail.out.var.at(i) >= 0.0);
    }
}

TEST_CASE("zero image forward stays finite") {
    Rng rng(26);
    Network net = build_study_c_net(rng, 4);
    NetTrace t = net.forward(Tensor::zeros({2, 1, 28, 28}), ForwardMode::MomentMatched);
    for (i64 i = 0; i < t.out.mean.size(); ++i) CHECK(std::isfinite(t.out.mean.at(i)));
    REQUIRE(t.gp.size() == 1);
    for (i64 i = 0; i < t.gp[0].detail.out.var.size(); ++i) {
        CHECK(std::isfinite(t.gp[0].detail.out.var.at(i)));
        CHECK(t.gp[0].detail.out.var.at(i) >= 0.0);
    }
}

TEST_CASE("shape errors name the offending block") {
    Rng rng(27);
    Network net = build_study_c_net(rng, 4);
    CHECK_THROWS_WITH_AS(net.forward(Tensor::zeros({2, 3, 28, 28}), ForwardMode::DeterministicMean),
                         doctest::Contains("c.0.conv"), ShapeError);

    Network dn("d");
    dn.add(std::make_unique<DenseBlock>("d.0.dense", 5, 3, rng));
    CHECK_THROWS_WITH_AS(dn.forward(Tensor::zeros({2, 4}), ForwardMode::DeterministicMean),
                         doctest::Contains("d.0.dense"), ShapeError);

    Network rn("r");
    rn.add(std::make_unique<ReshapeBlock>("r.0.reshape", Shape{3, 2, 2}));
    CHECK_THROWS_WITH_AS(rn.forward(Tensor::zeros({2, 13}), ForwardMode::DeterministicMean),
                         doctest::Contains("r.0.reshape"), ShapeError);
}

TEST_CASE("gradient reaches every parameter of every study net") {
    SUBCASE("study a") {
        StudyANet net = build_study_a_net(5);
        Tensor coords = random_input({6, 2}, 11, 0.0, 1.0);
        check_all_grads_nonzero(net.mean_net, coords, 41);
        check_all_grads_nonzero(net.noise_net, coords, 42);
    }
    SUBCASE("study b") {
        Rng rng(28);
        Network net = build_study_b_net(rng, 32, 4);
        check_all_grads_nonzero(net, random_input({2, 1, 32, 32}, 12), 43);
    }
    SUBCASE("study c") {
        Rng rng(29);
        Network net = build_study_c_net(rng, 4);
        check_all_grads_nonzero(net, random_input({2, 1, 28, 28}, 13, 0.0, 1.0), 44);
    }
}

TEST_CASE("one training step moves the bottleneck kl off zero") {
    Rng rng(30);
    Network net = build_study_b_net(rng, 32, 4);
    Tensor x = random_input({2, 1, 32, 32}, 14);
    CHECK(std::abs(net.kl().item()) < 1e-8);

    Adam opt(net.params(), AdamConfig{});
    Tape tape;
    Tensor loss;
    {
        TapeScope ts(tape);
        NetTrace t = net.forward(x, ForwardMode::MomentMatched);
        loss = add(mean(square(sub(t.out.mean, x))), mul(net.kl(), Tensor::scalar(0.01)));
    }
    tape.backward(loss);
    std::vector<Tensor> grads;
    for (Param* p : net.params()) grads.push_back(tape.grad(*p));
    opt.step(grads);
    CHECK(net.kl().item() > 1e-12);
}

TEST_CASE("conv and dense weights initialize inside the fan-in bound, reproducibly") {
    Rng a(31), b(31);
    Network na = build_study_c_net(a, 4), nb = build_study_c_net(b, 4);
    auto pa = na.params(), pb = nb.params();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) {
        REQUIRE(pa[i]->value.size() == pb[i]->value.size());
        for (i64 j = 0; j < pa[i]->value.size(); ++j) CHECK(pa[i]->value.at(j) == pb[i]->value.at(j));
    }

    Rng c(32);
    Conv2dBlock conv("w.conv", 8, 16, 3, 2, 1, c);
    const double cb = 1.0 / std::sqrt(8.0 * 9.0);
    double spread = 0.0;
    for (i64 i = 0; i < conv.weight_.value.size(); ++i) {
        CHECK(std::abs(conv.weight_.value.at(i)) <= cb);
        spread = std::max(spread, std::abs(conv.weight_.value.at(i)));
    }
    CHECK(spread > 0.5 * cb);

    DenseBlock dense("w.dense", 49, 7, c);
    const double db = 1.0 / std::sqrt(49.0);
    for (i64 i = 0; i < dense.weight_.value.size(); ++i)
        CHECK(std::abs(dense.weight_.value.at(i)) <= db);
}

TEST_CASE("standardize tracks running statistics until frozen") {
    StandardizeBlock s("s", 3);
    LayerMoments in;
    in.mean = Tensor::from_data({2, 3}, {1.0, 2.0, 3.0, 3.0, 4.0, 5.0});

    LayerMoments out = s.apply(in, ForwardMode::DeterministicMean, nullptr);
    // mu = (2,3,4), var = 1 each
    CHECK(out.mean.at(0) == doctest::Approx(-1.0));
    CHECK(out.mean.at(3) == doctest::Approx(1.0));

    // the same batch again leaves the normalization unchanged
    LayerMoments again = s.apply(in, ForwardMode::DeterministicMean, nullptr);
    for (i64 i = 0; i < 6; ++i) CHECK(again.mean.at(i) == doctest::Approx(out.mean.at(i)));

    // a different batch shifts the statistics while unfrozen
    LayerMoments in2;
    in2.mean = Tensor::from_data({1, 3}, {10.0, 10.0, 10.0});
    s.apply(in2, ForwardMode::DeterministicMean, nullptr);
    auto [mu1, sd1] = s.moments();
    CHECK(mu1.at(0) == doctest::Approx((1.0 + 3.0 + 1.0 + 3.0 + 10.0) / 5.0));

    s.freeze();
    LayerMoments in3;
    in3.mean = Tensor::from_data({1, 3}, {100.0, 100.0, 100.0});
    s.apply(in3, ForwardMode::DeterministicMean, nullptr);
    auto [mu2, sd2] = s.moments();
    for (i64 i = 0; i < 3; ++i) {
        CHECK(mu2.at(i) == mu1.at(i));
        CHECK(sd2.at(i) == sd1.at(i));
    }

    // untouched block is the identity
    StandardizeBlock fresh("f", 3);
    LayerMoments id;
    id.mean = Tensor::from_data({1, 3}, {4.0, 5.0, 6.0});
    fresh.freeze();
    LayerMoments idout = fresh.apply(id, ForwardMode::DeterministicMean, nullptr);
    for (i64 i = 0; i < 3; ++i) CHECK(idout.mean.at(i) == id.mean.at(i));

    // variance rescales by 1 / sd^2
    StandardizeBlock vs("v", 1);
    LayerMoments vin;
    vin.mean = Tensor::from_data({2, 1}, {0.0, 4.0});  // mu 2, sd 2
    vin.var = Tensor::from_data({2, 1}, {8.0, 8.0});
    LayerMoments vout = vs.apply(vin, ForwardMode::MomentMatched, nullptr);
    CHECK(vout.var.at(0) == doctest::Approx(2.0));
}

}  // TEST_SUITE
