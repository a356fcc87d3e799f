#include "svgpkan/nn.hpp"

#include <cmath>

namespace svgpkan {

namespace {

Tensor uniform_init(const Shape& shape, double bound, Rng& rng) {
    std::vector<double> v(static_cast<size_t>(numel(shape)));
    for (double& x : v) x = rng.uniform(-bound, bound);
    return Tensor::from_data(shape, std::move(v));
}

void require_rank4_channels(const std::string& name, const Tensor& t, i64 c) {
    if (t.rank() != 4 || t.dim(1) != c)
        throw ShapeError(name + ": expects B x " + std::to_string(c) + " x H x W, got " +
                         shape_str(t.shape()));
}

}  // namespace

Conv2dBlock::Conv2dBlock(std::string name, i64 c_in, i64 c_out, i64 k, int stride, int pad, Rng& rng)
    : Block(std::move(name)), c_in_(c_in), c_out_(c_out), stride_(stride), pad_(pad) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(c_in * k * k));
    weight_ = Param(name_ + ".weight", uniform_init({c_out, c_in, k, k}, bound, rng));
    // Biases get the same fan-in noise as weights. Zero biases would leave every
    // decoder stage downstream of the zero-mean GP init sitting exactly on the
    // relu kink, where no gradient passes.
    bias_ = Param(name_ + ".bias", uniform_init({c_out}, bound, rng));
}

LayerMoments Conv2dBlock::apply(const LayerMoments& in, ForwardMode, NetTrace*) {
    require_rank4_channels(name_, in.mean, c_in_);
    LayerMoments out;
    out.mean = add(conv2d(in.mean, use(weight_), stride_, pad_), reshape(use(bias_), {1, c_out_, 1, 1}));
    return out;
}

ConvT2dBlock::ConvT2dBlock(std::string name, i64 c_in, i64 c_out, i64 k, int stride, int pad,
                           int out_pad, Rng& rng)
    : Block(std::move(name)), c_in_(c_in), c_out_(c_out), stride_(stride), pad_(pad), out_pad_(out_pad) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(c_in * k * k));
    weight_ = Param(name_ + ".weight", uniform_init({c_in, c_out, k, k}, bound, rng));
    bias_ = Param(name_ + ".bias", uniform_init({c_out}, bound, rng));
}

LayerMoments ConvT2dBlock::apply(const LayerMoments& in, ForwardMode, NetTrace*) {
    require_rank4_channels(name_, in.mean, c_in_);
    LayerMoments out;
    out.mean = add(conv_transpose2d(in.mean, use(weight_), stride_, pad_, out_pad_),
                   reshape(use(bias_), {1, c_out_, 1, 1}));
    return out;
}

LayerMoments ReluBlock::apply(const LayerMoments& in, ForwardMode, NetTrace*) {
    LayerMoments out;
    out.mean = relu(in.mean);
    return out;
}

LayerMoments FlattenBlock::apply(const LayerMoments& in, ForwardMode, NetTrace*) {
    if (in.mean.rank() < 2) throw ShapeError(name_ + ": needs a batch dimension, got " + shape_str(in.mean.shape()));
    const i64 b = in.mean.dim(0);
    const Shape flat{b, in.mean.size() / b};
    LayerMoments out;
    out.mean = reshape(in.mean, flat);
    if (in.stochastic()) out.var = reshape(in.var, flat);
    return out;
}

ReshapeBlock::ReshapeBlock(std::string name, Shape tail) : Block(std::move(name)), tail_(std::move(tail)) {}

LayerMoments ReshapeBlock::apply(const LayerMoments& in, ForwardMode, NetTrace*) {
    if (in.mean.rank() < 1) throw ShapeError(name_ + ": needs a batch dimension");
    const i64 b = in.mean.dim(0);
    Shape target{b};
    target.insert(target.end(), tail_.begin(), tail_.end());
    if (numel(target) != in.mean.size())
        throw ShapeError(name_ + ": cannot reshape " + shape_str(in.mean.shape()) + " to " +
                         shape_str(target));
    LayerMoments out;
    out.mean = reshape(in.mean, target);
    if (in.stochastic()) out.var = reshape(in.var, target);
    return out;
}

DenseBlock::DenseBlock(std::string name, i64 d_in, i64 d_out, Rng& rng)
    : Block(std::move(name)), d_in_(d_in), d_out_(d_out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
    weight_ = Param(name_ + ".weight", uniform_init({d_in, d_out}, bound, rng));
    bias_ = Param(name_ + ".bias", uniform_init({d_out}, bound, rng));
}

LayerMoments DenseBlock::apply(const LayerMoments& in, ForwardMode, NetTrace*) {
    if (in.mean.rank() != 2 || in.mean.dim(1) != d_in_)
        throw ShapeError(name_ + ": expects B x " + std::to_string(d_in_) + ", got " +
                         shape_str(in.mean.shape()));
    LayerMoments out;
    out.mean = add(matmul(in.mean, use(weight_)), reshape(use(bias_), {1, d_out_}));
    return out;
}

StandardizeBlock::StandardizeBlock(std::string name, i64 dim) : Block(std::move(name)), dim_(dim) {
    count_ = Param(name_ + ".count", Tensor::zeros({1}));
    sum_ = Param(name_ + ".sum", Tensor::zeros({dim}));
    sumsq_ = Param(name_ + ".sumsq", Tensor::zeros({dim}));
    frozen_ = Param(name_ + ".frozen", Tensor::zeros({1}));
}

std::pair<Tensor, Tensor> StandardizeBlock::moments() const {
    const double n = count_.value.at(0);
    std::vector<double> mu(static_cast<size_t>(dim_), 0.0), sd(static_cast<size_t>(dim_), 1.0);
    if (n > 0.0) {
        for (i64 d = 0; d < dim_; ++d) {
            const double m = sum_.value.at(d) / n;
            const double v = sumsq_.value.at(d) / n - m * m;
            mu[static_cast<size_t>(d)] = m;
            sd[static_cast<size_t>(d)] = std::sqrt(std::max(v, 1e-8));
        }
    }
    return {Tensor::from_data({1, dim_}, std::move(mu)), Tensor::from_data({1, dim_}, std::move(sd))};
}

LayerMoments StandardizeBlock::apply(const LayerMoments& in, ForwardMode, NetTrace*) {
    if (in.mean.rank() != 2 || in.mean.dim(1) != dim_)
        throw ShapeError(name_ + ": expects B x " + std::to_string(dim_) + ", got " +
                         shape_str(in.mean.shape()));
    if (!frozen()) {
        const i64 b = in.mean.dim(0);
        double* s = sum_.value.mutable_data();
        double* s2 = sumsq_.value.mutable_data();
        const double* x = in.mean.data();
        for (i64 r = 0; r < b; ++r)
            for (i64 d = 0; d < dim_; ++d) {
                const double v = x[r * dim_ + d];
                s[d] += v;
                s2[d] += v * v;
            }
        count_.value.mutable_data()[0] += static_cast<double>(b);
    }
    auto [mu, sd] = moments();
    LayerMoments out;
    out.mean = div(sub(in.mean, mu), sd);
    if (in.stochastic()) out.var = div(in.var, square(sd));
    return out;
}

LayerMoments GPKANBlock::apply(const LayerMoments& in, ForwardMode mode, NetTrace* trace) {
    LayerMoments x;
    x.mean = in.mean;
    if (mode == ForwardMode::MomentMatched) x.var = in.var;
    LayerForward f = layer.forward(x);
    if (trace) trace->gp.push_back({name_, f});
    LayerMoments out;
    out.mean = f.out.mean;
    if (mode == ForwardMode::MomentMatched) out.var = f.out.var;
    return out;
}

Block& Network::add(std::unique_ptr<Block> b) {
    blocks_.push_back(std::move(b));
    return *blocks_.back();
}

NetTrace Network::forward(const Tensor& input, ForwardMode mode) {
    NetTrace t;
    LayerMoments cur;
    cur.mean = input;
    for (auto& b : blocks_) cur = b->apply(cur, mode, &t);
    t.out = cur;
    return t;
}

Tensor Network::kl() {
    Tensor total;
    for (auto& b : blocks_)
        if (GPKANLayer* g = b->gp()) total = total.defined() ? svgpkan::add(total, g->kl()) : g->kl();
    return total.defined() ? total : Tensor::scalar(0.0);
}

std::vector<Param*> Network::params() {
    std::vector<Param*> out;
    for (auto& b : blocks_)
        for (Param* p : b->params()) out.push_back(p);
    return out;
}

std::vector<Param*> Network::state_params() {
    std::vector<Param*> out;
    for (auto& b : blocks_)
        for (Param* p : b->state_params()) out.push_back(p);
    return out;
}

std::vector<GPKANLayer*> Network::gp_layers() {
    std::vector<GPKANLayer*> out;
    for (auto& b : blocks_)
        if (GPKANLayer* g = b->gp()) out.push_back(g);
    return out;
}

void Network::freeze_standardize() {
    for (auto& b : blocks_)
        if (auto* s = dynamic_cast<StandardizeBlock*>(b.get())) s->freeze();
}

StudyANet build_study_a_net(i64 m) {
    StudyANet net{Network("af"), Network("ag")};

    auto input_layer = [&](Network& n, const std::string& name, i64 d_in, i64 d_out) -> GPKANBlock& {
        auto& b = static_cast<GPKANBlock&>(n.add(std::make_unique<GPKANBlock>(name, d_in, d_out, m)));
        // the unit input square: tighter lengthscale so M points resolve it
        double* ll = b.layer.log_len_.value.mutable_data();
        for (i64 i = 0; i < b.layer.log_len_.value.size(); ++i) ll[i] = std::log(0.25);
        b.layer.init_inducing_uniform(0.0, 1.0);
        return b;
    };

    // Hidden activations are standardized (stats freeze after the first
    // training epoch) so the [-2,2] inducing span of the deeper layers keeps
    // covering them while the first layer's signal variances move.
    input_layer(net.mean_net, "af.0.gp", 2, 5);
    net.mean_net.add(std::make_unique<StandardizeBlock>("af.1.std", 5));
    net.mean_net.add(std::make_unique<GPKANBlock>("af.2.gp", 5, 5, m));
    net.mean_net.add(std::make_unique<StandardizeBlock>("af.3.std", 5));
    net.mean_net.add(std::make_unique<GPKANBlock>("af.4.gp", 5, 2, m));

    auto& g = input_layer(net.noise_net, "ag.0.gp", 2, 1);
    g.layer.bias_.value.mutable_data()[0] = std::log(0.01);
    return net;
}

Network build_study_b_net(Rng& rng, i64 grid, i64 m, i64 proj, i64 code) {
    if (grid % 4 != 0 || grid < 8) throw ShapeError("study b grid must be a multiple of 4, >= 8");
    const i64 g4 = grid / 4;
    const i64 flat = 48 * g4 * g4;

    Network net("b");
    net.add(std::make_unique<Conv2dBlock>("b.0.conv", 1, 24, 3, 2, 1, rng));
    net.add(std::make_unique<ReluBlock>("b.1.relu"));
    net.add(std::make_unique<Conv2dBlock>("b.2.conv", 24, 48, 3, 2, 1, rng));
    net.add(std::make_unique<ReluBlock>("b.3.relu"));
    net.add(std::make_unique<FlattenBlock>("b.4.flatten"));
    net.add(std::make_unique<DenseBlock>("b.5.dense", flat, proj, rng));
    net.add(std::make_unique<StandardizeBlock>("b.6.standardize", proj));
    net.add(std::make_unique<GPKANBlock>("b.7.gp", proj, code, m));
    net.add(std::make_unique<GPKANBlock>("b.8.gp", code, proj, m));
    net.add(std::make_unique<DenseBlock>("b.9.dense", proj, flat, rng));
    net.add(std::make_unique<ReshapeBlock>("b.10.reshape", Shape{48, g4, g4}));
    net.add(std::make_unique<ConvT2dBlock>("b.11.convt", 48, 24, 3, 2, 1, 1, rng));
    net.add(std::make_unique<ReluBlock>("b.12.relu"));
    net.add(std::make_unique<ConvT2dBlock>("b.13.convt", 24, 1, 3, 2, 1, 1, rng));
    return net;
}

Network build_study_c_net(Rng& rng, i64 m, bool shared_z) {
    Network net("c");
    net.add(std::make_unique<Conv2dBlock>("c.0.conv", 1, 8, 3, 2, 1, rng));
    net.add(std::make_unique<ReluBlock>("c.1.relu"));
    net.add(std::make_unique<Conv2dBlock>("c.2.conv", 8, 16, 3, 2, 1, rng));
    net.add(std::make_unique<ReluBlock>("c.3.relu"));
    net.add(std::make_unique<FlattenBlock>("c.4.flatten"));
    net.add(std::make_unique<StandardizeBlock>("c.5.standardize", 784));
    net.add(std::make_unique<GPKANBlock>("c.6.gp", 784, 6, m, shared_z));
    net.add(std::make_unique<DenseBlock>("c.7.dense", 6, 784, rng));
    net.add(std::make_unique<ReshapeBlock>("c.8.reshape", Shape{16, 7, 7}));
    net.add(std::make_unique<ConvT2dBlock>("c.9.convt", 16, 8, 3, 2, 1, 1, rng));
    net.add(std::make_unique<ReluBlock>("c.10.relu"));
    net.add(std::make_unique<ConvT2dBlock>("c.11.convt", 8, 1, 3, 2, 1, 1, rng));
    return net;
}

}  // namespace svgpkan
