#pragma once

#include <memory>
#include <string>
#include <vector>

#include "svgpkan/rng.hpp"
#include "svgpkan/svgp.hpp"

namespace svgpkan {

// DeterministicMean propagates means only end to end. MomentMatched carries
// Gaussian moments through GP layers; surrounding conv/relu/dense blocks
// still consume means only, so uncertainty is read at the GP blocks.
enum class ForwardMode { DeterministicMean, MomentMatched };

struct GpTrace {
    std::string block;
    LayerForward detail;
};

// Output moments plus the per-GP-block forward details, in network order.
struct NetTrace {
    LayerMoments out;
    std::vector<GpTrace> gp;
};

class Block {
  public:
    explicit Block(std::string name) : name_(std::move(name)) {}
    virtual ~Block() = default;
    Block(const Block&) = delete;
    Block& operator=(const Block&) = delete;

    virtual LayerMoments apply(const LayerMoments& in, ForwardMode mode, NetTrace* trace) = 0;
    virtual std::vector<Param*> params() { return {}; }
    // everything a checkpoint must persist; trainables plus frozen state
    virtual std::vector<Param*> state_params() { return params(); }
    virtual GPKANLayer* gp() { return nullptr; }
    const std::string& name() const { return name_; }

  protected:
    std::string name_;
};

// B x Cin x H x W -> B x Cout x Ho x Wo. Means only.
class Conv2dBlock : public Block {
  public:
    Conv2dBlock(std::string name, i64 c_in, i64 c_out, i64 k, int stride, int pad, Rng& rng);
    LayerMoments apply(const LayerMoments& in, ForwardMode mode, NetTrace* trace) override;
    std::vector<Param*> params() override { return {&weight_, &bias_}; }

    Param weight_, bias_;

  private:
    i64 c_in_, c_out_;
    int stride_, pad_;
};

// Adjoint layout: input channels c_in index weight dim 0. Means only.
class ConvT2dBlock : public Block {
  public:
    ConvT2dBlock(std::string name, i64 c_in, i64 c_out, i64 k, int stride, int pad, int out_pad,
                 Rng& rng);
    LayerMoments apply(const LayerMoments& in, ForwardMode mode, NetTrace* trace) override;
    std::vector<Param*> params() override { return {&weight_, &bias_}; }

    Param weight_, bias_;

  private:
    i64 c_in_, c_out_;
    int stride_, pad_, out_pad_;
};

class ReluBlock : public Block {
  public:
    using Block::Block;
    LayerMoments apply(const LayerMoments& in, ForwardMode mode, NetTrace* trace) override;
};

// B x ... -> B x prod(rest). Variance is reindexed alongside the mean.
class FlattenBlock : public Block {
  public:
    using Block::Block;
    LayerMoments apply(const LayerMoments& in, ForwardMode mode, NetTrace* trace) override;
};

// B x D -> B x tail. Variance is reindexed alongside the mean.
class ReshapeBlock : public Block {
  public:
    ReshapeBlock(std::string name, Shape tail);
    LayerMoments apply(const LayerMoments& in, ForwardMode mode, NetTrace* trace) override;

  private:
    Shape tail_;
};

// B x Din -> B x Dout, x W + b. Means only.
class DenseBlock : public Block {
  public:
    DenseBlock(std::string name, i64 d_in, i64 d_out, Rng& rng);
    LayerMoments apply(const LayerMoments& in, ForwardMode mode, NetTrace* trace) override;
    std::vector<Param*> params() override { return {&weight_, &bias_}; }

    Param weight_, bias_;

  private:
    i64 d_in_, d_out_;
};

// Fixed affine feature map from running statistics: (x - mu) / sd per
// feature. Statistics accumulate on every apply until freeze(); the study
// loops freeze after the first epoch. Feeding the same batch repeatedly
// leaves the normalization unchanged. Variance rescales by 1/sd^2.
class StandardizeBlock : public Block {
  public:
    StandardizeBlock(std::string name, i64 dim);
    LayerMoments apply(const LayerMoments& in, ForwardMode mode, NetTrace* trace) override;
    std::vector<Param*> state_params() override { return {&count_, &sum_, &sumsq_, &frozen_}; }

    void freeze() { frozen_.value.mutable_data()[0] = 1.0; }
    bool frozen() const { return frozen_.value.at(0) != 0.0; }
    // current per-feature moments (mu, sd); identity before any data
    std::pair<Tensor, Tensor> moments() const;

  private:
    i64 dim_;
    Param count_, sum_, sumsq_, frozen_;
};

class GPKANBlock : public Block {
  public:
    GPKANBlock(std::string name, i64 d_in, i64 d_out, i64 m, bool shared_z = false)
        : Block(name), layer(d_in, d_out, m, name, shared_z) {}
    LayerMoments apply(const LayerMoments& in, ForwardMode mode, NetTrace* trace) override;
    std::vector<Param*> params() override { return layer.params(); }
    GPKANLayer* gp() override { return &layer; }

    GPKANLayer layer;
};

// Sequential container. Exactly the GP blocks contribute KL.
class Network {
  public:
    explicit Network(std::string name) : name_(std::move(name)) {}

    Block& add(std::unique_ptr<Block> b);
    NetTrace forward(const Tensor& input, ForwardMode mode);
    Tensor kl();  // scalar; zero when the network has no GP blocks

    std::vector<Param*> params();
    std::vector<Param*> state_params();
    std::vector<GPKANLayer*> gp_layers();
    void freeze_standardize();

    i64 block_count() const { return static_cast<i64>(blocks_.size()); }
    Block& block(i64 i) { return *blocks_.at(static_cast<size_t>(i)); }
    const std::string& name() const { return name_; }

  private:
    std::string name_;
    std::vector<std::unique_ptr<Block>> blocks_;
};

// Heteroscedastic pair: the mean net maps (x, y) coordinates to the two
// velocity components, the noise net to one log noise variance.
struct StudyANet {
    Network mean_net;
    Network noise_net;
};

// GP stack [2 -> 5 -> 5 -> 2] plus noise head [2 -> 1], M inducing points
// per edge. First-layer inducing points cover the unit input square; the
// noise head's output offset starts at log(0.01).
StudyANet build_study_a_net(i64 m = 20);

// Conv encoder (1 -> 24 -> 48 channels, stride 2 twice), dense projection
// to proj features, standardize, GP code bottleneck [proj -> code -> proj],
// dense expansion, mirrored deconv decoder. grid must be divisible by 4.
Network build_study_b_net(Rng& rng, i64 grid = 64, i64 m = 20, i64 proj = 48, i64 code = 16);

// Conv encoder (1 -> 8 -> 16 channels, 28 -> 7 spatial), standardize the
// 784 flat features, GP bottleneck [784 -> 6], dense decoder back to 28x28.
Network build_study_c_net(Rng& rng, i64 m = 20, bool shared_z = false);

}  // namespace svgpkan
