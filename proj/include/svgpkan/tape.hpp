#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "svgpkan/tensor.hpp"

namespace svgpkan {

class Tape;

// Named trainable value. Ops see it through use(), which registers one leaf
// node per (tape, param) pair so repeated use accumulates into one gradient.
struct Param {
    std::string name;
    Tensor value;

    Param() = default;
    Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {}
};

// Reverse-mode tape over tensor-level nodes. Nodes are appended in execution
// order; backward() replays them once, newest first, accumulating gradients
// by summation. One tape per training step; discard after use.
class Tape {
  public:
    using BackwardFn = std::function<void(const Tensor& grad_out, Tape&)>;

    int record(Shape out_shape, BackwardFn fn);
    Tensor leaf(const Param& p);

    // loss must be a scalar attached to this tape.
    void backward(const Tensor& loss);

    void accumulate(int node, const Tensor& grad);
    Tensor grad(const Param& p) const;  // zeros if the param never entered the graph
    bool has_grad(const Param& p) const;

    size_t num_nodes() const { return nodes_.size(); }

  private:
    struct Node {
        Shape shape;
        BackwardFn backward;
    };
    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    std::unordered_map<const Param*, int> param_nodes_;
    std::unordered_map<const Param*, Shape> param_shapes_;
    bool ran_backward_ = false;
};

Tape* active_tape();

// Installs a tape as the thread-local recording target.
class TapeScope {
  public:
    explicit TapeScope(Tape& t);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

  private:
    Tape* prev_;
};

// Suspends recording (used inside backward closures and for evaluation).
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    Tape* prev_;
};

Tensor use(const Param& p);

}  // namespace svgpkan
