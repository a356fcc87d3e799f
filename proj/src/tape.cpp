#include "svgpkan/tape.hpp"

namespace svgpkan {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& t) : prev_(g_active_tape) { g_active_tape = &t; }
TapeScope::~TapeScope() { g_active_tape = prev_; }

NoGradGuard::NoGradGuard() : prev_(g_active_tape) { g_active_tape = nullptr; }
NoGradGuard::~NoGradGuard() { g_active_tape = prev_; }

int Tape::record(Shape out_shape, BackwardFn fn) {
    nodes_.push_back(Node{std::move(out_shape), std::move(fn)});
    return static_cast<int>(nodes_.size()) - 1;
}

Tensor Tape::leaf(const Param& p) {
    auto it = param_nodes_.find(&p);
    Tensor t = p.value;
    if (it != param_nodes_.end()) {
        t.set_node(it->second);
        return t;
    }
    int id = record(p.value.shape(), nullptr);
    param_nodes_[&p] = id;
    param_shapes_[&p] = p.value.shape();
    t.set_node(id);
    return t;
}

void Tape::accumulate(int node, const Tensor& grad) {
    if (node < 0) return;
    Tensor& slot = grads_[static_cast<size_t>(node)];
    if (grad.shape() != nodes_[static_cast<size_t>(node)].shape)
        throw ShapeError("gradient shape " + shape_str(grad.shape()) + " does not match node output " +
                         shape_str(nodes_[static_cast<size_t>(node)].shape));
    if (!slot.defined()) {
        slot = grad.clone();
        return;
    }
    double* d = slot.mutable_data();
    const double* g = grad.data();
    for (i64 i = 0; i < slot.size(); ++i) d[i] += g[i];
}

void Tape::backward(const Tensor& loss) {
    if (!loss.attached()) throw std::runtime_error("backward: loss is not attached to a tape");
    if (loss.size() != 1) throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    if (ran_backward_) throw std::runtime_error("backward: tape already consumed");
    ran_backward_ = true;

    NoGradGuard ng;
    grads_.assign(nodes_.size(), Tensor());
    grads_[static_cast<size_t>(loss.node())] = Tensor::full(loss.shape(), 1.0);
    for (int i = loss.node(); i >= 0; --i) {
        const Node& n = nodes_[static_cast<size_t>(i)];
        if (grads_[static_cast<size_t>(i)].defined() && n.backward)
            n.backward(grads_[static_cast<size_t>(i)], *this);
    }
}

Tensor Tape::grad(const Param& p) const {
    auto it = param_nodes_.find(&p);
    if (it == param_nodes_.end() || !ran_backward_ ||
        !grads_[static_cast<size_t>(it->second)].defined())
        return Tensor::zeros(p.value.shape());
    return grads_[static_cast<size_t>(it->second)];
}

bool Tape::has_grad(const Param& p) const {
    auto it = param_nodes_.find(&p);
    return it != param_nodes_.end() && ran_backward_ &&
           grads_[static_cast<size_t>(it->second)].defined();
}

Tensor use(const Param& p) {
    if (Tape* t = active_tape()) return t->leaf(p);
    return p.value;
}

}  // namespace svgpkan
