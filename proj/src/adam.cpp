#include "svgpkan/adam.hpp"

#include <cmath>

namespace svgpkan {

Adam::Adam(std::vector<Param*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (Param* p : params_) {
        m_.push_back(Tensor::zeros(p->value.shape()));
        v_.push_back(Tensor::zeros(p->value.shape()));
    }
}

void Adam::step(const std::vector<Tensor>& grads) {
    if (grads.size() != params_.size())
        throw std::runtime_error("adam: got " + std::to_string(grads.size()) + " grads for " +
                                 std::to_string(params_.size()) + " params");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        Param& p = *params_[i];
        const Tensor& g = grads[i];
        if (g.shape() != p.value.shape())
            throw ShapeError("adam: grad shape " + shape_str(g.shape()) + " vs param " + shape_str(p.value.shape()) +
                             " (" + p.name + ")");
        double* mp = m_[i].mutable_data();
        double* vp = v_[i].mutable_data();
        double* w = p.value.mutable_data();
        const double* gp = g.data();
        for (i64 j = 0; j < g.size(); ++j) {
            mp[j] = cfg_.beta1 * mp[j] + (1.0 - cfg_.beta1) * gp[j];
            vp[j] = cfg_.beta2 * vp[j] + (1.0 - cfg_.beta2) * gp[j] * gp[j];
            const double mhat = mp[j] / bc1;
            const double vhat = vp[j] / bc2;
            w[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace svgpkan
