#include "svgpkan/likelihoods.hpp"

#include <cmath>
#include <stdexcept>

namespace svgpkan {

namespace {
const double kLog2Pi = std::log(2.0 * 3.14159265358979323846);
}

Tensor gaussian_nll(const Tensor& y, const Tensor& mean, const Tensor& var,
                    const Tensor& noise_var) {
    Tensor v = add(var, noise_var);
    Tensor quad = div(square(sub(y, mean)), mul(v, Tensor::scalar(2.0)));
    Tensor norm = mul(add(log(v), Tensor::scalar(kLog2Pi)), Tensor::scalar(0.5));
    return add(norm, quad);
}

Tensor hetero_expected_nll(const Tensor& y, const Tensor& mean_f, const Tensor& var_f,
                           const Tensor& mean_g, const Tensor& var_g) {
    Tensor half = Tensor::scalar(0.5);
    Tensor spread = add(square(sub(y, mean_f)), var_f);
    Tensor inv_noise = exp(sub(mul(var_g, half), mean_g));
    Tensor out = mul(add(Tensor::scalar(kLog2Pi), mean_g), half);
    return add(out, mul(mul(spread, inv_noise), half));
}

Tensor negative_elbo(const Tensor& nll, double n_total, double batch,
                     const Tensor& kl, double kl_weight) {
    if (batch <= 0.0 || n_total <= 0.0)
        throw std::invalid_argument("negative_elbo: n_total and batch must be positive");
    Tensor data = mul(sum(nll), Tensor::scalar(n_total / batch));
    return add(data, mul(kl, Tensor::scalar(kl_weight)));
}

Tensor mse_plus_kl(const Tensor& pred, const Tensor& target, const Tensor& kl,
                   double kl_weight) {
    return add(mean(square(sub(pred, target))), mul(kl, Tensor::scalar(kl_weight)));
}

}  // namespace svgpkan
