#pragma once

#include "svgpkan/ops.hpp"

namespace svgpkan {

// Pointwise negative log density of y under N(mean, var + noise_var).
// All arguments broadcast together; the result keeps the broadcast shape.
Tensor gaussian_nll(const Tensor& y, const Tensor& mean, const Tensor& var,
                    const Tensor& noise_var);

// Expected pointwise negative log density when both the mean f and the log
// noise g carry Gaussian posteriors N(mean_f, var_f), N(mean_g, var_g):
//
//   E[-log N(y; f, exp(g))]
//     = 0.5 log 2pi + 0.5 mean_g
//     + 0.5 ((y - mean_f)^2 + var_f) exp(var_g / 2 - mean_g)
//
// The exp term is E[exp(-g)] for lognormal exp(-g), so the expectation is
// exact, not a second order approximation.
Tensor hetero_expected_nll(const Tensor& y, const Tensor& mean_f, const Tensor& var_f,
                           const Tensor& mean_g, const Tensor& var_g);

// Minibatch training objective. Scales the summed pointwise nll up to the
// full dataset, so its expectation over uniformly drawn batches equals the
// full batch objective:
//
//   n_total / batch * sum(nll) + kl_weight * kl
Tensor negative_elbo(const Tensor& nll, double n_total, double batch,
                     const Tensor& kl, double kl_weight);

// Reconstruction objective: element mean of squared error plus weighted KL.
Tensor mse_plus_kl(const Tensor& pred, const Tensor& target, const Tensor& kl,
                   double kl_weight);

}  // namespace svgpkan
