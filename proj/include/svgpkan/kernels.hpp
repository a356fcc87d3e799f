#pragma once

#include <functional>
#include <vector>

#include "svgpkan/tensor.hpp"

namespace svgpkan {

struct KernelParams {
    double log_signal_variance = 0.0;
    double log_lengthscale = 0.0;

    double signal_variance() const;
    double lengthscale() const;
};

// Squared exponential kernel k(x, x') = sf2 * exp(-(x-x')^2 / (2 l^2)).
double k_se(double x, double xp, const KernelParams& p);

// Cross-covariance k(x_i, z_j): n x m.
Tensor gram_cross(const Tensor& x, const Tensor& z, const KernelParams& p);
// Symmetric Gram k(z_i, z_j): m x m.
Tensor gram(const Tensor& z, const KernelParams& p);

// Psi statistics for x ~ N(mu, var), var >= 0 (throws std::domain_error
// otherwise). psi1[m] = E[k(x, z_m)], psi2[m,m'] = E[k(x, z_m) k(x, z_m')].
Tensor psi1(double mu, double var, const Tensor& z, const KernelParams& p);
Tensor psi2(double mu, double var, const Tensor& z, const KernelParams& p);

// Gauss-Hermite rule (physicists' weight exp(-t^2)), nodes ascending,
// computed by Golub-Welsch on the Jacobi matrix and cached per order.
struct GaussHermiteRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};
const GaussHermiteRule& gauss_hermite(int h);

// E[f(x)] for x ~ N(mu, var) via the substitution x = mu + sqrt(2 var) t.
double gauss_hermite_expect(const std::function<double(double)>& f, double mu, double var, int h);

// Quadrature fallbacks for the psi statistics.
Tensor psi1_quadrature(double mu, double var, const Tensor& z, const KernelParams& p, int h = 20);
Tensor psi2_quadrature(double mu, double var, const Tensor& z, const KernelParams& p, int h = 20);

}  // namespace svgpkan
