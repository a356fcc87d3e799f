#include "svgpkan/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "dense_eig.hpp"

namespace svgpkan {

double KernelParams::signal_variance() const { return std::exp(log_signal_variance); }
double KernelParams::lengthscale() const { return std::exp(log_lengthscale); }

double k_se(double x, double xp, const KernelParams& p) {
    const double l = p.lengthscale();
    const double d = x - xp;
    return p.signal_variance() * std::exp(-0.5 * d * d / (l * l));
}

Tensor gram_cross(const Tensor& x, const Tensor& z, const KernelParams& p) {
    const i64 n = x.size(), m = z.size();
    Tensor out = Tensor::zeros({n, m});
    double* o = out.mutable_data();
    for (i64 i = 0; i < n; ++i)
        for (i64 j = 0; j < m; ++j) o[i * m + j] = k_se(x.at(i), z.at(j), p);
    return out;
}

Tensor gram(const Tensor& z, const KernelParams& p) {
    const i64 m = z.size();
    Tensor out = Tensor::zeros({m, m});
    double* o = out.mutable_data();
    for (i64 i = 0; i < m; ++i) {
        o[i * m + i] = p.signal_variance();
        for (i64 j = 0; j < i; ++j) {
            const double v = k_se(z.at(i), z.at(j), p);
            o[i * m + j] = v;
            o[j * m + i] = v;
        }
    }
    return out;
}

namespace {

void check_var(double var, const char* op) {
    if (var < 0.0 || !std::isfinite(var))
        throw std::domain_error(std::string(op) + ": input variance must be finite and >= 0, got " +
                                std::to_string(var));
}

}  // namespace

Tensor psi1(double mu, double var, const Tensor& z, const KernelParams& p) {
    check_var(var, "psi1");
    const double sf2 = p.signal_variance();
    const double l2 = p.lengthscale() * p.lengthscale();
    const double denom = l2 + var;
    const double scale = sf2 * std::sqrt(l2 / denom);
    const i64 m = z.size();
    Tensor out = Tensor::zeros({m});
    double* o = out.mutable_data();
    for (i64 i = 0; i < m; ++i) {
        const double d = z.at(i) - mu;
        o[i] = scale * std::exp(-0.5 * d * d / denom);
    }
    return out;
}

Tensor psi2(double mu, double var, const Tensor& z, const KernelParams& p) {
    check_var(var, "psi2");
    const double sf2 = p.signal_variance();
    const double l2 = p.lengthscale() * p.lengthscale();
    const double denom = l2 + 2.0 * var;
    const double scale = sf2 * sf2 * std::sqrt(l2 / denom);
    const i64 m = z.size();
    Tensor out = Tensor::zeros({m, m});
    double* o = out.mutable_data();
    for (i64 i = 0; i < m; ++i)
        for (i64 j = 0; j <= i; ++j) {
            const double dz = z.at(i) - z.at(j);
            const double zbar = 0.5 * (z.at(i) + z.at(j));
            const double db = zbar - mu;
            const double v = scale * std::exp(-0.25 * dz * dz / l2 - db * db / denom);
            o[i * m + j] = v;
            o[j * m + i] = v;
        }
    return out;
}

const GaussHermiteRule& gauss_hermite(int h) {
    if (h < 1 || h > 200) throw std::domain_error("gauss_hermite: order must be in [1, 200]");
    static std::map<int, GaussHermiteRule> cache;
    auto it = cache.find(h);
    if (it != cache.end()) return it->second;

    // Golub-Welsch: Jacobi matrix of the (physicists') Hermite recurrence has
    // zero diagonal and off-diagonal sqrt(i/2); weights are sqrt(pi) v0^2.
    std::vector<double> J(static_cast<size_t>(h) * h, 0.0);
    for (int i = 1; i < h; ++i) {
        const double b = std::sqrt(static_cast<double>(i) / 2.0);
        J[static_cast<size_t>(i * h + i - 1)] = b;
        J[static_cast<size_t>((i - 1) * h + i)] = b;
    }
    std::vector<double> vals, vecs;
    detail::jacobi_eigensymm(J, h, vals, vecs);

    std::vector<int> order(static_cast<size_t>(h));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return vals[static_cast<size_t>(a)] < vals[static_cast<size_t>(b)]; });

    GaussHermiteRule rule;
    const double sqrt_pi = std::sqrt(M_PI);
    for (int k = 0; k < h; ++k) {
        const int j = order[static_cast<size_t>(k)];
        rule.nodes.push_back(vals[static_cast<size_t>(j)]);
        const double v0 = vecs[static_cast<size_t>(0 * h + j)];
        rule.weights.push_back(sqrt_pi * v0 * v0);
    }
    return cache.emplace(h, std::move(rule)).first->second;
}

double gauss_hermite_expect(const std::function<double(double)>& f, double mu, double var, int h) {
    check_var(var, "gauss_hermite_expect");
    const GaussHermiteRule& rule = gauss_hermite(h);
    const double s = std::sqrt(2.0 * var);
    double acc = 0.0;
    for (int i = 0; i < h; ++i) acc += rule.weights[static_cast<size_t>(i)] * f(mu + s * rule.nodes[static_cast<size_t>(i)]);
    return acc / std::sqrt(M_PI);
}

Tensor psi1_quadrature(double mu, double var, const Tensor& z, const KernelParams& p, int h) {
    check_var(var, "psi1_quadrature");
    const i64 m = z.size();
    Tensor out = Tensor::zeros({m});
    double* o = out.mutable_data();
    for (i64 i = 0; i < m; ++i) {
        const double zi = z.at(i);
        o[i] = gauss_hermite_expect([&](double x) { return k_se(x, zi, p); }, mu, var, h);
    }
    return out;
}

Tensor psi2_quadrature(double mu, double var, const Tensor& z, const KernelParams& p, int h) {
    check_var(var, "psi2_quadrature");
    const i64 m = z.size();
    Tensor out = Tensor::zeros({m, m});
    double* o = out.mutable_data();
    for (i64 i = 0; i < m; ++i)
        for (i64 j = 0; j <= i; ++j) {
            const double zi = z.at(i), zj = z.at(j);
            const double v = gauss_hermite_expect(
                [&](double x) { return k_se(x, zi, p) * k_se(x, zj, p); }, mu, var, h);
            o[i * m + j] = v;
            o[j * m + i] = v;
        }
    return out;
}

}  // namespace svgpkan
