#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <doctest.h>

#include "svgpkan/ops.hpp"
#include "svgpkan/tape.hpp"

namespace testutil {

using svgpkan::i64;
using svgpkan::Param;
using svgpkan::Shape;
using svgpkan::Tensor;

inline Tensor randt(const Shape& shape, std::mt19937& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(static_cast<size_t>(svgpkan::numel(shape)));
    for (double& x : v) x = d(rng);
    return Tensor::from_data(shape, std::move(v));
}

inline double rel_err(double got, double want) {
    return std::abs(got - want) / std::max({std::abs(got), std::abs(want), 1e-2});
}

// Central finite differences against tape gradients. loss_fn must read the
// params through use() so it both records under a tape and evaluates plainly.
inline void check_grads(const std::function<Tensor()>& loss_fn, std::vector<Param*> params,
                        double eps = 1e-5, double tol = 1e-4) {
    svgpkan::Tape tape;
    Tensor loss;
    {
        svgpkan::TapeScope ts(tape);
        loss = loss_fn();
    }
    tape.backward(loss);
    for (Param* p : params) {
        Tensor g = tape.grad(*p);
        REQUIRE(g.shape() == p->value.shape());
        for (i64 i = 0; i < p->value.size(); ++i) {
            const double orig = p->value.at(i);
            p->value.mutable_data()[i] = orig + eps;
            const double up = loss_fn().item();
            p->value.mutable_data()[i] = orig - eps;
            const double dn = loss_fn().item();
            p->value.mutable_data()[i] = orig;
            const double fd = (up - dn) / (2.0 * eps);
            const double an = g.at(i);
            INFO("param " << p->name << " elem " << i << " fd=" << fd << " analytic=" << an);
            CHECK(rel_err(an, fd) < tol);
        }
    }
}

// Gauss-Jordan inverse, used as an independent linear-algebra oracle.
inline std::vector<double> dense_inverse(std::vector<double> a, i64 n) {
    std::vector<double> inv(static_cast<size_t>(n * n), 0.0);
    for (i64 i = 0; i < n; ++i) inv[static_cast<size_t>(i * n + i)] = 1.0;
    for (i64 col = 0; col < n; ++col) {
        i64 piv = col;
        for (i64 r = col + 1; r < n; ++r)
            if (std::abs(a[static_cast<size_t>(r * n + col)]) > std::abs(a[static_cast<size_t>(piv * n + col)]))
                piv = r;
        if (a[static_cast<size_t>(piv * n + col)] == 0.0) throw std::runtime_error("dense_inverse: singular");
        if (piv != col)
            for (i64 c = 0; c < n; ++c) {
                std::swap(a[static_cast<size_t>(piv * n + c)], a[static_cast<size_t>(col * n + c)]);
                std::swap(inv[static_cast<size_t>(piv * n + c)], inv[static_cast<size_t>(col * n + c)]);
            }
        const double d = a[static_cast<size_t>(col * n + col)];
        for (i64 c = 0; c < n; ++c) {
            a[static_cast<size_t>(col * n + c)] /= d;
            inv[static_cast<size_t>(col * n + c)] /= d;
        }
        for (i64 r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a[static_cast<size_t>(r * n + col)];
            if (f == 0.0) continue;
            for (i64 c = 0; c < n; ++c) {
                a[static_cast<size_t>(r * n + c)] -= f * a[static_cast<size_t>(col * n + c)];
                inv[static_cast<size_t>(r * n + c)] -= f * inv[static_cast<size_t>(col * n + c)];
            }
        }
    }
    return inv;
}

inline double dense_logdet_spd(std::vector<double> a, i64 n) {
    // plain Cholesky; assumes SPD
    double ld = 0.0;
    for (i64 j = 0; j < n; ++j) {
        double d = a[static_cast<size_t>(j * n + j)];
        for (i64 t = 0; t < j; ++t) d -= a[static_cast<size_t>(j * n + t)] * a[static_cast<size_t>(j * n + t)];
        REQUIRE(d > 0.0);
        const double dj = std::sqrt(d);
        a[static_cast<size_t>(j * n + j)] = dj;
        ld += 2.0 * std::log(dj);
        for (i64 i = j + 1; i < n; ++i) {
            double s = a[static_cast<size_t>(i * n + j)];
            for (i64 t = 0; t < j; ++t) s -= a[static_cast<size_t>(i * n + t)] * a[static_cast<size_t>(j * n + t)];
            a[static_cast<size_t>(i * n + j)] = s / dj;
        }
    }
    return ld;
}

}  // namespace testutil
