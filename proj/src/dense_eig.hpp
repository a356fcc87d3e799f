#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace svgpkan {
namespace detail {

// Cyclic Jacobi eigensolver for a dense symmetric matrix (row-major).
// Returns eigenvalues in `vals` and column eigenvectors in `vecs` (row-major
// n x n, column j pairs with vals[j]). Plenty for the small matrices used by
// Golub-Welsch.
inline void jacobi_eigensymm(std::vector<double> a, int n, std::vector<double>& vals,
                             std::vector<double>& vecs) {
    vecs.assign(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) vecs[static_cast<size_t>(i * n + i)] = 1.0;
    auto A = [&](int i, int j) -> double& { return a[static_cast<size_t>(i * n + j)]; };
    auto V = [&](int i, int j) -> double& { return vecs[static_cast<size_t>(i * n + j)]; };

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += A(i, j) * A(i, j);
        if (off < 1e-26) break;
        for (int p = 0; p < n - 1; ++p)
            for (int q = p + 1; q < n; ++q) {
                if (std::abs(A(p, q)) < 1e-300) continue;
                const double theta = (A(q, q) - A(p, p)) / (2.0 * A(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = A(k, p), akq = A(k, q);
                    A(k, p) = c * akp - s * akq;
                    A(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = A(p, k), aqk = A(q, k);
                    A(p, k) = c * apk - s * aqk;
                    A(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = V(k, p), vkq = V(k, q);
                    V(k, p) = c * vkp - s * vkq;
                    V(k, q) = s * vkp + c * vkq;
                }
            }
    }
    vals.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) vals[static_cast<size_t>(i)] = A(i, i);
}

}  // namespace detail
}  // namespace svgpkan
