#include "ops_common.hpp"

#include <algorithm>
#include <cmath>

namespace svgpkan {

using detail::bcast_strides;
using detail::maybe_record;

namespace {

// Per-batch element offsets for a tensor with leading shape `own` broadcast
// against `lead`; `mat` is the element count of one matrix.
std::vector<i64> lead_offsets(const Shape& lead, const Shape& own, i64 mat) {
    const i64 n = numel(lead);
    std::vector<i64> offs(static_cast<size_t>(n), 0);
    if (lead.empty()) return offs;
    Shape st = bcast_strides(own, lead);
    const int r = static_cast<int>(lead.size());
    std::vector<i64> idx(static_cast<size_t>(r), 0);
    i64 off = 0;
    for (i64 i = 0; i < n; ++i) {
        offs[static_cast<size_t>(i)] = off * mat;
        for (int d = r - 1; d >= 0; --d) {
            ++idx[static_cast<size_t>(d)];
            off += st[static_cast<size_t>(d)];
            if (idx[static_cast<size_t>(d)] < lead[static_cast<size_t>(d)]) break;
            idx[static_cast<size_t>(d)] = 0;
            off -= st[static_cast<size_t>(d)] * lead[static_cast<size_t>(d)];
        }
    }
    return offs;
}

Shape lead_of(const Shape& s) { return Shape(s.begin(), s.end() - 2); }

// Lower triangle with halved diagonal, upper zeroed (batched, in a copy).
Tensor phi_lower(const Tensor& a) {
    Tensor out = a.clone();
    const i64 m = a.dim(a.rank() - 1);
    double* p = out.mutable_data();
    const i64 nb = a.size() / (m * m);
    for (i64 b = 0; b < nb; ++b) {
        double* mp = p + b * m * m;
        for (i64 i = 0; i < m; ++i) {
            mp[i * m + i] *= 0.5;
            for (i64 j = i + 1; j < m; ++j) mp[i * m + j] = 0.0;
        }
    }
    return out;
}

// Zeroes the strict upper triangle (batched, in a copy).
Tensor tril(const Tensor& a) {
    Tensor out = a.clone();
    const i64 m = a.dim(a.rank() - 1);
    double* p = out.mutable_data();
    const i64 nb = a.size() / (m * m);
    for (i64 b = 0; b < nb; ++b) {
        double* mp = p + b * m * m;
        for (i64 i = 0; i < m; ++i)
            for (i64 j = i + 1; j < m; ++j) mp[i * m + j] = 0.0;
    }
    return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() < 2)
        throw ShapeError("matmul requires rank >= 2: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const i64 n = a.dim(a.rank() - 2), k = a.dim(a.rank() - 1);
    const i64 k2 = b.dim(b.rank() - 2), m = b.dim(b.rank() - 1);
    if (k != k2)
        throw ShapeError("matmul: inner dims disagree: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const Shape la = lead_of(a.shape()), lb = lead_of(b.shape());
    const Shape lead = broadcast_shape(la, lb, "matmul");
    Shape os = lead;
    os.push_back(n);
    os.push_back(m);

    Tensor out = Tensor::zeros(os);
    double* o = out.mutable_data();
    const double* pa = a.data();
    const double* pb = b.data();
    const auto offa = lead_offsets(lead, la, n * k);
    const auto offb = lead_offsets(lead, lb, k * m);
    const i64 nb = numel(lead);
    for (i64 bidx = 0; bidx < nb; ++bidx) {
        const double* A = pa + offa[static_cast<size_t>(bidx)];
        const double* B = pb + offb[static_cast<size_t>(bidx)];
        double* C = o + bidx * n * m;
        for (i64 i = 0; i < n; ++i)
            for (i64 kk = 0; kk < k; ++kk) {
                const double av = A[i * k + kk];
                if (av == 0.0) continue;
                const double* brow = B + kk * m;
                double* crow = C + i * m;
                for (i64 j = 0; j < m; ++j) crow[j] += av * brow[j];
            }
    }

    const int na = a.node(), nbn = b.node();
    const Tensor av = a.detached(), bv = b.detached();
    maybe_record(out, na >= 0 || nbn >= 0, [na, nbn, av, bv](const Tensor& g, Tape& tp) {
        if (na >= 0) tp.accumulate(na, reduce_to_shape(matmul(g, transpose2(bv)), av.shape()));
        if (nbn >= 0) tp.accumulate(nbn, reduce_to_shape(matmul(transpose2(av), g), bv.shape()));
    });
    return out;
}

Tensor cholesky(const Tensor& a) {
    if (a.rank() < 2 || a.dim(a.rank() - 1) != a.dim(a.rank() - 2))
        throw ShapeError("cholesky: needs square matrices, got " + shape_str(a.shape()));
    const i64 m = a.dim(a.rank() - 1);
    Tensor out = a.clone();
    double* p = out.mutable_data();
    const i64 nb = a.size() / (m * m);
    for (i64 b = 0; b < nb; ++b) {
        double* L = p + b * m * m;
        for (i64 j = 0; j < m; ++j) {
            double d = L[j * m + j];
            for (i64 t = 0; t < j; ++t) d -= L[j * m + t] * L[j * m + t];
            if (!(d > 0.0))
                throw CholeskyError(b, j,
                                    "cholesky: non-positive pivot " + std::to_string(d) + " at batch " +
                                        std::to_string(b) + ", index " + std::to_string(j));
            const double dj = std::sqrt(d);
            L[j * m + j] = dj;
            for (i64 i = j + 1; i < m; ++i) {
                double s = L[i * m + j];
                for (i64 t = 0; t < j; ++t) s -= L[i * m + t] * L[j * m + t];
                L[i * m + j] = s / dj;
            }
        }
        for (i64 i = 0; i < m; ++i)
            for (i64 j = i + 1; j < m; ++j) L[i * m + j] = 0.0;
    }

    const int na = a.node();
    const Tensor Lv = out;
    maybe_record(out, na >= 0, [na, Lv](const Tensor& g, Tape& tp) {
        // Murray (2016): Abar = 1/2 (X + X^T), X = L^-T Phi(L^T Lbar) L^-1.
        Tensor P = phi_lower(matmul(transpose2(Lv), g));
        Tensor W = triangular_solve(Lv, P, true);
        Tensor X = transpose2(triangular_solve(Lv, transpose2(W), true));
        tp.accumulate(na, mul(Tensor::scalar(0.5), add(X, transpose2(X))));
    });
    return out;
}

Tensor triangular_solve(const Tensor& L, const Tensor& B, bool trans) {
    if (L.rank() < 2 || L.dim(L.rank() - 1) != L.dim(L.rank() - 2))
        throw ShapeError("triangular_solve: L must be square, got " + shape_str(L.shape()));
    if (B.rank() < 2)
        throw ShapeError("triangular_solve: B must have rank >= 2, got " + shape_str(B.shape()));
    const i64 m = L.dim(L.rank() - 1);
    const i64 mk = B.dim(B.rank() - 2), kk = B.dim(B.rank() - 1);
    if (mk != m)
        throw ShapeError("triangular_solve: dim mismatch " + shape_str(L.shape()) + " vs " + shape_str(B.shape()));
    const Shape ll = lead_of(L.shape()), lb = lead_of(B.shape());
    const Shape lead = broadcast_shape(ll, lb, "triangular_solve");
    Shape os = lead;
    os.push_back(m);
    os.push_back(kk);

    Tensor out = Tensor::zeros(os);
    double* o = out.mutable_data();
    const double* pl = L.data();
    const double* pb = B.data();
    const auto offl = lead_offsets(lead, ll, m * m);
    const auto offb = lead_offsets(lead, lb, m * kk);
    const i64 nb = numel(lead);
    for (i64 b = 0; b < nb; ++b) {
        const double* Lm = pl + offl[static_cast<size_t>(b)];
        double* X = o + b * m * kk;
        std::copy(pb + offb[static_cast<size_t>(b)], pb + offb[static_cast<size_t>(b)] + m * kk, X);
        if (!trans) {
            for (i64 i = 0; i < m; ++i) {
                for (i64 j = 0; j < i; ++j) {
                    const double l = Lm[i * m + j];
                    if (l == 0.0) continue;
                    for (i64 c = 0; c < kk; ++c) X[i * kk + c] -= l * X[j * kk + c];
                }
                const double d = Lm[i * m + i];
                if (d == 0.0)
                    throw TriangularSolveError(b, i, "triangular_solve: zero diagonal at batch " +
                                                         std::to_string(b) + ", index " + std::to_string(i));
                const double inv = 1.0 / d;
                for (i64 c = 0; c < kk; ++c) X[i * kk + c] *= inv;
            }
        } else {
            for (i64 i = m - 1; i >= 0; --i) {
                for (i64 j = i + 1; j < m; ++j) {
                    const double l = Lm[j * m + i];
                    if (l == 0.0) continue;
                    for (i64 c = 0; c < kk; ++c) X[i * kk + c] -= l * X[j * kk + c];
                }
                const double d = Lm[i * m + i];
                if (d == 0.0)
                    throw TriangularSolveError(b, i, "triangular_solve: zero diagonal at batch " +
                                                         std::to_string(b) + ", index " + std::to_string(i));
                const double inv = 1.0 / d;
                for (i64 c = 0; c < kk; ++c) X[i * kk + c] *= inv;
            }
        }
    }

    const int nl = L.node(), nbn = B.node();
    const Tensor Lv = L.detached(), Xv = out;
    const Shape bs = B.shape();
    maybe_record(out, nl >= 0 || nbn >= 0, [nl, nbn, Lv, Xv, bs, trans](const Tensor& g, Tape& tp) {
        Tensor gB = triangular_solve(Lv, g, !trans);
        if (nbn >= 0) tp.accumulate(nbn, reduce_to_shape(gB, bs));
        if (nl >= 0) {
            Tensor gL = trans ? neg(matmul(Xv, transpose2(gB))) : neg(matmul(gB, transpose2(Xv)));
            tp.accumulate(nl, reduce_to_shape(tril(gL), Lv.shape()));
        }
    });
    return out;
}

Tensor diag_embed(const Tensor& a) {
    const i64 m = a.dim(a.rank() - 1);
    Shape os = a.shape();
    os.push_back(m);
    Tensor out = Tensor::zeros(os);
    double* o = out.mutable_data();
    const double* p = a.data();
    const i64 nb = a.size() / m;
    for (i64 b = 0; b < nb; ++b)
        for (i64 i = 0; i < m; ++i) o[(b * m + i) * m + i] = p[b * m + i];
    const int na = a.node();
    maybe_record(out, na >= 0, [na](const Tensor& g, Tape& tp) { tp.accumulate(na, diagonal(g)); });
    return out;
}

Tensor diagonal(const Tensor& a) {
    if (a.rank() < 2 || a.dim(a.rank() - 1) != a.dim(a.rank() - 2))
        throw ShapeError("diagonal: needs square matrices, got " + shape_str(a.shape()));
    const i64 m = a.dim(a.rank() - 1);
    Shape os(a.shape().begin(), a.shape().end() - 1);
    Tensor out = Tensor::zeros(os);
    double* o = out.mutable_data();
    const double* p = a.data();
    const i64 nb = a.size() / (m * m);
    for (i64 b = 0; b < nb; ++b)
        for (i64 i = 0; i < m; ++i) o[b * m + i] = p[(b * m + i) * m + i];
    const int na = a.node();
    maybe_record(out, na >= 0, [na](const Tensor& g, Tape& tp) { tp.accumulate(na, diag_embed(g)); });
    return out;
}

Tensor strict_lower_from_packed(const Tensor& a, i64 m) {
    const i64 packed = m * (m - 1) / 2;
    if (a.dim(a.rank() - 1) != packed)
        throw ShapeError("strict_lower_from_packed: last dim of " + shape_str(a.shape()) + " must be " +
                         std::to_string(packed) + " for m=" + std::to_string(m));
    Shape os(a.shape().begin(), a.shape().end() - 1);
    os.push_back(m);
    os.push_back(m);
    Tensor out = Tensor::zeros(os);
    double* o = out.mutable_data();
    const double* p = a.data();
    const i64 nb = a.size() / packed;
    for (i64 b = 0; b < nb; ++b)
        for (i64 i = 1; i < m; ++i)
            for (i64 j = 0; j < i; ++j)
                o[(b * m + i) * m + j] = p[b * packed + i * (i - 1) / 2 + j];
    const int na = a.node();
    const Shape as = a.shape();
    maybe_record(out, na >= 0, [na, as, m, packed](const Tensor& g, Tape& tp) {
        Tensor ga = Tensor::zeros(as);
        double* gp = ga.mutable_data();
        const double* gg = g.data();
        const i64 nb2 = ga.size() / packed;
        for (i64 b = 0; b < nb2; ++b)
            for (i64 i = 1; i < m; ++i)
                for (i64 j = 0; j < i; ++j)
                    gp[b * packed + i * (i - 1) / 2 + j] = gg[(b * m + i) * m + j];
        tp.accumulate(na, ga);
    });
    return out;
}

}  // namespace svgpkan
