#pragma once

#include <cmath>

#include "svgpkan/ops.hpp"

namespace svgpkan {
namespace detail {

inline Shape pad_shape(const Shape& s, size_t rank) {
    Shape out(rank, 1);
    std::copy(s.begin(), s.end(), out.begin() + (rank - s.size()));
    return out;
}

// Element strides for iterating `shape` broadcast against `out`: stride 0
// where the dim is stretched.
inline Shape bcast_strides(const Shape& shape, const Shape& out) {
    Shape padded = pad_shape(shape, out.size());
    Shape st = contiguous_strides(padded);
    for (size_t d = 0; d < out.size(); ++d)
        if (padded[d] == 1 && out[d] > 1) st[d] = 0;
    return st;
}

template <class F>
Tensor binary_forward(const Tensor& a, const Tensor& b, const char* name, F f) {
    Shape os = broadcast_shape(a.shape(), b.shape(), name);
    Tensor out = Tensor::zeros(os);
    double* o = out.mutable_data();
    const double* pa = a.data();
    const double* pb = b.data();
    const i64 n = out.size();
    if (a.shape() == b.shape()) {
        for (i64 i = 0; i < n; ++i) o[i] = f(pa[i], pb[i]);
    } else if (b.size() == 1) {
        const double bv = pb[0];
        for (i64 i = 0; i < n; ++i) o[i] = f(pa[i], bv);
    } else if (a.size() == 1) {
        const double av = pa[0];
        for (i64 i = 0; i < n; ++i) o[i] = f(av, pb[i]);
    } else {
        const int r = static_cast<int>(os.size());
        Shape sa = bcast_strides(a.shape(), os);
        Shape sb = bcast_strides(b.shape(), os);
        std::vector<i64> idx(static_cast<size_t>(r), 0);
        i64 ao = 0, bo = 0;
        for (i64 i = 0; i < n; ++i) {
            o[i] = f(pa[ao], pb[bo]);
            for (int d = r - 1; d >= 0; --d) {
                ++idx[static_cast<size_t>(d)];
                ao += sa[static_cast<size_t>(d)];
                bo += sb[static_cast<size_t>(d)];
                if (idx[static_cast<size_t>(d)] < os[static_cast<size_t>(d)]) break;
                idx[static_cast<size_t>(d)] = 0;
                ao -= sa[static_cast<size_t>(d)] * os[static_cast<size_t>(d)];
                bo -= sb[static_cast<size_t>(d)] * os[static_cast<size_t>(d)];
            }
        }
    }
    return out;
}

template <class F>
Tensor unary_forward(const Tensor& a, F f) {
    Tensor out = Tensor::zeros(a.shape());
    double* o = out.mutable_data();
    const double* p = a.data();
    for (i64 i = 0; i < a.size(); ++i) o[i] = f(p[i]);
    return out;
}

// Records `out` as the result of an op when a tape is active and any input
// participates in the graph.
inline void maybe_record(Tensor& out, bool any_attached, Tape::BackwardFn fn) {
    Tape* t = active_tape();
    if (t && any_attached) out.set_node(t->record(out.shape(), std::move(fn)));
}

}  // namespace detail
}  // namespace svgpkan
