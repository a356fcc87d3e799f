#include "ops_common.hpp"

#include <algorithm>
#include <cmath>

namespace svgpkan {

using detail::binary_forward;
using detail::maybe_record;
using detail::unary_forward;

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    size_t r = std::max(a.size(), b.size());
    Shape pa = detail::pad_shape(a, r), pb = detail::pad_shape(b, r), out(r);
    for (size_t d = 0; d < r; ++d) {
        if (pa[d] == pb[d] || pb[d] == 1)
            out[d] = pa[d];
        else if (pa[d] == 1)
            out[d] = pb[d];
        else
            throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    return out;
}

Tensor reduce_to_shape(const Tensor& g, const Shape& target) {
    NoGradGuard ng;
    if (g.shape() == target) return g;
    Shape pt = detail::pad_shape(target, g.shape().size());
    std::vector<int> axes;
    for (size_t d = 0; d < pt.size(); ++d) {
        if (pt[d] == g.shape()[d]) continue;
        if (pt[d] == 1)
            axes.push_back(static_cast<int>(d));
        else
            throw ShapeError("reduce_to_shape: " + shape_str(g.shape()) + " -> " + shape_str(target));
    }
    Tensor s = axes.empty() ? g : sum(g, axes, /*keepdims=*/true);
    return s.reshaped(target);
}

Tensor add(const Tensor& a, const Tensor& b) {
    Tensor out = binary_forward(a, b, "add", [](double x, double y) { return x + y; });
    const int na = a.node(), nb = b.node();
    const Shape as = a.shape(), bs = b.shape();
    maybe_record(out, na >= 0 || nb >= 0, [na, nb, as, bs](const Tensor& g, Tape& tp) {
        if (na >= 0) tp.accumulate(na, reduce_to_shape(g, as));
        if (nb >= 0) tp.accumulate(nb, reduce_to_shape(g, bs));
    });
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    Tensor out = binary_forward(a, b, "sub", [](double x, double y) { return x - y; });
    const int na = a.node(), nb = b.node();
    const Shape as = a.shape(), bs = b.shape();
    maybe_record(out, na >= 0 || nb >= 0, [na, nb, as, bs](const Tensor& g, Tape& tp) {
        if (na >= 0) tp.accumulate(na, reduce_to_shape(g, as));
        if (nb >= 0) tp.accumulate(nb, reduce_to_shape(neg(g), bs));
    });
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    Tensor out = binary_forward(a, b, "mul", [](double x, double y) { return x * y; });
    const int na = a.node(), nb = b.node();
    const Tensor av = a.detached(), bv = b.detached();
    maybe_record(out, na >= 0 || nb >= 0, [na, nb, av, bv](const Tensor& g, Tape& tp) {
        if (na >= 0) tp.accumulate(na, reduce_to_shape(mul(g, bv), av.shape()));
        if (nb >= 0) tp.accumulate(nb, reduce_to_shape(mul(g, av), bv.shape()));
    });
    return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
    Tensor out = binary_forward(a, b, "div", [](double x, double y) { return x / y; });
    const int na = a.node(), nb = b.node();
    const Tensor av = a.detached(), bv = b.detached(), ov = out;
    maybe_record(out, na >= 0 || nb >= 0, [na, nb, av, bv, ov](const Tensor& g, Tape& tp) {
        if (na >= 0) tp.accumulate(na, reduce_to_shape(div(g, bv), av.shape()));
        if (nb >= 0) tp.accumulate(nb, reduce_to_shape(neg(div(mul(g, ov), bv)), bv.shape()));
    });
    return out;
}

Tensor neg(const Tensor& a) {
    Tensor out = unary_forward(a, [](double x) { return -x; });
    const int na = a.node();
    maybe_record(out, na >= 0, [na](const Tensor& g, Tape& tp) { tp.accumulate(na, neg(g)); });
    return out;
}

Tensor exp(const Tensor& a) {
    Tensor out = unary_forward(a, [](double x) { return std::exp(x); });
    const int na = a.node();
    const Tensor ov = out;
    maybe_record(out, na >= 0, [na, ov](const Tensor& g, Tape& tp) { tp.accumulate(na, mul(g, ov)); });
    return out;
}

Tensor log(const Tensor& a) {
    Tensor out = unary_forward(a, [](double x) { return std::log(x); });
    const int na = a.node();
    const Tensor av = a.detached();
    maybe_record(out, na >= 0, [na, av](const Tensor& g, Tape& tp) { tp.accumulate(na, div(g, av)); });
    return out;
}

Tensor sqrt(const Tensor& a) {
    Tensor out = unary_forward(a, [](double x) { return std::sqrt(x); });
    const int na = a.node();
    const Tensor ov = out;
    maybe_record(out, na >= 0, [na, ov](const Tensor& g, Tape& tp) {
        tp.accumulate(na, div(mul(g, Tensor::scalar(0.5)), ov));
    });
    return out;
}

Tensor square(const Tensor& a) {
    Tensor out = unary_forward(a, [](double x) { return x * x; });
    const int na = a.node();
    const Tensor av = a.detached();
    maybe_record(out, na >= 0, [na, av](const Tensor& g, Tape& tp) {
        tp.accumulate(na, mul(mul(g, Tensor::scalar(2.0)), av));
    });
    return out;
}

Tensor relu(const Tensor& a) {
    Tensor out = unary_forward(a, [](double x) { return x > 0 ? x : 0.0; });
    const int na = a.node();
    const Tensor av = a.detached();
    maybe_record(out, na >= 0, [na, av](const Tensor& g, Tape& tp) {
        tp.accumulate(na, binary_forward(g, av, "relu_bw", [](double gv, double x) { return x > 0 ? gv : 0.0; }));
    });
    return out;
}

Tensor softplus(const Tensor& a) {
    Tensor out = unary_forward(a, [](double x) {
        return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    });
    const int na = a.node();
    const Tensor av = a.detached();
    maybe_record(out, na >= 0, [na, av](const Tensor& g, Tape& tp) {
        tp.accumulate(na, binary_forward(g, av, "softplus_bw", [](double gv, double x) {
                          return gv / (1.0 + std::exp(-x));
                      }));
    });
    return out;
}

Tensor clamp_min(const Tensor& a, double floor) {
    Tensor out = unary_forward(a, [floor](double x) { return x > floor ? x : floor; });
    const int na = a.node();
    const Tensor av = a.detached();
    maybe_record(out, na >= 0, [na, av, floor](const Tensor& g, Tape& tp) {
        tp.accumulate(na, binary_forward(g, av, "clamp_min_bw", [floor](double gv, double x) {
                          return x > floor ? gv : 0.0;
                      }));
    });
    return out;
}

namespace {

std::vector<int> norm_axes(const std::vector<int>& axes, int rank) {
    std::vector<int> out;
    for (int ax : axes) {
        int a = ax < 0 ? ax + rank : ax;
        if (a < 0 || a >= rank) throw ShapeError("reduce axis " + std::to_string(ax) + " out of range for rank " + std::to_string(rank));
        out.push_back(a);
    }
    std::sort(out.begin(), out.end());
    if (std::adjacent_find(out.begin(), out.end()) != out.end())
        throw ShapeError("duplicate reduce axis");
    return out;
}

}  // namespace

Tensor sum(const Tensor& a, const std::vector<int>& axes_in, bool keepdims) {
    const std::vector<int> axes = norm_axes(axes_in, a.rank());
    Shape keep = a.shape();
    for (int ax : axes) keep[static_cast<size_t>(ax)] = 1;

    Tensor out = Tensor::zeros(keep);
    double* o = out.mutable_data();
    const double* p = a.data();
    const Shape& as = a.shape();
    Shape ost = contiguous_strides(keep);
    for (int ax : axes) ost[static_cast<size_t>(ax)] = 0;
    const int r = a.rank();
    std::vector<i64> idx(static_cast<size_t>(r), 0);
    i64 oo = 0;
    const i64 n = a.size();
    for (i64 i = 0; i < n; ++i) {
        o[oo] += p[i];
        for (int d = r - 1; d >= 0; --d) {
            ++idx[static_cast<size_t>(d)];
            oo += ost[static_cast<size_t>(d)];
            if (idx[static_cast<size_t>(d)] < as[static_cast<size_t>(d)]) break;
            idx[static_cast<size_t>(d)] = 0;
            oo -= ost[static_cast<size_t>(d)] * as[static_cast<size_t>(d)];
        }
    }

    Shape final_shape;
    if (keepdims) {
        final_shape = keep;
    } else {
        for (int d = 0; d < r; ++d)
            if (std::find(axes.begin(), axes.end(), d) == axes.end())
                final_shape.push_back(as[static_cast<size_t>(d)]);
        if (final_shape.empty()) final_shape = {1};
        out = out.reshaped(final_shape);
    }

    const int na = a.node();
    const Shape ashape = a.shape();
    maybe_record(out, na >= 0, [na, ashape, keep](const Tensor& g, Tape& tp) {
        tp.accumulate(na, broadcast_to(g.reshaped(keep), ashape));
    });
    return out;
}

Tensor sum(const Tensor& a) {
    std::vector<int> axes(static_cast<size_t>(a.rank()));
    for (int d = 0; d < a.rank(); ++d) axes[static_cast<size_t>(d)] = d;
    return sum(a, axes, false);
}

Tensor mean(const Tensor& a, const std::vector<int>& axes_in, bool keepdims) {
    const std::vector<int> axes = norm_axes(axes_in, a.rank());
    i64 n = 1;
    for (int ax : axes) n *= a.dim(ax);
    return mul(sum(a, axes_in, keepdims), Tensor::scalar(1.0 / static_cast<double>(n)));
}

Tensor mean(const Tensor& a) { return mul(sum(a), Tensor::scalar(1.0 / static_cast<double>(a.size()))); }

Tensor reshape(const Tensor& a, Shape shape) {
    Tensor out = a.reshaped(shape);
    const int na = a.node();
    const Shape as = a.shape();
    maybe_record(out, na >= 0, [na, as](const Tensor& g, Tape& tp) { tp.accumulate(na, g.reshaped(as)); });
    return out;
}

Tensor slice(const Tensor& a, const std::vector<i64>& start, const std::vector<i64>& stop) {
    const int r = a.rank();
    if (static_cast<int>(start.size()) != r || static_cast<int>(stop.size()) != r)
        throw ShapeError("slice: start/stop rank mismatch with " + shape_str(a.shape()));
    Shape os(static_cast<size_t>(r));
    for (int d = 0; d < r; ++d) {
        if (start[static_cast<size_t>(d)] < 0 || stop[static_cast<size_t>(d)] > a.dim(d) ||
            start[static_cast<size_t>(d)] >= stop[static_cast<size_t>(d)])
            throw ShapeError("slice: bad range on axis " + std::to_string(d) + " for " + shape_str(a.shape()));
        os[static_cast<size_t>(d)] = stop[static_cast<size_t>(d)] - start[static_cast<size_t>(d)];
    }
    Tensor out = Tensor::zeros(os);
    double* o = out.mutable_data();
    const double* p = a.data();
    const Shape ast = contiguous_strides(a.shape());
    std::vector<i64> idx(static_cast<size_t>(r), 0);
    i64 base = 0;
    for (int d = 0; d < r; ++d) base += start[static_cast<size_t>(d)] * ast[static_cast<size_t>(d)];
    i64 ao = base;
    const i64 n = out.size();
    for (i64 i = 0; i < n; ++i) {
        o[i] = p[ao];
        for (int d = r - 1; d >= 0; --d) {
            ++idx[static_cast<size_t>(d)];
            ao += ast[static_cast<size_t>(d)];
            if (idx[static_cast<size_t>(d)] < os[static_cast<size_t>(d)]) break;
            idx[static_cast<size_t>(d)] = 0;
            ao -= ast[static_cast<size_t>(d)] * os[static_cast<size_t>(d)];
        }
    }
    const int na = a.node();
    const Shape as = a.shape();
    maybe_record(out, na >= 0, [na, as, start, os](const Tensor& g, Tape& tp) {
        Tensor gx = Tensor::zeros(as);
        double* gp = gx.mutable_data();
        const double* gg = g.data();
        const Shape ast2 = contiguous_strides(as);
        const int rr = static_cast<int>(as.size());
        std::vector<i64> idx2(static_cast<size_t>(rr), 0);
        i64 base2 = 0;
        for (int d = 0; d < rr; ++d) base2 += start[static_cast<size_t>(d)] * ast2[static_cast<size_t>(d)];
        i64 ao2 = base2;
        for (i64 i = 0; i < g.size(); ++i) {
            gp[ao2] += gg[i];
            for (int d = rr - 1; d >= 0; --d) {
                ++idx2[static_cast<size_t>(d)];
                ao2 += ast2[static_cast<size_t>(d)];
                if (idx2[static_cast<size_t>(d)] < os[static_cast<size_t>(d)]) break;
                idx2[static_cast<size_t>(d)] = 0;
                ao2 -= ast2[static_cast<size_t>(d)] * os[static_cast<size_t>(d)];
            }
        }
        tp.accumulate(na, gx);
    });
    return out;
}

Tensor concat(const std::vector<Tensor>& ts, int axis) {
    if (ts.empty()) throw ShapeError("concat: empty input list");
    const int r = ts[0].rank();
    int ax = axis < 0 ? axis + r : axis;
    if (ax < 0 || ax >= r) throw ShapeError("concat: axis out of range");
    Shape os = ts[0].shape();
    i64 total = 0;
    for (const Tensor& t : ts) {
        if (t.rank() != r) throw ShapeError("concat: rank mismatch");
        for (int d = 0; d < r; ++d)
            if (d != ax && t.dim(d) != os[static_cast<size_t>(d)])
                throw ShapeError("concat: dim mismatch on axis " + std::to_string(d));
        total += t.dim(ax);
    }
    os[static_cast<size_t>(ax)] = total;

    i64 outer = 1, inner = 1;
    for (int d = 0; d < ax; ++d) outer *= os[static_cast<size_t>(d)];
    for (int d = ax + 1; d < r; ++d) inner *= os[static_cast<size_t>(d)];

    Tensor out = Tensor::zeros(os);
    double* o = out.mutable_data();
    const i64 out_row = total * inner;
    i64 off = 0;
    for (const Tensor& t : ts) {
        const double* p = t.data();
        const i64 row = t.dim(ax) * inner;
        for (i64 u = 0; u < outer; ++u)
            std::copy(p + u * row, p + (u + 1) * row, o + u * out_row + off);
        off += row;
    }

    bool any = false;
    std::vector<int> nodes;
    std::vector<i64> rows;
    for (const Tensor& t : ts) {
        nodes.push_back(t.node());
        rows.push_back(t.dim(ax) * inner);
        any = any || t.attached();
    }
    std::vector<Shape> shapes;
    for (const Tensor& t : ts) shapes.push_back(t.shape());
    maybe_record(out, any, [nodes, rows, shapes, outer, out_row](const Tensor& g, Tape& tp) {
        const double* gg = g.data();
        i64 off2 = 0;
        for (size_t k = 0; k < nodes.size(); ++k) {
            if (nodes[k] >= 0) {
                Tensor gi = Tensor::zeros(shapes[k]);
                double* gp = gi.mutable_data();
                for (i64 u = 0; u < outer; ++u)
                    std::copy(gg + u * out_row + off2, gg + u * out_row + off2 + rows[k], gp + u * rows[k]);
                tp.accumulate(nodes[k], gi);
            }
            off2 += rows[k];
        }
    });
    return out;
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
    if (a.shape() == shape) return a;
    Shape check = broadcast_shape(a.shape(), shape, "broadcast_to");
    if (check != shape)
        throw ShapeError("broadcast_to: " + shape_str(a.shape()) + " -> " + shape_str(shape));
    Tensor out = binary_forward(Tensor::zeros(shape), a, "broadcast_to", [](double, double y) { return y; });
    const int na = a.node();
    const Shape as = a.shape();
    maybe_record(out, na >= 0, [na, as](const Tensor& g, Tape& tp) { tp.accumulate(na, reduce_to_shape(g, as)); });
    return out;
}

Tensor permute(const Tensor& a, const std::vector<int>& axes) {
    const int r = a.rank();
    if (static_cast<int>(axes.size()) != r) throw ShapeError("permute: axes rank mismatch");
    std::vector<bool> seen(static_cast<size_t>(r), false);
    Shape os(static_cast<size_t>(r));
    for (int d = 0; d < r; ++d) {
        int ax = axes[static_cast<size_t>(d)];
        if (ax < 0 || ax >= r || seen[static_cast<size_t>(ax)]) throw ShapeError("permute: invalid axes");
        seen[static_cast<size_t>(ax)] = true;
        os[static_cast<size_t>(d)] = a.dim(ax);
    }
    Tensor out = Tensor::zeros(os);
    double* o = out.mutable_data();
    const double* p = a.data();
    const Shape ist = contiguous_strides(a.shape());
    // walk the output in order; input offset uses permuted strides
    Shape pst(static_cast<size_t>(r));
    for (int d = 0; d < r; ++d) pst[static_cast<size_t>(d)] = ist[static_cast<size_t>(axes[static_cast<size_t>(d)])];
    std::vector<i64> idx(static_cast<size_t>(r), 0);
    i64 io = 0;
    for (i64 i = 0; i < out.size(); ++i) {
        o[i] = p[io];
        for (int d = r - 1; d >= 0; --d) {
            ++idx[static_cast<size_t>(d)];
            io += pst[static_cast<size_t>(d)];
            if (idx[static_cast<size_t>(d)] < os[static_cast<size_t>(d)]) break;
            idx[static_cast<size_t>(d)] = 0;
            io -= pst[static_cast<size_t>(d)] * os[static_cast<size_t>(d)];
        }
    }
    const int na = a.node();
    std::vector<int> inv(static_cast<size_t>(r));
    for (int d = 0; d < r; ++d) inv[static_cast<size_t>(axes[static_cast<size_t>(d)])] = d;
    maybe_record(out, na >= 0, [na, inv](const Tensor& g, Tape& tp) { tp.accumulate(na, permute(g, inv)); });
    return out;
}

Tensor transpose2(const Tensor& a) {
    const int r = a.rank();
    if (r < 2) throw ShapeError("transpose2 requires rank >= 2, got " + shape_str(a.shape()));
    std::vector<int> axes(static_cast<size_t>(r));
    for (int d = 0; d < r; ++d) axes[static_cast<size_t>(d)] = d;
    std::swap(axes[static_cast<size_t>(r - 1)], axes[static_cast<size_t>(r - 2)]);
    return permute(a, axes);
}

}  // namespace svgpkan
