#include "ops_common.hpp"

namespace svgpkan {

using detail::maybe_record;

namespace {

void check_conv_args(const Tensor& x, const Tensor& w, int stride, int pad, const char* op) {
    if (x.rank() != 4 || w.rank() != 4)
        throw ShapeError(std::string(op) + ": x and w must be rank 4, got " + shape_str(x.shape()) + " and " +
                         shape_str(w.shape()));
    if (w.dim(2) != w.dim(3)) throw ShapeError(std::string(op) + ": kernel must be square");
    if (stride < 1 || stride > 2) throw ShapeError(std::string(op) + ": stride must be 1 or 2");
    if (pad < 0) throw ShapeError(std::string(op) + ": pad must be >= 0");
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad) {
    check_conv_args(x, w, stride, pad, "conv2d");
    const i64 N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const i64 F = w.dim(0), k = w.dim(2);
    if (w.dim(1) != C)
        throw ShapeError("conv2d: channel mismatch " + shape_str(x.shape()) + " vs " + shape_str(w.shape()));
    const i64 Ho = (H + 2 * pad - k) / stride + 1;
    const i64 Wo = (W + 2 * pad - k) / stride + 1;
    if (Ho <= 0 || Wo <= 0) throw ShapeError("conv2d: kernel larger than padded input");

    Tensor out = Tensor::zeros({N, F, Ho, Wo});
    double* o = out.mutable_data();
    const double* px = x.data();
    const double* pw = w.data();
    for (i64 n = 0; n < N; ++n)
        for (i64 f = 0; f < F; ++f)
            for (i64 ho = 0; ho < Ho; ++ho)
                for (i64 wo = 0; wo < Wo; ++wo) {
                    double acc = 0.0;
                    for (i64 c = 0; c < C; ++c)
                        for (i64 kh = 0; kh < k; ++kh) {
                            const i64 hi = ho * stride - pad + kh;
                            if (hi < 0 || hi >= H) continue;
                            const double* xrow = px + ((n * C + c) * H + hi) * W;
                            const double* wrow = pw + ((f * C + c) * k + kh) * k;
                            for (i64 kw = 0; kw < k; ++kw) {
                                const i64 wi = wo * stride - pad + kw;
                                if (wi < 0 || wi >= W) continue;
                                acc += xrow[wi] * wrow[kw];
                            }
                        }
                    o[((n * F + f) * Ho + ho) * Wo + wo] = acc;
                }

    const int nx = x.node(), nw = w.node();
    const Tensor xv = x.detached(), wv = w.detached();
    maybe_record(out, nx >= 0 || nw >= 0, [nx, nw, xv, wv, stride, pad](const Tensor& g, Tape& tp) {
        const i64 N2 = xv.dim(0), C2 = xv.dim(1), H2 = xv.dim(2), W2 = xv.dim(3);
        const i64 F2 = wv.dim(0), k2 = wv.dim(2);
        const i64 Ho2 = g.dim(2), Wo2 = g.dim(3);
        const double* gg = g.data();
        const double* px2 = xv.data();
        const double* pw2 = wv.data();
        Tensor gx = nx >= 0 ? Tensor::zeros(xv.shape()) : Tensor();
        Tensor gw = nw >= 0 ? Tensor::zeros(wv.shape()) : Tensor();
        double* gxp = nx >= 0 ? gx.mutable_data() : nullptr;
        double* gwp = nw >= 0 ? gw.mutable_data() : nullptr;
        for (i64 n = 0; n < N2; ++n)
            for (i64 f = 0; f < F2; ++f)
                for (i64 ho = 0; ho < Ho2; ++ho)
                    for (i64 wo = 0; wo < Wo2; ++wo) {
                        const double gv = gg[((n * F2 + f) * Ho2 + ho) * Wo2 + wo];
                        if (gv == 0.0) continue;
                        for (i64 c = 0; c < C2; ++c)
                            for (i64 kh = 0; kh < k2; ++kh) {
                                const i64 hi = ho * stride - pad + kh;
                                if (hi < 0 || hi >= H2) continue;
                                for (i64 kw = 0; kw < k2; ++kw) {
                                    const i64 wi = wo * stride - pad + kw;
                                    if (wi < 0 || wi >= W2) continue;
                                    const i64 xi = ((n * C2 + c) * H2 + hi) * W2 + wi;
                                    const i64 widx = ((f * C2 + c) * k2 + kh) * k2 + kw;
                                    if (gxp) gxp[xi] += gv * pw2[widx];
                                    if (gwp) gwp[widx] += gv * px2[xi];
                                }
                            }
                    }
        if (nx >= 0) tp.accumulate(nx, gx);
        if (nw >= 0) tp.accumulate(nw, gw);
    });
    return out;
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, int stride, int pad, int output_pad) {
    check_conv_args(x, w, stride, pad, "conv_transpose2d");
    if (output_pad < 0 || output_pad >= stride)
        throw ShapeError("conv_transpose2d: output_pad must be in [0, stride)");
    const i64 N = x.dim(0), F = x.dim(1), H = x.dim(2), W = x.dim(3);
    const i64 C = w.dim(1), k = w.dim(2);
    if (w.dim(0) != F)
        throw ShapeError("conv_transpose2d: channel mismatch " + shape_str(x.shape()) + " vs " + shape_str(w.shape()));
    const i64 Ho = (H - 1) * stride - 2 * pad + k + output_pad;
    const i64 Wo = (W - 1) * stride - 2 * pad + k + output_pad;
    if (Ho <= 0 || Wo <= 0) throw ShapeError("conv_transpose2d: non-positive output size");

    Tensor out = Tensor::zeros({N, C, Ho, Wo});
    double* o = out.mutable_data();
    const double* px = x.data();
    const double* pw = w.data();
    for (i64 n = 0; n < N; ++n)
        for (i64 f = 0; f < F; ++f)
            for (i64 h = 0; h < H; ++h)
                for (i64 ww = 0; ww < W; ++ww) {
                    const double xv = px[((n * F + f) * H + h) * W + ww];
                    if (xv == 0.0) continue;
                    for (i64 c = 0; c < C; ++c)
                        for (i64 kh = 0; kh < k; ++kh) {
                            const i64 oh = h * stride - pad + kh;
                            if (oh < 0 || oh >= Ho) continue;
                            const double* wrow = pw + ((f * C + c) * k + kh) * k;
                            double* orow = o + ((n * C + c) * Ho + oh) * Wo;
                            for (i64 kw = 0; kw < k; ++kw) {
                                const i64 ow = ww * stride - pad + kw;
                                if (ow < 0 || ow >= Wo) continue;
                                orow[ow] += xv * wrow[kw];
                            }
                        }
                }

    const int nx = x.node(), nw = w.node();
    const Tensor xv2 = x.detached(), wv = w.detached();
    maybe_record(out, nx >= 0 || nw >= 0, [nx, nw, xv2, wv, stride, pad](const Tensor& g, Tape& tp) {
        const i64 N2 = xv2.dim(0), F2 = xv2.dim(1), H2 = xv2.dim(2), W2 = xv2.dim(3);
        const i64 C2 = wv.dim(1), k2 = wv.dim(2);
        const i64 Ho2 = g.dim(2), Wo2 = g.dim(3);
        const double* gg = g.data();
        const double* px2 = xv2.data();
        const double* pw2 = wv.data();
        Tensor gx = nx >= 0 ? Tensor::zeros(xv2.shape()) : Tensor();
        Tensor gw = nw >= 0 ? Tensor::zeros(wv.shape()) : Tensor();
        double* gxp = nx >= 0 ? gx.mutable_data() : nullptr;
        double* gwp = nw >= 0 ? gw.mutable_data() : nullptr;
        for (i64 n = 0; n < N2; ++n)
            for (i64 f = 0; f < F2; ++f)
                for (i64 h = 0; h < H2; ++h)
                    for (i64 ww = 0; ww < W2; ++ww) {
                        const double xval = px2[((n * F2 + f) * H2 + h) * W2 + ww];
                        double acc = 0.0;
                        for (i64 c = 0; c < C2; ++c)
                            for (i64 kh = 0; kh < k2; ++kh) {
                                const i64 oh = h * stride - pad + kh;
                                if (oh < 0 || oh >= Ho2) continue;
                                for (i64 kw = 0; kw < k2; ++kw) {
                                    const i64 ow = ww * stride - pad + kw;
                                    if (ow < 0 || ow >= Wo2) continue;
                                    const double gv = gg[((n * C2 + c) * Ho2 + oh) * Wo2 + ow];
                                    const i64 widx = ((f * C2 + c) * k2 + kh) * k2 + kw;
                                    acc += gv * pw2[widx];
                                    if (gwp) gwp[widx] += gv * xval;
                                }
                            }
                        if (gxp) gxp[((n * F2 + f) * H2 + h) * W2 + ww] = acc;
                    }
        if (nx >= 0) tp.accumulate(nx, gx);
        if (nw >= 0) tp.accumulate(nw, gw);
    });
    return out;
}

}  // namespace svgpkan
