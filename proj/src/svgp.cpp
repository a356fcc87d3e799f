#include "svgpkan/svgp.hpp"

#include <algorithm>
#include <cmath>

namespace svgpkan {

namespace {

Tensor eye(i64 m) {
    Tensor t = Tensor::zeros({1, m, m});
    double* p = t.mutable_data();
    for (i64 i = 0; i < m; ++i) p[i * m + i] = 1.0;
    return t;
}

Tensor clamp0(const Tensor& t) { return clamp_min(t, 0.0); }

}  // namespace

Tensor cholesky_with_jitter(const Tensor& K, double base_jitter) {
    const i64 m = K.dim(K.rank() - 1);
    Shape dshape(K.shape().begin(), K.shape().end() - 1);
    dshape.back() = 1;
    dshape.push_back(1);
    // scale by the mean diagonal so jitter tracks the signal variance
    Tensor md = reshape(mean(diagonal(K), {K.rank() - 2}, true), dshape);
    Tensor id = eye(m);
    double jit = base_jitter;
    for (;;) {
        try {
            return cholesky(add(K, mul(mul(md, Tensor::scalar(jit)), id)));
        } catch (const CholeskyError&) {
            if (jit >= 1e-2) throw;
            jit *= 10.0;
        }
    }
}

KernelParams EdgeGP::kernel() const {
    KernelParams p;
    p.log_signal_variance = log_signal_variance;
    p.log_lengthscale = log_lengthscale;
    return p;
}

Tensor EdgeGP::ls_dense() const {
    NoGradGuard ng;
    Tensor d = Tensor::zeros({m()});
    for (i64 i = 0; i < m(); ++i) d.mutable_data()[i] = std::exp(chol_diag_log.at(i));
    return add(diag_embed(d), strict_lower_from_packed(chol_lower, m()));
}

Tensor EdgeGP::s_dense() const {
    NoGradGuard ng;
    Tensor ls = ls_dense();
    return matmul(ls, transpose2(ls));
}

EdgeEval edge_posterior(const EdgeGP& e, double x) {
    NoGradGuard ng;
    const KernelParams kp = e.kernel();
    const double sf2 = kp.signal_variance();
    Tensor L = cholesky_with_jitter(gram(e.z, kp), e.jitter);
    Tensor kx = reshape(gram_cross(Tensor::scalar(x), e.z, kp), {e.m(), 1});
    Tensor v = triangular_solve(L, kx, false);
    Tensor beta = triangular_solve(L, v, true);
    EdgeEval out;
    out.mean = sum(mul(reshape(e.vmean, {e.m(), 1}), beta)).item();
    out.variance.orthogonal = std::max(0.0, sf2 - sum(square(v)).item());
    out.variance.projected = sum(square(matmul(transpose2(e.ls_dense()), beta))).item();
    out.variance.mean_variation = 0.0;
    return out;
}

EdgeEval edge_moment_match(const EdgeGP& e, double mu, double var, PsiMethod method,
                           OrthApprox orth, int quad_h) {
    NoGradGuard ng;
    const KernelParams kp = e.kernel();
    const double sf2 = kp.signal_variance();
    const i64 m = e.m();

    Tensor p1 = method == PsiMethod::ClosedForm ? psi1(mu, var, e.z, kp)
                                                : psi1_quadrature(mu, var, e.z, kp, quad_h);
    Tensor p2 = method == PsiMethod::ClosedForm ? psi2(mu, var, e.z, kp)
                                                : psi2_quadrature(mu, var, e.z, kp, quad_h);

    Tensor L = cholesky_with_jitter(gram(e.z, kp), e.jitter);
    Tensor alpha = triangular_solve(L, triangular_solve(L, reshape(e.vmean, {m, 1}), false), true);
    Tensor W = triangular_solve(L, triangular_solve(L, e.ls_dense(), false), true);
    Tensor a_proj = matmul(W, transpose2(W));
    Tensor k_inv = triangular_solve(L, triangular_solve(L, reshape(eye(m), {m, m}), false), true);

    EdgeEval out;
    out.mean = sum(mul(p1, reshape(alpha, {m}))).item();
    out.variance.projected = std::max(0.0, sum(mul(p2, a_proj)).item());
    if (orth == OrthApprox::Psi1OverInputVar && var > 0.0) {
        // paper-style shortcut; dimensionally rough, kept for comparison
        out.variance.orthogonal = std::max(0.0, sf2 * (1.0 - sum(square(p1)).item() / var));
    } else {
        out.variance.orthogonal = std::max(0.0, sf2 - sum(mul(p2, k_inv)).item());
    }
    const double second = sum(mul(p2, matmul(alpha, transpose2(alpha)))).item();
    out.variance.mean_variation = std::max(0.0, second - out.mean * out.mean);
    return out;
}

double edge_kl(const EdgeGP& e) {
    NoGradGuard ng;
    const i64 m = e.m();
    Tensor L = cholesky_with_jitter(gram(e.z, e.kernel()), e.jitter);
    Tensor ls = e.ls_dense();
    const double tr_ks = sum(square(triangular_solve(L, ls, false))).item();
    const double maha = sum(square(triangular_solve(L, reshape(e.vmean, {m, 1}), false))).item();
    const double logdet_k = 2.0 * sum(log(diagonal(L))).item();
    double logdet_s = 0.0;
    for (i64 i = 0; i < m; ++i) logdet_s += 2.0 * e.chol_diag_log.at(i);
    return 0.5 * (tr_ks + maha - static_cast<double>(m) + logdet_k - logdet_s);
}

GPKANLayer::GPKANLayer(i64 d_in, i64 d_out, i64 m, std::string name, bool shared_z)
    : d_in_(d_in), d_out_(d_out), m_(m), zrows_(shared_z ? 1 : d_in * d_out), name_(std::move(name)) {
    if (d_in < 1 || d_out < 1 || m < 2)
        throw ShapeError(name_ + ": needs d_in, d_out >= 1 and m >= 2");
    const i64 e = edge_count();
    z_ = Param(name_ + ".z", Tensor::zeros({zrows_, m}));
    vmean_ = Param(name_ + ".vmean", Tensor::zeros({e, m}));
    chol_diag_log_ = Param(name_ + ".chol_diag_log", Tensor::zeros({e, m}));
    chol_lower_ = Param(name_ + ".chol_lower", Tensor::zeros({e, m * (m - 1) / 2}));
    log_sf2_ = Param(name_ + ".log_sf2", Tensor::zeros({zrows_}));
    log_len_ = Param(name_ + ".log_len", Tensor::zeros({zrows_}));
    bias_ = Param(name_ + ".bias", Tensor::zeros({d_out}));
    init_inducing_uniform(-2.0, 2.0);
}

void GPKANLayer::init_inducing_uniform(double lo, double hi) {
    double* zp = z_.value.mutable_data();
    for (i64 r = 0; r < zrows_; ++r)
        for (i64 k = 0; k < m_; ++k)
            zp[r * m_ + k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(m_ - 1);
    reset_variational_to_prior();
}

void GPKANLayer::init_inducing_kmeans(const Tensor& batch, int iters) {
    if (batch.rank() != 2 || batch.dim(1) != d_in_)
        throw ShapeError(name_ + ": kmeans batch must be B x " + std::to_string(d_in_) + ", got " +
                         shape_str(batch.shape()));
    const i64 b = batch.dim(0);
    if (b < 2) throw std::runtime_error(name_ + ": kmeans needs at least 2 samples");

    double* zp = z_.value.mutable_data();
    // shared mode pools every input dimension into one center set
    const i64 dims = shared_z() ? 1 : d_in_;
    const i64 vals_per_dim = shared_z() ? b * d_in_ : b;
    std::vector<double> vals(static_cast<size_t>(vals_per_dim));
    std::vector<double> centers(static_cast<size_t>(m_));
    for (i64 i = 0; i < dims; ++i) {
        if (shared_z()) {
            for (i64 r = 0; r < vals_per_dim; ++r) vals[static_cast<size_t>(r)] = batch.at(r);
        } else {
            for (i64 r = 0; r < b; ++r) vals[static_cast<size_t>(r)] = batch.at(r * d_in_ + i);
        }
        std::sort(vals.begin(), vals.end());
        // quantile seeding keeps the run deterministic
        for (i64 k = 0; k < m_; ++k) {
            const double q = (static_cast<double>(k) + 0.5) / static_cast<double>(m_);
            centers[static_cast<size_t>(k)] = vals[static_cast<size_t>(
                std::min<i64>(vals_per_dim - 1, static_cast<i64>(q * static_cast<double>(vals_per_dim))))];
        }
        std::vector<double> sums(static_cast<size_t>(m_));
        std::vector<i64> counts(static_cast<size_t>(m_));
        for (int it = 0; it < iters; ++it) {
            std::fill(sums.begin(), sums.end(), 0.0);
            std::fill(counts.begin(), counts.end(), 0);
            for (double v : vals) {
                i64 best = 0;
                double bd = std::abs(v - centers[0]);
                for (i64 k = 1; k < m_; ++k) {
                    const double d = std::abs(v - centers[static_cast<size_t>(k)]);
                    if (d < bd) {
                        bd = d;
                        best = k;
                    }
                }
                sums[static_cast<size_t>(best)] += v;
                counts[static_cast<size_t>(best)] += 1;
            }
            for (i64 k = 0; k < m_; ++k)
                if (counts[static_cast<size_t>(k)] > 0)
                    centers[static_cast<size_t>(k)] = sums[static_cast<size_t>(k)] / static_cast<double>(counts[static_cast<size_t>(k)]);
        }
        std::sort(centers.begin(), centers.end());
        if (shared_z()) {
            for (i64 k = 0; k < m_; ++k) zp[k] = centers[static_cast<size_t>(k)];
        } else {
            for (i64 j = 0; j < d_out_; ++j) {
                const i64 e = j * d_in_ + i;
                for (i64 k = 0; k < m_; ++k) zp[e * m_ + k] = centers[static_cast<size_t>(k)];
            }
        }
    }
    reset_variational_to_prior();
}

void GPKANLayer::reset_variational_to_prior() {
    NoGradGuard ng;
    const i64 e = edge_count();
    Tensor zi = reshape(z_.value, {zrows_, m_, 1});
    Tensor zj = reshape(z_.value, {zrows_, 1, m_});
    Tensor sf2 = reshape(exp(log_sf2_.value), {zrows_, 1, 1});
    Tensor len2 = reshape(exp(mul(log_len_.value, Tensor::scalar(2.0))), {zrows_, 1, 1});
    Tensor K = mul(sf2, exp(neg(div(square(sub(zi, zj)), mul(len2, Tensor::scalar(2.0))))));
    Tensor L = cholesky_with_jitter(K, jitter_base);

    double* dl = chol_diag_log_.value.mutable_data();
    double* lw = chol_lower_.value.mutable_data();
    const i64 packed = m_ * (m_ - 1) / 2;
    for (i64 ee = 0; ee < e; ++ee) {
        const i64 r = zrows_ == 1 ? 0 : ee;
        for (i64 i = 0; i < m_; ++i) dl[ee * m_ + i] = std::log(L.at((r * m_ + i) * m_ + i));
        for (i64 i = 1; i < m_; ++i)
            for (i64 j = 0; j < i; ++j)
                lw[ee * packed + i * (i - 1) / 2 + j] = L.at((r * m_ + i) * m_ + j);
    }
    double* vm = vmean_.value.mutable_data();
    std::fill(vm, vm + vmean_.value.size(), 0.0);
}

std::vector<Param*> GPKANLayer::params() {
    return {&z_, &vmean_, &chol_diag_log_, &chol_lower_, &log_sf2_, &log_len_, &bias_};
}

EdgeGP GPKANLayer::edge(i64 j, i64 i) const {
    if (j < 0 || j >= d_out_ || i < 0 || i >= d_in_)
        throw ShapeError(name_ + ": edge (" + std::to_string(j) + "," + std::to_string(i) + ") out of range");
    const i64 e = j * d_in_ + i;
    const i64 r = zrows_ == 1 ? 0 : e;
    EdgeGP out;
    out.z = slice(z_.value, {r, 0}, {r + 1, m_}).reshaped({m_});
    out.vmean = slice(vmean_.value, {e, 0}, {e + 1, m_}).reshaped({m_});
    out.chol_diag_log = slice(chol_diag_log_.value, {e, 0}, {e + 1, m_}).reshaped({m_});
    const i64 packed = m_ * (m_ - 1) / 2;
    out.chol_lower = slice(chol_lower_.value, {e, 0}, {e + 1, packed}).reshaped({packed});
    out.log_signal_variance = log_sf2_.value.at(r);
    out.log_lengthscale = log_len_.value.at(r);
    out.jitter = jitter_base;
    return out;
}

LayerForward GPKANLayer::forward(const LayerMoments& in) const {
    if (in.mean.rank() != 2 || in.mean.dim(1) != d_in_)
        throw ShapeError(name_ + ": input must be B x " + std::to_string(d_in_) + ", got " +
                         shape_str(in.mean.shape()));
    if (in.stochastic() && in.var.shape() != in.mean.shape())
        throw ShapeError(name_ + ": mean/var shape mismatch " + shape_str(in.mean.shape()) + " vs " +
                         shape_str(in.var.shape()));
    const i64 b = in.mean.dim(0);
    const i64 e = edge_count();

    const i64 zr = zrows_;
    Tensor z = use(z_);
    Tensor sf2 = exp(use(log_sf2_));
    Tensor len2 = exp(mul(use(log_len_), Tensor::scalar(2.0)));
    Tensor zi = reshape(z, {zr, m_, 1});
    Tensor zj = reshape(z, {zr, 1, m_});
    Tensor K = mul(reshape(sf2, {zr, 1, 1}),
                   exp(neg(div(square(sub(zi, zj)), mul(reshape(len2, {zr, 1, 1}), Tensor::scalar(2.0))))));
    Tensor L = cholesky_with_jitter(K, jitter_base);
    Tensor ls = add(diag_embed(exp(use(chol_diag_log_))), strict_lower_from_packed(use(chol_lower_), m_));

    // tile inputs edge-major: e = j * d_in + i
    auto tile = [&](const Tensor& t) {
        return reshape(broadcast_to(reshape(t, {b, 1, d_in_}), {b, d_out_, d_in_}), {b, e});
    };
    Tensor mu = tile(in.mean);

    Tensor mean_e, proj_e, orth_e, meanvar_e;
    const Tensor sf2_row = reshape(sf2, {1, zr});

    if (!in.stochastic()) {
        Tensor kx = mul(reshape(sf2, {1, zr, 1}),
                        exp(neg(div(square(sub(reshape(mu, {b, e, 1}), reshape(z, {1, zr, m_}))),
                                    mul(reshape(len2, {1, zr, 1}), Tensor::scalar(2.0))))));
        Tensor v = triangular_solve(L, reshape(kx, {b, e, m_, 1}), false);
        Tensor beta = triangular_solve(L, v, true);
        mean_e = sum(mul(reshape(use(vmean_), {1, e, m_, 1}), beta), {2, 3});
        orth_e = clamp0(sub(sf2_row, sum(square(v), {2, 3})));
        proj_e = sum(square(matmul(transpose2(ls), beta)), {2, 3});
    } else {
        Tensor s2 = tile(in.var);
        Tensor psi1_t, psi2_t;
        if (psi_method == PsiMethod::ClosedForm) {
            Tensor den1 = add(reshape(len2, {1, zr, 1}), reshape(s2, {b, e, 1}));
            psi1_t = mul(mul(reshape(sf2, {1, zr, 1}), sqrt(div(reshape(len2, {1, zr, 1}), den1))),
                         exp(neg(div(square(sub(reshape(mu, {b, e, 1}), reshape(z, {1, zr, m_}))),
                                     mul(den1, Tensor::scalar(2.0))))));
            Tensor den2 = add(reshape(len2, {1, zr, 1, 1}), mul(reshape(s2, {b, e, 1, 1}), Tensor::scalar(2.0)));
            Tensor zd2 = div(square(sub(zi, zj)), mul(reshape(len2, {zr, 1, 1}), Tensor::scalar(4.0)));
            Tensor zbar = mul(add(zi, zj), Tensor::scalar(0.5));
            psi2_t = mul(mul(square(reshape(sf2, {1, zr, 1, 1})), sqrt(div(reshape(len2, {1, zr, 1, 1}), den2))),
                         exp(neg(add(reshape(zd2, {1, zr, m_, m_}),
                                     div(square(sub(reshape(zbar, {1, zr, m_, m_}), reshape(mu, {b, e, 1, 1}))),
                                         den2)))));
        } else {
            // Gauss-Hermite fallback: x_h = mu + sqrt(2 s2) t_h
            const GaussHermiteRule& rule = gauss_hermite(20);
            Tensor sq = sqrt(mul(s2, Tensor::scalar(2.0)));
            const double inv_sqrt_pi = 1.0 / std::sqrt(M_PI);
            for (size_t h = 0; h < rule.nodes.size(); ++h) {
                Tensor xh = add(mu, mul(sq, Tensor::scalar(rule.nodes[h])));
                Tensor kxh = mul(reshape(sf2, {1, zr, 1}),
                                 exp(neg(div(square(sub(reshape(xh, {b, e, 1}), reshape(z, {1, zr, m_}))),
                                             mul(reshape(len2, {1, zr, 1}), Tensor::scalar(2.0))))));
                Tensor w = Tensor::scalar(rule.weights[h] * inv_sqrt_pi);
                Tensor term1 = mul(kxh, w);
                Tensor term2 = mul(mul(reshape(kxh, {b, e, m_, 1}), reshape(kxh, {b, e, 1, m_})), w);
                psi1_t = h == 0 ? term1 : add(psi1_t, term1);
                psi2_t = h == 0 ? term2 : add(psi2_t, term2);
            }
        }

        Tensor alpha = triangular_solve(L, triangular_solve(L, reshape(use(vmean_), {e, m_, 1}), false), true);
        mean_e = sum(mul(psi1_t, reshape(alpha, {1, e, m_})), {2});

        Tensor w_ks = triangular_solve(L, triangular_solve(L, ls, false), true);  // K^-1 L_S
        Tensor a_proj = matmul(w_ks, transpose2(w_ks));
        proj_e = clamp0(sum(mul(psi2_t, reshape(a_proj, {1, e, m_, m_})), {2, 3}));

        if (orth_approx == OrthApprox::ExactPsi2) {
            Tensor k_inv = triangular_solve(L, triangular_solve(L, eye(m_), false), true);
            orth_e = clamp0(sub(sf2_row, sum(mul(psi2_t, reshape(k_inv, {1, zr, m_, m_})), {2, 3})));
        } else {
            orth_e = clamp0(mul(sf2_row, sub(Tensor::scalar(1.0), div(sum(square(psi1_t), {2}), s2))));
        }
        Tensor second = sum(mul(psi2_t, reshape(matmul(alpha, transpose2(alpha)), {1, e, m_, m_})), {2, 3});
        meanvar_e = clamp0(sub(second, square(mean_e)));
    }

    auto collapse = [&](const Tensor& t) { return sum(reshape(t, {b, d_out_, d_in_}), {2}); };

    LayerForward out;
    out.out.mean = add(collapse(mean_e), reshape(use(bias_), {1, d_out_}));
    out.projected = collapse(proj_e);
    out.orthogonal = collapse(orth_e);
    out.mean_variation = meanvar_e.defined() ? collapse(meanvar_e) : Tensor::zeros({b, d_out_});
    out.out.var = add(add(out.projected, out.orthogonal), out.mean_variation);
    return out;
}

Tensor GPKANLayer::kl() const {
    const i64 zr = zrows_;
    const i64 e = edge_count();
    Tensor z = use(z_);
    Tensor sf2 = exp(use(log_sf2_));
    Tensor len2 = exp(mul(use(log_len_), Tensor::scalar(2.0)));
    Tensor zi = reshape(z, {zr, m_, 1});
    Tensor zj = reshape(z, {zr, 1, m_});
    Tensor K = mul(reshape(sf2, {zr, 1, 1}),
                   exp(neg(div(square(sub(zi, zj)), mul(reshape(len2, {zr, 1, 1}), Tensor::scalar(2.0))))));
    Tensor L = cholesky_with_jitter(K, jitter_base);
    Tensor ls = add(diag_embed(exp(use(chol_diag_log_))), strict_lower_from_packed(use(chol_lower_), m_));

    Tensor tr_ks = sum(square(triangular_solve(L, ls, false)), {1, 2});
    Tensor maha = sum(square(triangular_solve(L, reshape(use(vmean_), {e, m_, 1}), false)), {1, 2});
    Tensor logdet_k = mul(sum(log(diagonal(L)), {1}, false), Tensor::scalar(2.0));
    Tensor logdet_s = mul(sum(use(chol_diag_log_), {1}, false), Tensor::scalar(2.0));
    Tensor kl_e = mul(add(sub(add(tr_ks, maha), Tensor::scalar(static_cast<double>(m_))),
                          sub(logdet_k, logdet_s)),
                      Tensor::scalar(0.5));
    return sum(kl_e);
}

}  // namespace svgpkan
