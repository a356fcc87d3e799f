#include "svgpkan/checks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>
#include <sstream>

#include "svgpkan/adam.hpp"
#include "svgpkan/cli.hpp"
#include "svgpkan/datagen.hpp"
#include "svgpkan/kernels.hpp"
#include "svgpkan/likelihoods.hpp"
#include "svgpkan/nn.hpp"
#include "svgpkan/ops.hpp"
#include "svgpkan/svgp.hpp"

namespace svgpkan {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

std::string fmt3(double v) {
    std::ostringstream os;
    os.precision(3);
    os << std::scientific << v;
    return os.str();
}

double rel(double a, double b, double floor = 1e-2) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

Tensor randt(const Shape& shape, Rng& rng, double lo, double hi) {
    std::vector<double> d(static_cast<size_t>(numel(shape)));
    for (auto& v : d) v = rng.uniform(lo, hi);
    return Tensor::from_data(shape, std::move(d));
}

// Central finite differences on sampled entries of each param, against one
// taped backward pass. Loss evaluations for the stencil run untaped.
double fd_sampled(const std::function<Tensor()>& loss_fn, const std::vector<Param*>& params,
                  i64 per_param, double eps, Rng& rng) {
    Tape tape;
    {
        TapeScope scope(tape);
        tape.backward(loss_fn());
    }
    double worst = 0.0;
    for (Param* p : params) {
        Tensor g = tape.grad(*p);
        const i64 n = p->value.size();
        if (n == 0) continue;
        for (i64 t = 0; t < per_param; ++t) {
            i64 idx = static_cast<i64>(rng.next_u64() % static_cast<std::uint64_t>(n));
            double* d = p->value.mutable_data();
            const double orig = d[idx];
            d[idx] = orig + eps;
            double up = loss_fn().item();
            d[idx] = orig - eps;
            double dn = loss_fn().item();
            d[idx] = orig;
            worst = std::max(worst, rel(g.at(idx), (up - dn) / (2.0 * eps)));
        }
    }
    return worst;
}

// Central finite differences of directional derivatives along random unit
// directions over the whole parameter vector, compared in l2 norm across the
// direction set. Per-entry stencils drown in round-off once a model carries
// jitter-floored solves (measured here: the loss reproduces only to ~4e-9
// relative, which is eps-sized for small gradient entries), and even a single
// direction can land near-orthogonal to the gradient where that noise floor
// dominates its slope. The norm over directions keeps the certificate tied to
// the gradient's actual scale.
double fd_directional(const std::function<Tensor()>& loss_fn, const std::vector<Param*>& params,
                      i64 n_dirs, double eps, Rng& rng) {
    Tape tape;
    {
        TapeScope scope(tape);
        tape.backward(loss_fn());
    }
    std::vector<Tensor> grads;
    grads.reserve(params.size());
    for (Param* p : params) grads.push_back(tape.grad(*p));

    double an_sq = 0.0;
    double err_sq = 0.0;
    for (i64 t = 0; t < n_dirs; ++t) {
        std::vector<std::vector<double>> dir(params.size());
        double nrm = 0.0;
        for (size_t pi = 0; pi < params.size(); ++pi) {
            dir[pi].resize(static_cast<size_t>(params[pi]->value.size()));
            for (double& v : dir[pi]) {
                v = rng.normal();
                nrm += v * v;
            }
        }
        nrm = std::sqrt(nrm);
        double an = 0.0;
        for (size_t pi = 0; pi < params.size(); ++pi)
            for (i64 i = 0; i < grads[pi].size(); ++i)
                an += grads[pi].at(i) * dir[pi][static_cast<size_t>(i)] / nrm;
        auto shift = [&](double s) {
            for (size_t pi = 0; pi < params.size(); ++pi) {
                double* d = params[pi]->value.mutable_data();
                for (i64 i = 0; i < params[pi]->value.size(); ++i)
                    d[i] += s * dir[pi][static_cast<size_t>(i)] / nrm;
            }
        };
        shift(eps);
        double up = loss_fn().item();
        shift(-2.0 * eps);
        double dn = loss_fn().item();
        shift(eps);
        double fd = (up - dn) / (2.0 * eps);
        an_sq += an * an;
        err_sq += (an - fd) * (an - fd);
    }
    return an_sq > 0.0 ? std::sqrt(err_sq / an_sq) : std::sqrt(err_sq);
}

// ---- small dense helpers (row major, plain doubles) ----

std::vector<double> dense_chol(std::vector<double> a, i64 n) {
    for (i64 j = 0; j < n; ++j) {
        double d = a[static_cast<size_t>(j * n + j)];
        for (i64 k = 0; k < j; ++k) d -= a[static_cast<size_t>(j * n + k)] * a[static_cast<size_t>(j * n + k)];
        if (d <= 0.0) throw std::runtime_error("dense_chol: not positive definite");
        d = std::sqrt(d);
        a[static_cast<size_t>(j * n + j)] = d;
        for (i64 i = j + 1; i < n; ++i) {
            double s = a[static_cast<size_t>(i * n + j)];
            for (i64 k = 0; k < j; ++k) s -= a[static_cast<size_t>(i * n + k)] * a[static_cast<size_t>(j * n + k)];
            a[static_cast<size_t>(i * n + j)] = s / d;
        }
        for (i64 k = j + 1; k < n; ++k) a[static_cast<size_t>(j * n + k)] = 0.0;
    }
    return a;
}

// Solves (L L^T) x = b for one right-hand side.
std::vector<double> chol_solve(const std::vector<double>& L, i64 n, std::vector<double> b) {
    for (i64 i = 0; i < n; ++i) {
        double s = b[static_cast<size_t>(i)];
        for (i64 k = 0; k < i; ++k) s -= L[static_cast<size_t>(i * n + k)] * b[static_cast<size_t>(k)];
        b[static_cast<size_t>(i)] = s / L[static_cast<size_t>(i * n + i)];
    }
    for (i64 i = n - 1; i >= 0; --i) {
        double s = b[static_cast<size_t>(i)];
        for (i64 k = i + 1; k < n; ++k) s -= L[static_cast<size_t>(k * n + i)] * b[static_cast<size_t>(k)];
        b[static_cast<size_t>(i)] = s / L[static_cast<size_t>(i * n + i)];
    }
    return b;
}

std::vector<double> dense_inverse_spd(const std::vector<double>& a, i64 n) {
    std::vector<double> L = dense_chol(a, n);
    std::vector<double> inv(static_cast<size_t>(n * n));
    for (i64 c = 0; c < n; ++c) {
        std::vector<double> e(static_cast<size_t>(n), 0.0);
        e[static_cast<size_t>(c)] = 1.0;
        std::vector<double> x = chol_solve(L, n, std::move(e));
        for (i64 r = 0; r < n; ++r) inv[static_cast<size_t>(r * n + c)] = x[static_cast<size_t>(r)];
    }
    return inv;
}

// ---- random edges and the dense KL oracle ----

// Same family as the unit-test oracles: well separated z keeps K at the base
// jitter level and in the conditioning regime where 1e-8 comparisons hold.
EdgeGP random_edge(Rng& rng, i64 m) {
    EdgeGP e;
    std::vector<double> z(static_cast<size_t>(m));
    for (i64 k = 0; k < m; ++k)
        z[static_cast<size_t>(k)] =
            -2.0 + 4.0 * static_cast<double>(k) / static_cast<double>(m - 1) + rng.uniform(-0.05, 0.05);
    e.z = Tensor::from_data({m}, std::move(z));

    std::vector<double> vm(static_cast<size_t>(m)), cd(static_cast<size_t>(m));
    for (auto& v : vm) v = 0.6 * rng.normal();
    for (auto& v : cd) v = rng.uniform(-1.2, 0.1);
    e.vmean = Tensor::from_data({m}, std::move(vm));
    e.chol_diag_log = Tensor::from_data({m}, std::move(cd));
    std::vector<double> cl(static_cast<size_t>(m * (m - 1) / 2));
    for (auto& v : cl) v = 0.2 * rng.normal();
    e.chol_lower = Tensor::from_data({m * (m - 1) / 2}, std::move(cl));
    e.log_signal_variance = rng.uniform(-0.7, 0.7);
    e.log_lengthscale = rng.uniform(-0.5, 0.3);
    return e;
}

// K with the same base jitter edge_kl applies (mean diag of the SE gram is
// exactly sf2). Inducing sites stay well separated so jitter never escalates.
std::vector<double> k_eff_dense(const EdgeGP& e) {
    const i64 m = e.m();
    Tensor K = gram(e.z, e.kernel());
    std::vector<double> k(K.data(), K.data() + m * m);
    const double sf2 = e.kernel().signal_variance();
    for (i64 i = 0; i < m; ++i) k[static_cast<size_t>(i * m + i)] += e.jitter * sf2;
    return k;
}

double dense_kl_oracle(const EdgeGP& e, bool flip_logdet_sign) {
    const i64 m = e.m();
    std::vector<double> k = k_eff_dense(e);
    std::vector<double> kinv = dense_inverse_spd(k, m);
    std::vector<double> L = dense_chol(k, m);

    Tensor S = e.s_dense();
    double tr = 0.0;
    for (i64 i = 0; i < m * m; ++i) tr += kinv[static_cast<size_t>(i)] * S.at(i);
    double maha = 0.0;
    for (i64 i = 0; i < m; ++i)
        for (i64 j = 0; j < m; ++j)
            maha += e.vmean.at(i) * kinv[static_cast<size_t>(i * m + j)] * e.vmean.at(j);
    double logdet_k = 0.0;
    for (i64 i = 0; i < m; ++i) logdet_k += 2.0 * std::log(L[static_cast<size_t>(i * m + i)]);
    double logdet_s = 0.0;
    for (i64 i = 0; i < m; ++i) logdet_s += 2.0 * e.chol_diag_log.at(i);
    double ratio = logdet_k - logdet_s;
    if (flip_logdet_sign) ratio = -ratio;
    return 0.5 * (tr + maha - static_cast<double>(m) + ratio);
}

// Plain-double posterior evaluator, precomputed once per edge, so the Monte
// Carlo oracle can afford 1e6 samples.
struct EdgeFast {
    i64 m;
    double sf2, len2;
    std::vector<double> z, alpha, kinv, kss;  // kss = K^-1 S K^-1

    explicit EdgeFast(const EdgeGP& e) : m(e.m()) {
        sf2 = e.kernel().signal_variance();
        const double len = e.kernel().lengthscale();
        len2 = len * len;
        z.assign(e.z.data(), e.z.data() + m);
        std::vector<double> k = k_eff_dense(e);
        kinv = dense_inverse_spd(k, m);
        std::vector<double> vm(e.vmean.data(), e.vmean.data() + m);
        std::vector<double> L = dense_chol(k, m);
        alpha = chol_solve(L, m, vm);
        Tensor S = e.s_dense();
        std::vector<double> sk(static_cast<size_t>(m * m), 0.0);  // S K^-1
        for (i64 i = 0; i < m; ++i)
            for (i64 j = 0; j < m; ++j) {
                double s = 0.0;
                for (i64 t = 0; t < m; ++t) s += S.at(i * m + t) * kinv[static_cast<size_t>(t * m + j)];
                sk[static_cast<size_t>(i * m + j)] = s;
            }
        kss.assign(static_cast<size_t>(m * m), 0.0);
        for (i64 i = 0; i < m; ++i)
            for (i64 j = 0; j < m; ++j) {
                double s = 0.0;
                for (i64 t = 0; t < m; ++t) s += kinv[static_cast<size_t>(i * m + t)] * sk[static_cast<size_t>(t * m + j)];
                kss[static_cast<size_t>(i * m + j)] = s;
            }
    }

    // posterior mean and total variance at a deterministic x
    void eval(double x, double& mu, double& var) const {
        thread_local std::vector<double> kx;
        kx.resize(static_cast<size_t>(m));
        for (i64 j = 0; j < m; ++j) {
            double d = x - z[static_cast<size_t>(j)];
            kx[static_cast<size_t>(j)] = sf2 * std::exp(-d * d / (2.0 * len2));
        }
        mu = 0.0;
        double qproj = 0.0, qk = 0.0;
        for (i64 i = 0; i < m; ++i) {
            mu += kx[static_cast<size_t>(i)] * alpha[static_cast<size_t>(i)];
            double rowp = 0.0, rowk = 0.0;
            for (i64 j = 0; j < m; ++j) {
                rowp += kss[static_cast<size_t>(i * m + j)] * kx[static_cast<size_t>(j)];
                rowk += kinv[static_cast<size_t>(i * m + j)] * kx[static_cast<size_t>(j)];
            }
            qproj += kx[static_cast<size_t>(i)] * rowp;
            qk += kx[static_cast<size_t>(i)] * rowk;
        }
        var = qproj + (sf2 - qk);
    }
};

struct Checker {
    std::vector<CheckResult> results;
    void add(const std::string& name, bool pass, const std::string& detail) {
        results.push_back({name, pass, detail});
    }
};

// ---- criterion: gradient correctness ----

void check_gradients(Checker& c, bool full_scale) {
    Rng rng(101);
    const double tol_op = 1e-4;

    struct OpCase {
        const char* name;
        std::function<Tensor(Param&, Param&)> loss;
    };
    // Two shared 3x4 params; each loss isolates one op inside a smooth chain.
    const std::vector<OpCase> elementwise = {
        {"add", [](Param& a, Param& b) { return sum(add(use(a), use(b))); }},
        {"sub", [](Param& a, Param& b) { return sum(square(sub(use(a), use(b)))); }},
        {"mul", [](Param& a, Param& b) { return sum(mul(use(a), use(b))); }},
        {"div", [](Param& a, Param& b) { return sum(div(use(a), add(square(use(b)), Tensor::scalar(1.0)))); }},
        {"neg", [](Param& a, Param& b) { return sum(mul(neg(use(a)), use(b))); }},
        {"exp", [](Param& a, Param& b) { return sum(exp(mul(use(a), use(b)))); }},
        {"log", [](Param& a, Param& b) { return sum(log(add(square(use(a)), add(square(use(b)), Tensor::scalar(0.5))))); }},
        {"sqrt", [](Param& a, Param& b) { return sum(sqrt(add(square(use(a)), add(square(use(b)), Tensor::scalar(0.3))))); }},
        {"square", [](Param& a, Param& b) { return sum(square(add(use(a), use(b)))); }},
        {"relu", [](Param& a, Param& b) { return sum(relu(mul(use(a), use(b)))); }},
        {"softplus", [](Param& a, Param& b) { return sum(softplus(mul(use(a), use(b)))); }},
        {"clamp_min", [](Param& a, Param& b) { return sum(clamp_min(mul(use(a), use(b)), 0.2)); }},
    };
    double worst = 0.0;
    const char* worst_op = "";
    for (const auto& oc : elementwise) {
        Param a("a", randt({3, 4}, rng, 0.4, 1.6));
        Param b("b", randt({3, 4}, rng, 0.4, 1.6));
        double e = fd_sampled([&] { return oc.loss(a, b); }, {&a, &b}, 4, 1e-5, rng);
        if (e > worst) {
            worst = e;
            worst_op = oc.name;
        }
    }
    c.add("grad: elementwise ops", worst < tol_op,
          "worst rel err " + fmt3(worst) + " (" + worst_op + ")");

    // reductions and shape movers
    worst = 0.0;
    worst_op = "";
    const std::vector<OpCase> shape_ops = {
        {"sum_axes", [](Param& a, Param& b) {
             return sum(mul(sum(use(a), {0}, false), sum(use(b), {1}, true))); }},
        {"mean_axes", [](Param& a, Param& b) {
             return sum(mul(mean(use(a), {1}, true), mean(use(b), {0}, false))); }},
        {"mean_full", [](Param& a, Param& b) { return mean(mul(use(a), use(b))); }},
        {"reshape", [](Param& a, Param& b) {
             return sum(mul(reshape(use(a), {4, 3}), reshape(use(b), {4, 3}))); }},
        {"slice", [](Param& a, Param& b) {
             return sum(mul(slice(use(a), {1, 0}, {3, 3}), slice(use(b), {0, 1}, {2, 4}))); }},
        {"concat", [](Param& a, Param& b) {
             return sum(square(concat({use(a), use(b)}, 1))); }},
        {"broadcast_to", [](Param& a, Param& b) {
             return sum(mul(broadcast_to(slice(use(a), {0, 0}, {1, 4}), {3, 4}), use(b))); }},
        {"permute", [](Param& a, Param& b) {
             return sum(mul(permute(use(a), {1, 0}), transpose2(use(b)))); }},
    };
    for (const auto& oc : shape_ops) {
        Param a("a", randt({3, 4}, rng, -1.0, 1.0));
        Param b("b", randt({3, 4}, rng, -1.0, 1.0));
        double e = fd_sampled([&] { return oc.loss(a, b); }, {&a, &b}, 4, 1e-5, rng);
        if (e > worst) {
            worst = e;
            worst_op = oc.name;
        }
    }
    c.add("grad: reduction and shape ops", worst < tol_op,
          "worst rel err " + fmt3(worst) + " (" + worst_op + ")");

    // linear algebra: matmul, cholesky, triangular_solve, diag plumbing
    {
        Param a("a", randt({4, 4}, rng, -0.6, 0.6));
        Param dvec("dvec", randt({4}, rng, -0.3, 0.3));
        Param packed("packed", randt({6}, rng, -0.4, 0.4));
        Param rhs("rhs", randt({4, 2}, rng, -1.0, 1.0));
        auto loss = [&] {
            Tensor spd = add(matmul(use(a), transpose2(use(a))),
                             diag_embed(add(exp(use(dvec)), Tensor::scalar(1.0))));
            Tensor L = cholesky(spd);
            Tensor x = triangular_solve(L, use(rhs), false);
            Tensor y = triangular_solve(L, x, true);
            Tensor ld = sum(log(diagonal(L)));
            Tensor lower = strict_lower_from_packed(use(packed), 4);
            return add(add(sum(square(y)), ld), sum(square(matmul(lower, use(rhs)))));
        };
        double e = fd_sampled(loss, {&a, &dvec, &packed, &rhs}, 5, 1e-5, rng);
        c.add("grad: linear algebra ops", e < tol_op, "worst rel err " + fmt3(e));
    }

    // convolutions, forward and transposed
    {
        Param x("x", randt({2, 2, 6, 6}, rng, -1.0, 1.0));
        Param w1("w1", randt({3, 2, 3, 3}, rng, -0.5, 0.5));
        Param w2("w2", randt({3, 2, 3, 3}, rng, -0.5, 0.5));
        auto loss = [&] {
            Tensor h = conv2d(use(x), use(w1), 2, 1);          // 2 x 3 x 3 x 3
            Tensor s = softplus(h);                            // keep it smooth for FD
            Tensor o = conv_transpose2d(s, use(w2), 2, 1, 1);  // 2 x 2 x 6 x 6
            return sum(square(o));
        };
        double e = fd_sampled(loss, {&x, &w1, &w2}, full_scale ? 8 : 5, 1e-5, rng);
        c.add("grad: convolution ops", e < tol_op, "worst rel err " + fmt3(e));
    }

    // the full heteroscedastic ELBO, end to end through both networks
    {
        StudyANet net = build_study_a_net(20);
        const i64 b = 6;
        Tensor x = randt({b, 2}, rng, 0.05, 0.95);
        Tensor y = randt({b, 2}, rng, -0.8, 0.8);
        auto loss = [&] {
            NetTrace f = net.mean_net.forward(x, ForwardMode::MomentMatched);
            NetTrace g = net.noise_net.forward(x, ForwardMode::MomentMatched);
            Tensor nll = hetero_expected_nll(y, f.out.mean, f.out.var, g.out.mean, g.out.var);
            Tensor kl = add(net.mean_net.kl(), net.noise_net.kl());
            return negative_elbo(nll, 4096.0, static_cast<double>(b), kl, 0.01);
        };
        std::vector<Param*> params = net.mean_net.params();
        for (Param* p : net.noise_net.params()) params.push_back(p);
        // A few optimizer steps move the parameters off the symmetric init to
        // a generic point while staying in the regime training visits (random
        // perturbations of the variational parameters get amplified by the
        // ill-conditioned K^-1 and leave the smooth region).
        AdamConfig ocfg;
        ocfg.lr = 2e-3;
        Adam opt(params, ocfg);
        for (int step = 0; step < 5; ++step) {
            Tape t;
            std::vector<Tensor> grads;
            {
                TapeScope sc(t);
                t.backward(loss());
            }
            grads.reserve(params.size());
            for (Param* p : params) grads.push_back(t.grad(*p));
            opt.step(grads);
        }
        double e = fd_directional(loss, params, full_scale ? 8 : 4, 5e-4, rng);
        c.add("grad: full elbo end to end",
              e < 1e-3, "directional rel err " + fmt3(e));
    }
}

// ---- criterion: KL oracle ----

void check_kl(Checker& c) {
    Rng rng(202);
    double worst = 0.0, worst_mut = 0.0;
    for (int t = 0; t < 20; ++t) {
        EdgeGP e = random_edge(rng, 5);
        double want = dense_kl_oracle(e, false);
        double got = edge_kl(e);
        worst = std::max(worst, rel(got, want, 1e-9));
        worst_mut = std::max(worst_mut, rel(dense_kl_oracle(e, true), want, 1e-9));
    }
    c.add("kl: matches dense gaussian oracle (m=5)", worst < 1e-8, "worst rel err " + fmt3(worst));
    // the probe: a log-det sign flip must not survive the same comparison
    c.add("kl: oracle flags an injected logdet sign flip", worst_mut > 1e-3 && worst < 1e-8,
          "mutant rel err " + fmt3(worst_mut));

    // q = p exactly: build L_S from the jittered prior Cholesky
    double worst_prior = 0.0;
    for (int t = 0; t < 5; ++t) {
        EdgeGP e = random_edge(rng, 5);
        const i64 m = e.m();
        std::vector<double> L = dense_chol(k_eff_dense(e), m);
        std::vector<double> diag_log(static_cast<size_t>(m));
        std::vector<double> lower(static_cast<size_t>(m * (m - 1) / 2));
        i64 at = 0;
        for (i64 i = 0; i < m; ++i) {
            diag_log[static_cast<size_t>(i)] = std::log(L[static_cast<size_t>(i * m + i)]);
            for (i64 j = 0; j < i; ++j) lower[static_cast<size_t>(at++)] = L[static_cast<size_t>(i * m + j)];
        }
        e.vmean = Tensor::zeros({m});
        e.chol_diag_log = Tensor::from_data({m}, std::move(diag_log));
        e.chol_lower = Tensor::from_data({m * (m - 1) / 2}, std::move(lower));
        worst_prior = std::max(worst_prior, std::abs(edge_kl(e)));
    }
    c.add("kl: zero at q = p", worst_prior < 1e-9, "worst |kl| " + fmt3(worst_prior));

    double min_kl = 0.0;
    for (int t = 0; t < 200; ++t) {
        EdgeGP e = random_edge(rng, 2 + static_cast<i64>(rng.next_u64() % 7));
        min_kl = std::min(min_kl, edge_kl(e));
    }
    c.add("kl: nonnegative on random posteriors", min_kl >= -1e-10, "min kl " + fmt3(min_kl));
}

// ---- criterion: moment matching ----

void check_moment_matching(Checker& c, bool full_scale) {
    Rng rng(303);
    const int n_edges = full_scale ? 50 : 8;
    const i64 n_mc = full_scale ? 1000000 : 200000;

    double worst_mean_z = 0.0, worst_var_rel = 0.0;
    bool all_ok = true;
    for (int t = 0; t < n_edges; ++t) {
        EdgeGP e = random_edge(rng, 8);
        EdgeFast fast(e);
        const double mu0 = rng.uniform(-1.5, 1.5);
        const double var0 = rng.uniform(0.05, 0.8);
        const double sd0 = std::sqrt(var0);

        double sum_mu = 0.0, sum_mu2 = 0.0, sum_var = 0.0;
        for (i64 s = 0; s < n_mc; ++s) {
            double x = mu0 + sd0 * rng.normal();
            double m, v;
            fast.eval(x, m, v);
            sum_mu += m;
            sum_mu2 += m * m;
            sum_var += v;
        }
        const double n = static_cast<double>(n_mc);
        const double mc_mean = sum_mu / n;
        const double mu_var = sum_mu2 / n - mc_mean * mc_mean;  // Var[mu(x)]
        const double mc_total_var = sum_var / n + mu_var;
        const double se_mean = std::sqrt(std::max(mu_var, 0.0) / n);

        EdgeEval ev = edge_moment_match(e, mu0, var0);
        const double zerr = std::abs(ev.mean - mc_mean) / std::max(se_mean, 1e-12);
        const double vrel = std::abs(ev.variance.total() - mc_total_var) / mc_total_var;
        worst_mean_z = std::max(worst_mean_z, zerr);
        worst_var_rel = std::max(worst_var_rel, vrel);
        if (zerr > 3.0 || vrel > 0.05) all_ok = false;
    }
    std::ostringstream det;
    det << n_edges << " edges x " << n_mc << " samples; worst mean z " << fmt3(worst_mean_z)
        << ", worst var rel " << fmt3(worst_var_rel);
    c.add("moment match: against monte carlo", all_ok, det.str());

    double worst_limit = 0.0;
    for (int t = 0; t < 20; ++t) {
        EdgeGP e = random_edge(rng, 7);
        const double x = rng.uniform(-2.2, 2.2);
        EdgeEval mm = edge_moment_match(e, x, 0.0);
        EdgeEval ex = edge_posterior(e, x);
        worst_limit = std::max({worst_limit, rel(mm.mean, ex.mean),
                                rel(mm.variance.projected, ex.variance.projected),
                                rel(mm.variance.orthogonal, ex.variance.orthogonal),
                                std::abs(mm.variance.mean_variation)});
    }
    c.add("moment match: zero input variance reduces to the posterior", worst_limit < 1e-8,
          "worst rel err " + fmt3(worst_limit));

    double worst_psi = 0.0;
    for (int t = 0; t < 20; ++t) {
        EdgeGP e = random_edge(rng, 8);
        const double len = e.kernel().lengthscale();
        const double mu0 = rng.uniform(-1.5, 1.5);
        // var below the lengthscale scale keeps the h=40 rule resolving the mass
        const double var0 = rng.uniform(0.02, 0.8) * len * len;
        KernelParams p = e.kernel();
        Tensor p1 = psi1(mu0, var0, e.z, p);
        Tensor p1q = psi1_quadrature(mu0, var0, e.z, p, 40);
        for (i64 i = 0; i < p1.size(); ++i)
            worst_psi = std::max(worst_psi, rel(p1.at(i), p1q.at(i), 1e-12));
        Tensor p2 = psi2(mu0, var0, e.z, p);
        Tensor p2q = psi2_quadrature(mu0, var0, e.z, p, 40);
        for (i64 i = 0; i < p2.size(); ++i)
            worst_psi = std::max(worst_psi, rel(p2.at(i), p2q.at(i), 1e-12));
    }
    c.add("moment match: psi statistics vs gauss-hermite (h=40)", worst_psi < 1e-7,
          "worst rel err " + fmt3(worst_psi));
}

// ---- criterion: prior reversion ----

void check_prior_reversion(Checker& c) {
    Rng rng(404);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
        EdgeGP e = random_edge(rng, 8);
        const double sf2 = e.kernel().signal_variance();
        const double len = e.kernel().lengthscale();
        double zmin = e.z.at(0), zmax = e.z.at(0);
        for (i64 i = 0; i < e.m(); ++i) {
            zmin = std::min(zmin, e.z.at(i));
            zmax = std::max(zmax, e.z.at(i));
        }
        for (double x : {zmax + 10.0 * len, zmin - 10.0 * len}) {
            EdgeEval ev = edge_posterior(e, x);
            worst = std::max(worst, std::abs(ev.variance.total() - sf2) / sf2);
        }
    }
    c.add("prior reversion: variance 10 lengthscales out", worst < 0.10,
          "worst rel dev " + fmt3(worst));
}

// ---- criterion: PDE properties ----

void check_pde(Checker& c) {
    Rng rng(505);
    const i64 g = 32;
    const double kappa = 0.01, dt = 0.05;
    Field2D T = smooth_random_field(rng, g, g, 0.0, kTwoPi, 0.0, kTwoPi);
    Field2D zero(g, g, 0.0, kTwoPi, 0.0, kTwoPi, true);
    const double mean0 =
        std::accumulate(T.v.begin(), T.v.end(), 0.0) / static_cast<double>(T.v.size());

    double worst_mean = 0.0;
    bool max_ok = true;
    double prev_max = *std::max_element(T.v.begin(), T.v.end());
    double prev_min = *std::min_element(T.v.begin(), T.v.end());
    for (i64 s = 0; s < 100; ++s) {
        T = advection_diffusion_step(T, zero, zero, kappa, dt, zero, s);
        const double m =
            std::accumulate(T.v.begin(), T.v.end(), 0.0) / static_cast<double>(T.v.size());
        worst_mean = std::max(worst_mean, std::abs(m - mean0));
        const double mx = *std::max_element(T.v.begin(), T.v.end());
        const double mn = *std::min_element(T.v.begin(), T.v.end());
        if (mx > prev_max + 1e-12 || mn < prev_min - 1e-12) max_ok = false;
        prev_max = mx;
        prev_min = mn;
    }
    c.add("pde: diffusion conserves the mean", worst_mean < 1e-12, "worst drift " + fmt3(worst_mean));
    c.add("pde: discrete maximum principle", max_ok,
          max_ok ? "extrema monotone over 100 steps" : "an extremum grew");

    // single Fourier mode: amplitude decays by the discrete symbol per step
    const i64 k = 3, steps = 50;
    Field2D M(g, g, 0.0, kTwoPi, 0.0, kTwoPi, true);
    for (i64 r = 0; r < g; ++r)
        for (i64 col = 0; col < g; ++col) M.at(r, col) = std::sin(static_cast<double>(k) * M.x_of(col));
    const double amp0 = std::sqrt(2.0 * std::inner_product(M.v.begin(), M.v.end(), M.v.begin(), 0.0) /
                                  static_cast<double>(M.v.size()));
    const double dx = M.dx();
    const double sym = std::sin(3.14159265358979323846 * static_cast<double>(k) / static_cast<double>(g));
    const double factor = 1.0 - kappa * dt * 4.0 * sym * sym / (dx * dx);
    for (i64 s = 0; s < steps; ++s) M = advection_diffusion_step(M, zero, zero, kappa, dt, zero, s);
    const double amp = std::sqrt(2.0 * std::inner_product(M.v.begin(), M.v.end(), M.v.begin(), 0.0) /
                                 static_cast<double>(M.v.size()));
    const double want = amp0 * std::pow(factor, static_cast<double>(steps));
    const double err = rel(amp, want, 1e-9);
    c.add("pde: fourier mode decay matches the discrete symbol", err < 0.01,
          "rel err " + fmt3(err));
}

}  // namespace

std::vector<CheckResult> run_property_checks(bool full_scale) {
    Checker c;
    check_gradients(c, full_scale);
    check_kl(c);
    check_moment_matching(c, full_scale);
    check_prior_reversion(c);
    check_pde(c);
    return c.results;
}

int run_selftest(std::ostream& out) {
    std::vector<CheckResult> results = run_property_checks(false);
    int failures = 0;
    for (const auto& r : results) {
        out << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << " (" << r.detail << ")\n";
        if (!r.pass) ++failures;
    }
    out << (failures == 0 ? "selftest: all checks passed" : "selftest: FAILURES") << " ("
        << results.size() - failures << "/" << results.size() << ")\n";
    return failures;
}

}  // namespace svgpkan
