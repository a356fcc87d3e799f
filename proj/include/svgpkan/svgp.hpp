#pragma once

#include <string>
#include <utility>
#include <vector>

#include "svgpkan/kernels.hpp"
#include "svgpkan/ops.hpp"
#include "svgpkan/tape.hpp"

namespace svgpkan {

// Per-component predictive variance. projected flows through the inducing
// subspace, orthogonal is the Nystrom remainder reverting to the prior, and
// mean_variation is Var[mu(x)] under a stochastic input (zero for
// deterministic inputs).
struct VarianceBreakdown {
    double projected = 0.0;
    double orthogonal = 0.0;
    double mean_variation = 0.0;
    double total() const { return projected + orthogonal + mean_variation; }
};

enum class PsiMethod { ClosedForm, Quadrature };
enum class OrthApprox { ExactPsi2, Psi1OverInputVar };

// One scalar-input GP edge: inducing locations z, variational posterior
// q(u) = N(vmean, L_S L_S^T) with L_S stored as log-diagonal plus packed
// strict lower triangle.
struct EdgeGP {
    Tensor z;              // M
    Tensor vmean;          // M
    Tensor chol_diag_log;  // M
    Tensor chol_lower;     // M(M-1)/2, rows 1..M-1 packed row-major
    double log_signal_variance = 0.0;
    double log_lengthscale = 0.0;
    double jitter = 1e-6;

    i64 m() const { return z.size(); }
    KernelParams kernel() const;
    Tensor ls_dense() const;  // M x M lower-triangular Cholesky factor of S
    Tensor s_dense() const;   // L_S L_S^T
};

struct EdgeEval {
    double mean = 0.0;
    VarianceBreakdown variance;
};

// Posterior at a deterministic input x.
EdgeEval edge_posterior(const EdgeGP& e, double x);
// Moment-matched output for x ~ N(mu, var); var == 0 reduces to
// edge_posterior exactly.
EdgeEval edge_moment_match(const EdgeGP& e, double mu, double var,
                           PsiMethod method = PsiMethod::ClosedForm,
                           OrthApprox orth = OrthApprox::ExactPsi2, int quad_h = 20);
// KL(q(u) || p(u)) for one edge, closed form.
double edge_kl(const EdgeGP& e);

// Batched moments flowing between layers; var undefined means deterministic.
struct LayerMoments {
    Tensor mean;  // B x D
    Tensor var;   // B x D when defined

    bool stochastic() const { return var.defined(); }
};

struct LayerForward {
    LayerMoments out;
    // B x D_out components, defined whenever a variance was computed
    Tensor projected, orthogonal, mean_variation;
};

// Dense KAN layer of independent GP edges, edge e = j * d_in + i mapping
// input i to output j. All edges evaluate batched through the tape.
// shared_z trades per-edge flexibility for memory: one row of inducing
// locations and kernel hyperparameters serves every edge, so the M x M
// kernel solves are stored once instead of per edge. The variational
// posterior stays per-edge either way.
class GPKANLayer {
  public:
    GPKANLayer(i64 d_in, i64 d_out, i64 m, std::string name, bool shared_z = false);

    // Equally spaced inducing locations on [lo, hi] for every edge, then the
    // variational distribution is reset to the prior (so KL starts at 0).
    void init_inducing_uniform(double lo, double hi);
    // Per-input-dimension 1-d k-means on a sample batch (B x d_in).
    void init_inducing_kmeans(const Tensor& batch, int iters = 10);

    LayerForward forward(const LayerMoments& in) const;
    Tensor kl() const;  // scalar, sums edges

    std::vector<Param*> params();
    EdgeGP edge(i64 j, i64 i) const;

    i64 d_in() const { return d_in_; }
    i64 d_out() const { return d_out_; }
    i64 m() const { return m_; }
    i64 edge_count() const { return d_in_ * d_out_; }
    bool shared_z() const { return zrows_ == 1 && edge_count() > 1; }
    // rows of z / log_sf2 / log_len: 1 when shared, edge_count otherwise
    i64 hyper_rows() const { return zrows_; }
    // vmean + chol_diag_log + chol_lower entries per edge
    i64 variational_scalars_per_edge() const { return m_ + m_ + m_ * (m_ - 1) / 2; }
    const std::string& name() const { return name_; }

    PsiMethod psi_method = PsiMethod::ClosedForm;
    OrthApprox orth_approx = OrthApprox::ExactPsi2;
    double jitter_base = 1e-6;

    Param z_;              // R x M, R = hyper_rows()
    Param vmean_;          // E x M
    Param chol_diag_log_;  // E x M
    Param chol_lower_;     // E x M(M-1)/2
    Param log_sf2_;        // R
    Param log_len_;        // R
    Param bias_;           // D_out

  private:
    void reset_variational_to_prior();
    i64 d_in_, d_out_, m_, zrows_;
    std::string name_;
};

// Cholesky of K + jitter*mean(diag(K))*I, escalating jitter by 10x up to
// 1e-2 before giving up and rethrowing.
Tensor cholesky_with_jitter(const Tensor& K, double base_jitter);

}  // namespace svgpkan
