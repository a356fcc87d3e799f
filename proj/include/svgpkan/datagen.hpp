#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "svgpkan/rng.hpp"
#include "svgpkan/tensor.hpp"

namespace svgpkan {

// Regular grid sampling of a scalar field. Row r maps to y, column c to x,
// data row major. Periodic grids exclude the right/top endpoint (spacing =
// range / extent), open grids include both endpoints (range / (extent - 1)).
struct Field2D {
    i64 h = 0, w = 0;
    double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
    bool periodic = false;
    std::vector<double> v;

    Field2D() = default;
    Field2D(i64 h_, i64 w_, double x0_, double x1_, double y0_, double y1_, bool per)
        : h(h_), w(w_), x0(x0_), x1(x1_), y0(y0_), y1(y1_), periodic(per),
          v(static_cast<size_t>(h_ * w_), 0.0) {}

    double dx() const { return (x1 - x0) / static_cast<double>(periodic ? w : w - 1); }
    double dy() const { return (y1 - y0) / static_cast<double>(periodic ? h : h - 1); }
    double x_of(i64 c) const { return x0 + static_cast<double>(c) * dx(); }
    double y_of(i64 r) const { return y0 + static_cast<double>(r) * dy(); }
    double& at(i64 r, i64 c) { return v[static_cast<size_t>(r * w + c)]; }
    double at(i64 r, i64 c) const { return v[static_cast<size_t>(r * w + c)]; }
    bool same_grid(const Field2D& o) const {
        return h == o.h && w == o.w && x0 == o.x0 && x1 == o.x1 && y0 == o.y0 && y1 == o.y1 &&
               periodic == o.periodic;
    }
};

struct FlowField {
    Field2D vx, vy;
};

// One sine-product stream mode: amplitude * sin(n pi x / L) * sin(m pi y / L).
struct StreamMode {
    double amplitude;
    int n;
    int m;
};

// The three-mode spectrum used by the calibration study.
std::vector<StreamMode> study_a_modes();

// Velocity field of the superposed stream function on the open grid [0, L]^2:
// vx = d(psi)/dy, vy = -d(psi)/dx, differentiated analytically per mode.
FlowField stream_function_flow(const std::vector<StreamMode>& modes, double length, i64 h, i64 w);

// sigma^2(x, y) = sigma_base_sq * (1 + a_noise * exp(-((x-xc)^2+(y-yc)^2)/(2 r^2)))
// on the open grid [0,1]^2.
Field2D noise_variance_field(double sigma_base_sq, double a_noise, double xc, double yc,
                             double r, i64 h, i64 w);

// Study A defaults: sigma_base = 0.05, a_noise = 8, bump at (0.7, 0.3), r = 0.15.
Field2D study_a_noise_field(i64 h, i64 w);

struct ObservationBatch {
    std::vector<double> x, y;    // sample coordinates
    std::vector<double> vx, vy;  // noisy velocity components
    std::vector<double> noise_var;  // true sigma^2 at each sample
    i64 size() const { return static_cast<i64>(x.size()); }
};

// batch samples at uniformly random grid sites, each velocity component
// corrupted independently by N(0, sigma^2(site)).
ObservationBatch sample_noisy_observations(const FlowField& flow, const Field2D& noise_var,
                                           Rng& rng, i64 batch);

// One noisy draw at every grid site, row major. A fresh rng gives a fresh
// realization of the same ground truth.
ObservationBatch noisy_field_realization(const FlowField& flow, const Field2D& noise_var,
                                         Rng& rng);

struct PdeError : std::runtime_error {
    i64 step;
    PdeError(i64 s, const std::string& msg) : std::runtime_error(msg), step(s) {}
};

// Forward Euler step of dT/dt = -u.grad(T) + kappa lap(T) + S with periodic
// central differences and the 5-point Laplacian. source may be empty (zero).
// Violated CFL bounds warn on stderr (once per process); NaN in the result
// throws PdeError carrying step_index.
Field2D advection_diffusion_step(const Field2D& T, const Field2D& u, const Field2D& v,
                                 double kappa, double dt, const Field2D& source,
                                 i64 step_index);

// Time-dependent incompressible flow on the periodic grid [0,2pi]^2 from
//   psi = sin(2x + wt) cos(y) + 0.5 cos(x) sin(2y - 0.5wt),  w = 0.1,
// analytically differentiated, then rescaled so the grid maximum speed is
// exactly 0.5 at this t.
FlowField time_dependent_velocity(double t, i64 h, i64 w);

using VelocityFn = std::function<FlowField(double t, i64 h, i64 w)>;

struct SensitivityResult {
    double factor;        // mean |dT(final)| / mean |dT(0)|
    double initial_diff;  // mean |dT(0)|
    double final_diff;    // mean |dT(final)|
};

// Evolves T0 and a perturbed copy through `steps` ground-truth steps and
// reports the growth of their difference. The perturbation is a smooth
// low-wavenumber random field scaled to `perturbation` times the RMS of T0
// (white noise would be dissipated within a step or two, hiding the
// advective response). perturbation <= 0 or T0 identically zero is an error.
SensitivityResult physics_sensitivity_test(const Field2D& T0, i64 steps, double perturbation,
                                           double kappa, double dt, const Field2D& source,
                                           Rng& rng, const VelocityFn& velocity);

// Unscaled sum of a few low-wavenumber separable cosine modes with random
// amplitude and phase; smooth and periodic on the box by construction.
Field2D smooth_random_field(Rng& rng, i64 h, i64 w, double x0, double x1, double y0, double y1);

// Four Gaussian blobs of alternating sign (checkerboard corners at pi/2 and
// 3pi/2), amplitude 1, width 0.5, on the periodic grid [0,2pi]^2.
Field2D study_b_initial(i64 h, i64 w);

// Fixed random smooth source field, low wavenumbers only, scaled to max
// amplitude 0.02.
Field2D study_b_source(Rng& rng, i64 h, i64 w);

struct IdxError : std::runtime_error {
    enum class Kind { Unreadable, BadMagic, Truncated, CountMismatch };
    Kind kind;
    IdxError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

// Images stay raw uint8 so file round trips are bitwise; pixel01 exposes the
// [0,1] scale the models consume.
struct MnistData {
    i64 rows = 0, cols = 0;
    std::vector<std::uint8_t> pixels;  // count * rows * cols
    std::vector<std::uint8_t> labels;  // count

    i64 count() const { return static_cast<i64>(labels.size()); }
    double pixel01(i64 img, i64 r, i64 c) const {
        return static_cast<double>(
                   pixels[static_cast<size_t>((img * rows + r) * cols + c)]) /
               255.0;
    }
};

// Big-endian IDX pair (images magic 0x803, labels 0x801). Throws IdxError:
// Unreadable / BadMagic / Truncated / CountMismatch are distinct kinds.
MnistData load_mnist_idx(const std::string& images_path, const std::string& labels_path);

// Inverse of load_mnist_idx, canonical headers.
void write_mnist_idx(const std::string& images_path, const std::string& labels_path,
                     const MnistData& data);

MnistData filter_label(const MnistData& data, std::uint8_t label);
MnistData take(const MnistData& data, i64 n);

// 28x28 stand-in when no IDX files are available: jittered rings labeled 0
// and jittered top-bar-plus-diagonal strokes labeled 7, per_class of each.
MnistData synthetic_digit_fallback(Rng& rng, i64 per_class);

void write_csv(const Field2D& f, const std::string& path);
void write_csv(const ObservationBatch& b, const std::string& path);

// FNV-1a over raw bytes; field_hash feeds the golden regression tests.
std::uint64_t fnv1a64(const void* data, std::size_t n);
std::uint64_t field_hash(const Field2D& f);

}  // namespace svgpkan
