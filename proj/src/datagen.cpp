#include "svgpkan/datagen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

namespace svgpkan {

namespace {

const double kPi = 3.14159265358979323846;
const double kTwoPi = 2.0 * kPi;

double min_image(double d, double range) {
    while (d > 0.5 * range) d -= range;
    while (d < -0.5 * range) d += range;
    return d;
}

}  // namespace

std::vector<StreamMode> study_a_modes() {
    return {{1.0, 1, 1}, {0.5, 2, 1}, {0.3, 1, 2}};
}

FlowField stream_function_flow(const std::vector<StreamMode>& modes, double length, i64 h,
                               i64 w) {
    if (modes.empty()) throw std::invalid_argument("stream_function_flow: need at least one mode");
    FlowField f;
    f.vx = Field2D(h, w, 0.0, length, 0.0, length, false);
    f.vy = Field2D(h, w, 0.0, length, 0.0, length, false);
    for (i64 r = 0; r < h; ++r) {
        const double y = f.vx.y_of(r);
        for (i64 c = 0; c < w; ++c) {
            const double x = f.vx.x_of(c);
            double vx = 0.0, vy = 0.0;
            for (const StreamMode& m : modes) {
                const double kx = m.n * kPi / length;
                const double ky = m.m * kPi / length;
                vx += m.amplitude * ky * std::sin(kx * x) * std::cos(ky * y);
                vy -= m.amplitude * kx * std::cos(kx * x) * std::sin(ky * y);
            }
            f.vx.at(r, c) = vx;
            f.vy.at(r, c) = vy;
        }
    }
    return f;
}

Field2D noise_variance_field(double sigma_base_sq, double a_noise, double xc, double yc,
                             double r, i64 h, i64 w) {
    Field2D f(h, w, 0.0, 1.0, 0.0, 1.0, false);
    for (i64 rr = 0; rr < h; ++rr) {
        const double y = f.y_of(rr);
        for (i64 c = 0; c < w; ++c) {
            const double x = f.x_of(c);
            const double d2 = (x - xc) * (x - xc) + (y - yc) * (y - yc);
            f.at(rr, c) = sigma_base_sq * (1.0 + a_noise * std::exp(-d2 / (2.0 * r * r)));
        }
    }
    return f;
}

Field2D study_a_noise_field(i64 h, i64 w) {
    return noise_variance_field(0.05 * 0.05, 8.0, 0.7, 0.3, 0.15, h, w);
}

ObservationBatch sample_noisy_observations(const FlowField& flow, const Field2D& noise_var,
                                           Rng& rng, i64 batch) {
    if (!flow.vx.same_grid(noise_var))
        throw std::invalid_argument("sample_noisy_observations: grids differ");
    ObservationBatch b;
    b.x.reserve(static_cast<size_t>(batch));
    for (i64 i = 0; i < batch; ++i) {
        const i64 r = static_cast<i64>(rng.next_u64() % static_cast<std::uint64_t>(flow.vx.h));
        const i64 c = static_cast<i64>(rng.next_u64() % static_cast<std::uint64_t>(flow.vx.w));
        const double sd = std::sqrt(noise_var.at(r, c));
        b.x.push_back(flow.vx.x_of(c));
        b.y.push_back(flow.vx.y_of(r));
        b.vx.push_back(flow.vx.at(r, c) + sd * rng.normal());
        b.vy.push_back(flow.vy.at(r, c) + sd * rng.normal());
        b.noise_var.push_back(noise_var.at(r, c));
    }
    return b;
}

ObservationBatch noisy_field_realization(const FlowField& flow, const Field2D& noise_var,
                                         Rng& rng) {
    if (!flow.vx.same_grid(noise_var))
        throw std::invalid_argument("noisy_field_realization: grids differ");
    ObservationBatch b;
    const i64 n = flow.vx.h * flow.vx.w;
    b.x.reserve(static_cast<size_t>(n));
    for (i64 r = 0; r < flow.vx.h; ++r)
        for (i64 c = 0; c < flow.vx.w; ++c) {
            const double sd = std::sqrt(noise_var.at(r, c));
            b.x.push_back(flow.vx.x_of(c));
            b.y.push_back(flow.vx.y_of(r));
            b.vx.push_back(flow.vx.at(r, c) + sd * rng.normal());
            b.vy.push_back(flow.vy.at(r, c) + sd * rng.normal());
            b.noise_var.push_back(noise_var.at(r, c));
        }
    return b;
}

Field2D advection_diffusion_step(const Field2D& T, const Field2D& u, const Field2D& v,
                                 double kappa, double dt, const Field2D& source,
                                 i64 step_index) {
    if (!T.periodic) throw std::invalid_argument("advection_diffusion_step: grid must be periodic");
    if (!T.same_grid(u) || !T.same_grid(v))
        throw std::invalid_argument("advection_diffusion_step: velocity grid differs");
    const bool has_source = !source.v.empty();
    if (has_source && !T.same_grid(source))
        throw std::invalid_argument("advection_diffusion_step: source grid differs");

    const double dx = T.dx(), dy = T.dy();
    double vmax = 0.0;
    for (size_t i = 0; i < u.v.size(); ++i)
        vmax = std::max({vmax, std::abs(u.v[i]), std::abs(v.v[i])});
    const double hmin = std::min(dx, dy);
    static std::atomic<bool> warned{false};
    if ((vmax * dt / hmin > 1.0 || kappa * dt / (hmin * hmin) > 0.25) &&
        !warned.exchange(true))
        std::cerr << "advection_diffusion_step: CFL bounds violated (|v|max=" << vmax
                  << ", dt=" << dt << ", h=" << hmin << ", kappa=" << kappa << ")\n";

    Field2D out = T;
    const i64 h = T.h, w = T.w;
    for (i64 r = 0; r < h; ++r) {
        const i64 rp = (r + 1) % h, rm = (r + h - 1) % h;
        for (i64 c = 0; c < w; ++c) {
            const i64 cp = (c + 1) % w, cm = (c + w - 1) % w;
            const double tx = (T.at(r, cp) - T.at(r, cm)) / (2.0 * dx);
            const double ty = (T.at(rp, c) - T.at(rm, c)) / (2.0 * dy);
            const double lap = (T.at(r, cp) - 2.0 * T.at(r, c) + T.at(r, cm)) / (dx * dx) +
                               (T.at(rp, c) - 2.0 * T.at(r, c) + T.at(rm, c)) / (dy * dy);
            double rhs = -(u.at(r, c) * tx + v.at(r, c) * ty) + kappa * lap;
            if (has_source) rhs += source.at(r, c);
            out.at(r, c) = T.at(r, c) + dt * rhs;
        }
    }
    for (double x : out.v)
        if (!std::isfinite(x))
            throw PdeError(step_index, "advection_diffusion_step: non-finite field at step " +
                                           std::to_string(step_index));
    return out;
}

FlowField time_dependent_velocity(double t, i64 h, i64 w) {
    const double omega = 0.1;
    FlowField f;
    f.vx = Field2D(h, w, 0.0, kTwoPi, 0.0, kTwoPi, true);
    f.vy = Field2D(h, w, 0.0, kTwoPi, 0.0, kTwoPi, true);
    double vmax2 = 0.0;
    for (i64 r = 0; r < h; ++r) {
        const double y = f.vx.y_of(r);
        for (i64 c = 0; c < w; ++c) {
            const double x = f.vx.x_of(c);
            // psi = sin(2x + wt) cos(y) + 0.5 cos(x) sin(2y - 0.5wt)
            const double u = -std::sin(2.0 * x + omega * t) * std::sin(y) +
                             std::cos(x) * std::cos(2.0 * y - 0.5 * omega * t);
            const double v = -2.0 * std::cos(2.0 * x + omega * t) * std::cos(y) +
                             0.5 * std::sin(x) * std::sin(2.0 * y - 0.5 * omega * t);
            f.vx.at(r, c) = u;
            f.vy.at(r, c) = v;
            vmax2 = std::max(vmax2, u * u + v * v);
        }
    }
    const double scale = 0.5 / std::sqrt(vmax2);
    for (double& x : f.vx.v) x *= scale;
    for (double& x : f.vy.v) x *= scale;
    return f;
}

Field2D smooth_random_field(Rng& rng, i64 h, i64 w, double x0, double x1, double y0,
                            double y1) {
    Field2D f(h, w, x0, x1, y0, y1, true);
    const int modes[5][2] = {{0, 1}, {1, 0}, {1, 1}, {2, 1}, {1, 2}};
    const double sx = kTwoPi / (x1 - x0), sy = kTwoPi / (y1 - y0);
    double amp[5], phx[5], phy[5];
    for (int k = 0; k < 5; ++k) {
        amp[k] = rng.normal();
        phx[k] = rng.uniform(0.0, kTwoPi);
        phy[k] = rng.uniform(0.0, kTwoPi);
    }
    for (i64 r = 0; r < h; ++r) {
        const double y = f.y_of(r);
        for (i64 c = 0; c < w; ++c) {
            const double x = f.x_of(c);
            double s = 0.0;
            for (int k = 0; k < 5; ++k)
                s += amp[k] * std::cos(modes[k][0] * sx * (x - x0) + phx[k]) *
                     std::cos(modes[k][1] * sy * (y - y0) + phy[k]);
            f.at(r, c) = s;
        }
    }
    return f;
}

namespace {

double rms(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

SensitivityResult physics_sensitivity_test(const Field2D& T0, i64 steps, double perturbation,
                                           double kappa, double dt, const Field2D& source,
                                           Rng& rng, const VelocityFn& velocity) {
    if (perturbation <= 0.0)
        throw std::invalid_argument("physics_sensitivity_test: perturbation must be positive");
    const double base_rms = rms(T0.v);
    if (base_rms == 0.0)
        throw std::invalid_argument("physics_sensitivity_test: zero initial state");

    Field2D delta = smooth_random_field(rng, T0.h, T0.w, T0.x0, T0.x1, T0.y0, T0.y1);
    const double s = perturbation * base_rms / rms(delta.v);
    for (double& x : delta.v) x *= s;

    Field2D a = T0, b = T0;
    for (size_t i = 0; i < b.v.size(); ++i) b.v[i] += delta.v[i];

    double d0 = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) d0 += std::abs(a.v[i] - b.v[i]);
    d0 /= static_cast<double>(a.v.size());

    for (i64 n = 0; n < steps; ++n) {
        const FlowField vel = velocity(static_cast<double>(n) * dt, T0.h, T0.w);
        a = advection_diffusion_step(a, vel.vx, vel.vy, kappa, dt, source, n);
        b = advection_diffusion_step(b, vel.vx, vel.vy, kappa, dt, source, n);
    }
    double d1 = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) d1 += std::abs(a.v[i] - b.v[i]);
    d1 /= static_cast<double>(a.v.size());
    return {d1 / d0, d0, d1};
}

Field2D study_b_initial(i64 h, i64 w) {
    Field2D f(h, w, 0.0, kTwoPi, 0.0, kTwoPi, true);
    const double cs[4][3] = {{0.5 * kPi, 0.5 * kPi, 1.0},
                             {1.5 * kPi, 0.5 * kPi, -1.0},
                             {0.5 * kPi, 1.5 * kPi, -1.0},
                             {1.5 * kPi, 1.5 * kPi, 1.0}};
    const double width = 0.5;
    for (i64 r = 0; r < h; ++r) {
        const double y = f.y_of(r);
        for (i64 c = 0; c < w; ++c) {
            const double x = f.x_of(c);
            double s = 0.0;
            for (const auto& blob : cs) {
                const double ddx = min_image(x - blob[0], kTwoPi);
                const double ddy = min_image(y - blob[1], kTwoPi);
                s += blob[2] * std::exp(-(ddx * ddx + ddy * ddy) / (2.0 * width * width));
            }
            f.at(r, c) = s;
        }
    }
    return f;
}

Field2D study_b_source(Rng& rng, i64 h, i64 w) {
    Field2D f = smooth_random_field(rng, h, w, 0.0, kTwoPi, 0.0, kTwoPi);
    double m = 0.0;
    for (double x : f.v) m = std::max(m, std::abs(x));
    const double s = 0.02 / m;
    for (double& x : f.v) x *= s;
    return f;
}

namespace {

std::vector<std::uint8_t> read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IdxError(IdxError::Kind::Unreadable, "cannot open " + path);
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                     std::istreambuf_iterator<char>());
}

std::uint32_t u32_be(const std::vector<std::uint8_t>& b, size_t off) {
    return (static_cast<std::uint32_t>(b[off]) << 24) |
           (static_cast<std::uint32_t>(b[off + 1]) << 16) |
           (static_cast<std::uint32_t>(b[off + 2]) << 8) | static_cast<std::uint32_t>(b[off + 3]);
}

void put_u32_be(std::ofstream& out, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                       static_cast<char>(v >> 8), static_cast<char>(v)};
    out.write(b, 4);
}

}  // namespace

MnistData load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
    const std::vector<std::uint8_t> ib = read_all(images_path);
    if (ib.size() < 16) throw IdxError(IdxError::Kind::Truncated, images_path + ": header short");
    if (u32_be(ib, 0) != 0x00000803u)
        throw IdxError(IdxError::Kind::BadMagic, images_path + ": image magic mismatch");
    const i64 n = u32_be(ib, 4);
    const i64 rows = u32_be(ib, 8);
    const i64 cols = u32_be(ib, 12);
    if (static_cast<i64>(ib.size()) != 16 + n * rows * cols)
        throw IdxError(IdxError::Kind::Truncated, images_path + ": payload size mismatch");

    const std::vector<std::uint8_t> lb = read_all(labels_path);
    if (lb.size() < 8) throw IdxError(IdxError::Kind::Truncated, labels_path + ": header short");
    if (u32_be(lb, 0) != 0x00000801u)
        throw IdxError(IdxError::Kind::BadMagic, labels_path + ": label magic mismatch");
    const i64 ln = u32_be(lb, 4);
    if (static_cast<i64>(lb.size()) != 8 + ln)
        throw IdxError(IdxError::Kind::Truncated, labels_path + ": payload size mismatch");
    if (ln != n)
        throw IdxError(IdxError::Kind::CountMismatch,
                       "image count " + std::to_string(n) + " vs label count " + std::to_string(ln));

    MnistData d;
    d.rows = rows;
    d.cols = cols;
    d.pixels.assign(ib.begin() + 16, ib.end());
    d.labels.assign(lb.begin() + 8, lb.end());
    return d;
}

void write_mnist_idx(const std::string& images_path, const std::string& labels_path,
                     const MnistData& data) {
    std::ofstream io(images_path, std::ios::binary);
    if (!io) throw IdxError(IdxError::Kind::Unreadable, "cannot write " + images_path);
    put_u32_be(io, 0x00000803u);
    put_u32_be(io, static_cast<std::uint32_t>(data.count()));
    put_u32_be(io, static_cast<std::uint32_t>(data.rows));
    put_u32_be(io, static_cast<std::uint32_t>(data.cols));
    io.write(reinterpret_cast<const char*>(data.pixels.data()),
             static_cast<std::streamsize>(data.pixels.size()));

    std::ofstream lo(labels_path, std::ios::binary);
    if (!lo) throw IdxError(IdxError::Kind::Unreadable, "cannot write " + labels_path);
    put_u32_be(lo, 0x00000801u);
    put_u32_be(lo, static_cast<std::uint32_t>(data.count()));
    lo.write(reinterpret_cast<const char*>(data.labels.data()),
             static_cast<std::streamsize>(data.labels.size()));
}

MnistData filter_label(const MnistData& data, std::uint8_t label) {
    MnistData out;
    out.rows = data.rows;
    out.cols = data.cols;
    const i64 px = data.rows * data.cols;
    for (i64 i = 0; i < data.count(); ++i)
        if (data.labels[static_cast<size_t>(i)] == label) {
            out.labels.push_back(label);
            out.pixels.insert(out.pixels.end(), data.pixels.begin() + i * px,
                              data.pixels.begin() + (i + 1) * px);
        }
    return out;
}

MnistData take(const MnistData& data, i64 n) {
    n = std::min(n, data.count());
    MnistData out;
    out.rows = data.rows;
    out.cols = data.cols;
    out.labels.assign(data.labels.begin(), data.labels.begin() + n);
    out.pixels.assign(data.pixels.begin(), data.pixels.begin() + n * data.rows * data.cols);
    return out;
}

namespace {

double seg_dist(double px, double py, double ax, double ay, double bx, double by) {
    const double vx = bx - ax, vy = by - ay;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0.0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = px - (ax + t * vx), dy = py - (ay + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

void render_gauss(std::vector<std::uint8_t>& img, i64 side,
                  const std::function<double(double, double)>& dist, double thick,
                  double intensity) {
    for (i64 r = 0; r < side; ++r)
        for (i64 c = 0; c < side; ++c) {
            const double d = dist(static_cast<double>(c), static_cast<double>(r));
            const double v = intensity * 255.0 * std::exp(-d * d / (2.0 * thick * thick));
            const size_t i = static_cast<size_t>(r * side + c);
            img[i] = static_cast<std::uint8_t>(
                std::min(255.0, static_cast<double>(img[i]) + v));
        }
}

}  // namespace

MnistData synthetic_digit_fallback(Rng& rng, i64 per_class) {
    const i64 side = 28;
    MnistData d;
    d.rows = side;
    d.cols = side;
    for (i64 i = 0; i < per_class; ++i) {
        std::vector<std::uint8_t> img(static_cast<size_t>(side * side), 0);
        const double cx = 13.5 + rng.uniform(-1.5, 1.5);
        const double cy = 13.5 + rng.uniform(-1.5, 1.5);
        const double radius = rng.uniform(6.0, 8.5);
        const double thick = rng.uniform(1.6, 2.4);
        const double intensity = rng.uniform(0.8, 1.0);
        render_gauss(
            img, side,
            [&](double x, double y) {
                const double dd = std::sqrt((x - cx) * (x - cx) + (y - cy) * (y - cy));
                return std::abs(dd - radius);
            },
            thick, intensity);
        d.pixels.insert(d.pixels.end(), img.begin(), img.end());
        d.labels.push_back(0);
    }
    for (i64 i = 0; i < per_class; ++i) {
        std::vector<std::uint8_t> img(static_cast<size_t>(side * side), 0);
        const double bar_y = 6.0 + rng.uniform(-1.0, 1.0);
        const double bar_x0 = 6.0 + rng.uniform(-1.5, 1.5);
        const double bar_x1 = 21.0 + rng.uniform(-1.5, 1.5);
        const double diag_x0 = bar_x1 + rng.uniform(-1.0, 1.0);
        const double diag_x1 = 9.0 + rng.uniform(-2.0, 2.0);
        const double diag_y1 = 23.5 + rng.uniform(-1.0, 1.0);
        const double thick = rng.uniform(1.3, 1.9);
        const double intensity = rng.uniform(0.8, 1.0);
        render_gauss(
            img, side,
            [&](double x, double y) { return seg_dist(x, y, bar_x0, bar_y, bar_x1, bar_y); },
            thick, intensity);
        render_gauss(
            img, side,
            [&](double x, double y) {
                return seg_dist(x, y, diag_x0, bar_y, diag_x1, diag_y1);
            },
            thick, intensity);
        d.pixels.insert(d.pixels.end(), img.begin(), img.end());
        d.labels.push_back(7);
    }
    return d;
}

void write_csv(const Field2D& f, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_csv: cannot write " + path);
    out << "x,y,value\n";
    char buf[96];
    for (i64 r = 0; r < f.h; ++r)
        for (i64 c = 0; c < f.w; ++c) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", f.x_of(c), f.y_of(r),
                          f.at(r, c));
            out << buf;
        }
}

void write_csv(const ObservationBatch& b, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_csv: cannot write " + path);
    out << "x,y,vx,vy,noise_var\n";
    char buf[160];
    for (i64 i = 0; i < b.size(); ++i) {
        const size_t s = static_cast<size_t>(i);
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", b.x[s], b.y[s],
                      b.vx[s], b.vy[s], b.noise_var[s]);
        out << buf;
    }
}

std::uint64_t fnv1a64(const void* data, std::size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 14695981039346656037ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t field_hash(const Field2D& f) {
    return fnv1a64(f.v.data(), f.v.size() * sizeof(double));
}

}  // namespace svgpkan
