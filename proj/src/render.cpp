#include "svgpkan/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace svgpkan {

namespace {

struct Rgb {
    double r, g, b;
};

// Piecewise-linear viridis approximation, 9 anchors.
constexpr Rgb kViridis[9] = {
    {68, 1, 84},    {72, 36, 117},  {65, 68, 135},  {52, 97, 141},  {42, 123, 142},
    {33, 148, 140}, {53, 173, 129}, {146, 213, 82}, {253, 231, 37},
};

// Blue / white / red, for signed fields.
constexpr Rgb kDiverging[3] = {{59, 76, 192}, {221, 221, 221}, {180, 4, 38}};

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
    return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

Rgb sample(const Rgb* anchors, int n, double t) {
    t = std::clamp(t, 0.0, 1.0);
    double pos = t * (n - 1);
    int lo = std::min(static_cast<int>(pos), n - 2);
    return lerp(anchors[lo], anchors[lo + 1], pos - lo);
}

Rgb color_of(Colormap cmap, double t) {
    switch (cmap) {
        case Colormap::Viridis: return sample(kViridis, 9, t);
        case Colormap::Diverging: return sample(kDiverging, 3, t);
        case Colormap::Gray: {
            double v = std::clamp(t, 0.0, 1.0) * 255.0;
            return {v, v, v};
        }
    }
    return {0, 0, 0};
}

}  // namespace

void render_field(const Field2D& f, Colormap cmap, const std::string& path) {
    double lo = f.v[0], hi = f.v[0];
    for (double v : f.v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (!std::isfinite(lo) || !std::isfinite(hi))
        throw std::runtime_error("render: non-finite values in " + path);
    double span = hi - lo;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("render: cannot open " + path + " for write");
    out << "P6\n" << f.w << " " << f.h << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(f.w) * 3);
    // Image rows run top to bottom; grid rows run bottom to top (y up).
    for (i64 i = f.h - 1; i >= 0; --i) {
        for (i64 j = 0; j < f.w; ++j) {
            double t = span > 0 ? (f.at(i, j) - lo) / span : 0.5;
            Rgb c = color_of(cmap, t);
            row[3 * j + 0] = static_cast<unsigned char>(std::lround(c.r));
            row[3 * j + 1] = static_cast<unsigned char>(std::lround(c.g));
            row[3 * j + 2] = static_cast<unsigned char>(std::lround(c.b));
        }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw std::runtime_error("render: write failed for " + path);

    std::ofstream side(path + ".minmax.txt");
    side << "min=" << fmt_g17(lo) << "\nmax=" << fmt_g17(hi) << "\n";
}

}  // namespace svgpkan
