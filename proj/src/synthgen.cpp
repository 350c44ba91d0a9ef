#include "cqa/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cqa/errors.hpp"
#include "cqa/rng.hpp"

namespace cqa::synth {

namespace {

double sample(Rng& rng, const Range& r) { return r.lo + (r.hi - r.lo) * rng.uniform(); }

void check_range(const Range& r, const char* name) {
    if (!(r.lo <= r.hi)) throw ConfigError(std::string(name) + " range is not ordered");
}

Range shrink(const Range& r, double centre, double f) {
    return {centre + (r.lo - centre) * f, centre + (r.hi - centre) * f};
}

}  // namespace

void PerturbationParams::validate() const {
    check_range(rotation_deg, "rotation_deg");
    check_range(scale, "scale");
    check_range(translation_row_mm, "translation_row_mm");
    check_range(translation_col_mm, "translation_col_mm");
    if (!(scale.lo > 0.0)) throw ConfigError("scale range must be positive");
    if (elastic_grid < 2) throw ConfigError("elastic_grid must be >= 2");
    if (!(elastic_mag_mm >= 0.0)) throw ConfigError("elastic_mag_mm must be >= 0");
}

PerturbationParams PerturbationParams::identity() {
    PerturbationParams p;
    p.rotation_deg = Range::fixed(0.0);
    p.scale = Range::fixed(1.0);
    p.translation_row_mm = Range::fixed(0.0);
    p.translation_col_mm = Range::fixed(0.0);
    p.elastic_mag_mm = 0.0;
    return p;
}

PerturbationParams PerturbationParams::scaled(double factor) const {
    PerturbationParams p = *this;
    p.rotation_deg = shrink(rotation_deg, 0.0, factor);
    p.scale = shrink(scale, 1.0, factor);
    p.translation_row_mm = shrink(translation_row_mm, 0.0, factor);
    p.translation_col_mm = shrink(translation_col_mm, 0.0, factor);
    p.elastic_mag_mm = elastic_mag_mm * factor;
    return p;
}

geom::MaskSlice perturb_mask(const geom::MaskSlice& mask, const PerturbationParams& params,
                             std::uint64_t seed) {
    params.validate();
    if (mask.empty()) throw DegenerateInputError("cannot perturb an empty mask");

    Rng rng(seed);
    const double angle = sample(rng, params.rotation_deg) * std::numbers::pi / 180.0;
    const double scale = sample(rng, params.scale);
    const double ty = sample(rng, params.translation_row_mm);
    const double tx = sample(rng, params.translation_col_mm);
    const int g = params.elastic_grid;
    std::vector<double> lattice_y(static_cast<std::size_t>(g * g));
    std::vector<double> lattice_x(static_cast<std::size_t>(g * g));
    for (int i = 0; i < g * g; ++i) {
        lattice_y[i] = params.elastic_mag_mm * (2.0 * rng.uniform() - 1.0);
        lattice_x[i] = params.elastic_mag_mm * (2.0 * rng.uniform() - 1.0);
    }

    const int rows = mask.rows(), cols = mask.cols();
    const double sr = mask.spacing().row_mm, sc = mask.spacing().col_mm;
    const double cy = 0.5 * (rows - 1) * sr, cx = 0.5 * (cols - 1) * sc;
    const double cos_a = std::cos(angle), sin_a = std::sin(angle);

    // Bilinear interpolation of the control lattice spanning the grid extent.
    auto displacement = [&](int r, int c, double& dy, double& dx) {
        const double u = rows > 1 ? static_cast<double>(r) * (g - 1) / (rows - 1) : 0.0;
        const double v = cols > 1 ? static_cast<double>(c) * (g - 1) / (cols - 1) : 0.0;
        const int i0 = std::min(static_cast<int>(u), g - 2), j0 = std::min(static_cast<int>(v), g - 2);
        const double fu = u - i0, fv = v - j0;
        auto at = [&](const std::vector<double>& f, int i, int j) { return f[static_cast<std::size_t>(i * g + j)]; };
        auto interp = [&](const std::vector<double>& f) {
            return (1 - fu) * ((1 - fv) * at(f, i0, j0) + fv * at(f, i0, j0 + 1)) +
                   fu * ((1 - fv) * at(f, i0 + 1, j0) + fv * at(f, i0 + 1, j0 + 1));
        };
        dy = interp(lattice_y);
        dx = interp(lattice_x);
    };

    geom::MaskSlice out(rows, cols, mask.spacing(), mask.subject_id(), mask.slice_index());
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            double dy = 0.0, dx = 0.0;
            if (params.elastic_mag_mm > 0.0) displacement(r, c, dy, dx);
            // Undo elastic, translation, scaling, rotation (all in mm about the centre).
            const double y = r * sr - dy - ty - cy;
            const double x = c * sc - dx - tx - cx;
            const double ys = y / scale, xs = x / scale;
            const double yr = cos_a * ys + sin_a * xs;
            const double xr = -sin_a * ys + cos_a * xs;
            const long sr_idx = std::lround((yr + cy) / sr);
            const long sc_idx = std::lround((xr + cx) / sc);
            out.set(r, c, mask.inside(static_cast<int>(sr_idx), static_cast<int>(sc_idx)));
        }
    }
    return out;
}

std::string to_string(ShapeKind kind) {
    switch (kind) {
        case ShapeKind::ellipse: return "ellipse";
        case ShapeKind::bean: return "bean";
        case ShapeKind::blob: return "blob";
    }
    return "ellipse";
}

ShapeKind shape_from_string(const std::string& name) {
    if (name == "ellipse") return ShapeKind::ellipse;
    if (name == "bean") return ShapeKind::bean;
    if (name == "blob") return ShapeKind::blob;
    throw ConfigError("unknown shape kind: " + name);
}

geom::MaskSlice make_shape(ShapeKind kind, const GridSpec& grid, std::uint64_t seed) {
    Rng rng(seed);
    geom::MaskSlice m(grid.rows, grid.cols, grid.spacing);
    const double sr = grid.spacing.row_mm, sc = grid.spacing.col_mm;
    const double extent = std::min(grid.rows * sr, grid.cols * sc);
    const double cy = 0.5 * (grid.rows - 1) * sr + rng.uniform(-0.06, 0.06) * extent;
    const double cx = 0.5 * (grid.cols - 1) * sc + rng.uniform(-0.06, 0.06) * extent;
    const double radius = rng.uniform(0.14, 0.24) * extent;
    const double orient = rng.uniform(0.0, std::numbers::pi);
    const double aspect = rng.uniform(0.65, 1.0);

    // Radial profile r(theta) relative to the shape's own orientation.
    std::array<double, 3> harm_amp{}, harm_phase{};
    for (int k = 0; k < 3; ++k) {
        harm_amp[k] = rng.uniform(0.04, 0.14);
        harm_phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    const double bite_r = radius * rng.uniform(0.45, 0.6);

    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) {
            const double y = r * sr - cy, x = c * sc - cx;
            const double u = std::cos(orient) * x + std::sin(orient) * y;
            const double v = -std::sin(orient) * x + std::cos(orient) * y;
            bool in = false;
            switch (kind) {
                case ShapeKind::ellipse: {
                    const double a = radius, b = radius * aspect;
                    in = (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
                    break;
                }
                case ShapeKind::bean: {
                    const double a = radius, b = radius * 0.75;
                    const bool body = (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
                    const double bv = v - b * 1.05;
                    const bool bite = u * u + bv * bv <= bite_r * bite_r;
                    in = body && !bite;
                    break;
                }
                case ShapeKind::blob: {
                    const double theta = std::atan2(v, u);
                    double rr = radius;
                    for (int k = 0; k < 3; ++k) rr += radius * harm_amp[k] * std::cos((k + 2) * theta + harm_phase[k]);
                    in = u * u + v * v <= rr * rr;
                    break;
                }
            }
            m.set(r, c, in);
        }
    }
    return m;
}

Image make_pseudo_ct(const geom::MaskSlice& ref, const ImageModel& model, std::uint64_t seed) {
    Rng rng(seed);
    Image img(ref.rows(), ref.cols());
    const double gy = rng.uniform(-1.0, 1.0), gx = rng.uniform(-1.0, 1.0);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (int r = 0; r < ref.rows(); ++r) {
        for (int c = 0; c < ref.cols(); ++c) {
            const double ny = static_cast<double>(r) / ref.rows() - 0.5;
            const double nx = static_cast<double>(c) / ref.cols() - 0.5;
            double v = model.background + 0.03 * std::sin(2.0 * (gy * ny + gx * nx) + phase);
            if (ref.at(r, c)) v += model.interior_offset;
            v += model.noise_sigma * rng.normal();
            img.at(r, c) = std::clamp(v, 0.0, 1.0);
        }
    }
    return img;
}

std::array<std::size_t, 3> class_histogram(const std::vector<SynthSample>& samples) {
    std::array<std::size_t, 3> h{};
    for (const auto& s : samples) ++h[static_cast<std::size_t>(s.label)];
    return h;
}

namespace {

SynthSample make_sample(std::size_t index, const std::vector<ShapeKind>& catalog,
                        const PerturbationParams& params, const geom::SurrogateThresholds& thr,
                        std::uint64_t seed, const DatasetOptions& opt) {
    SynthSample s;
    s.seed_used = derive_seed(seed, index);
    Rng rng(s.seed_used);
    s.shape = catalog[rng.below(catalog.size())];
    const std::uint64_t shape_seed = rng.next_u64();
    const std::uint64_t image_seed = rng.next_u64();
    const std::uint64_t perturb_seed = rng.next_u64();
    s.severity = opt.sample_severity ? rng.uniform() : 1.0;

    s.ref_mask = make_shape(s.shape, opt.grid, shape_seed);
    if (s.ref_mask.empty()) s.ref_mask.set(opt.grid.rows / 2, opt.grid.cols / 2, true);
    s.image = make_pseudo_ct(s.ref_mask, opt.image, image_seed);
    s.auto_mask = perturb_mask(s.ref_mask, params.scaled(s.severity), perturb_seed);
    s.metrics = geom::compute_metrics(s.ref_mask, s.auto_mask, opt.sdsc_tolerance_mm);
    s.label = geom::surrogate_label(s.metrics, thr);
    return s;
}

bool is_balanced(const std::array<std::size_t, 3>& h, std::size_t n) {
    return std::all_of(h.begin(), h.end(), [n](std::size_t c) { return 10 * c > n; });
}

}  // namespace

Dataset generate_dataset(std::size_t n, const std::vector<ShapeKind>& catalog,
                         const PerturbationParams& params, const geom::SurrogateThresholds& thr,
                         std::uint64_t seed, const DatasetOptions& options) {
    if (n < 1) throw DomainError("dataset size must be >= 1");
    if (catalog.empty()) throw ConfigError("shape catalog is empty");
    params.validate();
    thr.validate();

    Dataset ds;
    PerturbationParams current = params;
    const int attempts = options.ensure_balance ? std::max(1, options.max_balance_attempts) : 1;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        ds.samples.clear();
        ds.samples.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            ds.samples.push_back(make_sample(i, catalog, current, thr, seed, options));
        }
        ds.histogram = class_histogram(ds.samples);
        ds.params_used = current;
        ds.balanced = is_balanced(ds.histogram, n);
        if (ds.balanced || !options.ensure_balance) break;
        // Too few poor contours: widen. Too few good ones: narrow.
        if (10 * ds.histogram[0] <= n) {
            current = current.scaled(1.25);
        } else if (10 * ds.histogram[2] <= n) {
            current = current.scaled(0.8);
        } else {
            break;
        }
    }
    return ds;
}

}  // namespace cqa::synth
