#include "pstf/world/world.hpp"

#include <algorithm>
#include <cmath>

#include "pstf/core/errors.hpp"
#include "pstf/core/serial.hpp"

namespace pstf {

namespace {

// Soft squashes keep the geometry sane for any finite factor value while
// staying near-linear over the calibrated range.
double sq25(double f) { return 2.5 * std::tanh(f / 2.5); }
double sq3(double f) { return 3.0 * std::tanh(f / 3.0); }

// 1 px antialiased coverage from a signed distance in px (negative = inside).
double cov(double signed_dist_px) {
    double c = 0.5 - signed_dist_px;
    return c < 0.0 ? 0.0 : (c > 1.0 ? 1.0 : c);
}

struct Rgb {
    double r, g, b;
};

Rgb hsv(double h, double s, double v) {
    h = h - std::floor(h);
    const double i = std::floor(h * 6.0);
    const double f = h * 6.0 - i;
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - f * s);
    const double t = v * (1.0 - (1.0 - f) * s);
    switch ((int)i % 6) {
        case 0: return {v, t, p};
        case 1: return {q, v, p};
        case 2: return {p, v, t};
        case 3: return {p, q, v};
        case 4: return {t, p, v};
        default: return {v, p, q};
    }
}

void blend(Image& img, int y, int x, const Rgb& c, double a) {
    if (a <= 0.0) return;
    img.at(y, x, 0) = (1.0 - a) * img.at(y, x, 0) + a * c.r;
    img.at(y, x, 1) = (1.0 - a) * img.at(y, x, 1) + a * c.g;
    img.at(y, x, 2) = (1.0 - a) * img.at(y, x, 2) + a * c.b;
}

// All positions/sizes of the face parts in px, derived once per theta.
struct FaceGeometry {
    double s;  // image size
    double cx, cy, rx, ry;
    double eye_y, eye_dx, eye_rx, eye_ry, pupil_r;
    double glasses_r, glasses_th, glasses_op;
    double nose_tip_y, nose_top_y, nose_hw;
    double mouth_y, mouth_hw, mouth_th, bend;
    double wr_top, wr_bot, wr_amp, wr_period;
    Rgb face_col, mouth_col, glasses_col, pupil_col, sclera_col;
    double bright;
};

FaceGeometry face_geometry(const WorldParams& t, int size) {
    const double s = (double)size;
    const double hue = t.identity[0], aspect = t.identity[1];
    const double eyespace = t.identity[2], tone = t.identity[3];
    const double smile = t.attribute[0], eye_open = t.attribute[1];
    const double glasses = t.attribute[2], bright = t.attribute[3];
    const double pose = t.attribute[4], wrinkle = t.attribute[5];

    FaceGeometry g;
    g.s = s;
    g.cx = s * (0.5 + 0.022 * sq3(pose));
    g.cy = s * 0.54;
    g.rx = s * (0.30 + 0.035 * sq25(aspect));
    g.ry = s * (0.38 - 0.012 * sq25(aspect));
    g.eye_y = g.cy - s * 0.10;
    g.eye_dx = s * (0.115 + 0.030 * sq25(eyespace));
    g.eye_rx = s * 0.055;
    g.eye_ry = std::max(s * (0.030 + 0.014 * sq3(eye_open)), s * 0.006);
    g.pupil_r = s * 0.020;
    g.glasses_r = s * 0.085;
    g.glasses_th = s * 0.016;
    g.glasses_op = 0.5 + 0.45 * std::tanh(0.55 * glasses);
    g.nose_tip_y = g.cy + s * 0.06;
    g.nose_top_y = g.cy - s * 0.01;
    g.nose_hw = s * 0.035;
    // smile bends the band and nudges it upward, so the cue survives 16 px
    g.mouth_y = g.cy + s * (0.18 - 0.016 * sq3(smile));
    g.mouth_hw = s * (0.16 + 0.012 * sq3(smile));
    g.mouth_th = s * 0.036;
    g.bend = s * 0.100 * sq3(smile);
    g.wr_top = g.cy - s * 0.30;
    g.wr_bot = g.cy - s * 0.16;
    g.wr_amp = 0.10 + 0.055 * sq3(wrinkle);
    g.wr_period = s * 0.055;
    g.face_col = hsv(0.07 + 0.045 * sq25(hue), 0.50, 0.55 + 0.13 * sq25(tone));
    g.mouth_col = {0.55, 0.15, 0.18};
    g.glasses_col = {0.10, 0.10, 0.12};
    g.pupil_col = {0.08, 0.06, 0.05};
    g.sclera_col = {0.92, 0.92, 0.92};
    g.bright = 0.11 * bright;
    return g;
}

double ellipse_sd_px(double x, double y, double cx, double cy, double rx, double ry) {
    const double dx = (x - cx) / rx, dy = (y - cy) / ry;
    const double d = std::sqrt(dx * dx + dy * dy);
    return (d - 1.0) * std::min(rx, ry);
}

double mouth_band_cov(const FaceGeometry& g, double x, double y) {
    const double sp = (x - g.cx) / g.mouth_hw;
    const double curve_y = g.mouth_y + g.bend * (0.5 - sp * sp);
    const double dy = std::abs(y - curve_y) - 0.5 * g.mouth_th;
    const double dx = (std::abs(sp) - 1.0) * g.mouth_hw;
    return cov(dy) * cov(dx);
}

}  // namespace

std::vector<double> WorldParams::concat() const {
    std::vector<double> f = identity;
    f.insert(f.end(), attribute.begin(), attribute.end());
    return f;
}

WorldParams WorldParams::from_concat(const std::vector<double>& f) {
    if ((int)f.size() != kTotalFactors) throw ConfigError("WorldParams: bad factor count");
    WorldParams t;
    for (int i = 0; i < kIdentityFactors; ++i) t.identity[(size_t)i] = f[(size_t)i];
    for (int i = 0; i < kAttributeFactors; ++i)
        t.attribute[(size_t)i] = f[(size_t)(kIdentityFactors + i)];
    return t;
}

const std::vector<std::string>& synthetic_attribute_names() {
    static const std::vector<std::string> names = {"smile",  "eye_open", "glasses",
                                                   "bright", "pose",     "wrinkle"};
    return names;
}

double FaceEmbedding::cosine(const FaceEmbedding& other) const {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < v.size(); ++i) {
        dot += v[i] * other.v[i];
        na += v[i] * v[i];
        nb += other.v[i] * other.v[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / std::sqrt(na * nb);
}

void FaceEmbedding::normalize() {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n < 1e-30) throw ConfigError("FaceEmbedding: zero vector");
    for (double& x : v) x /= n;
}

Tensor orthonormal_columns(int rows, int cols, Rng& rng) {
    if (cols > rows) throw ConfigError("orthonormal_columns: cols > rows");
    Tensor m = Tensor::zeros({rows, cols});
    for (int c = 0; c < cols; ++c) {
        std::vector<double> col((size_t)rows);
        for (auto& v : col) v = rng.normal();
        // modified Gram-Schmidt against previous columns
        for (int p = 0; p < c; ++p) {
            double dot = 0.0;
            for (int r = 0; r < rows; ++r) dot += col[(size_t)r] * m.ptr()[(size_t)r * cols + p];
            for (int r = 0; r < rows; ++r) col[(size_t)r] -= dot * m.ptr()[(size_t)r * cols + p];
        }
        double n = 0.0;
        for (double v : col) n += v * v;
        n = std::sqrt(n);
        if (n < 1e-9) throw RuntimeAbort("orthonormal_columns: degenerate draw");
        for (int r = 0; r < rows; ++r) m.ptr()[(size_t)r * cols + c] = col[(size_t)r] / n;
    }
    return m;
}

World::World(const WorldConfig& cfg, uint64_t seed) : cfg_(cfg), seed_(seed) {
    derive_matrices();
}

void World::derive_matrices() {
    Rng rng_a(seed_, "world.map_a");
    map_a_ = orthonormal_columns(cfg_.d_latent, WorldParams::kTotalFactors, rng_a);
    Rng rng_m(seed_, "world.id_lift");
    id_lift_ = orthonormal_columns(cfg_.d_id, WorldParams::kIdentityFactors, rng_m);
    Rng rng_x(seed_, "world.attr_mix");
    attr_mix_ = Tensor::zeros({WorldParams::kAttributeFactors, WorldParams::kIdentityFactors});
    for (int i = 0; i < WorldParams::kAttributeFactors; ++i) {
        double norm = 0.0;
        std::vector<double> row((size_t)WorldParams::kIdentityFactors);
        for (auto& v : row) {
            v = rng_x.normal();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (int j = 0; j < WorldParams::kIdentityFactors; ++j)
            attr_mix_.ptr()[(size_t)i * WorldParams::kIdentityFactors + j] = row[(size_t)j] / norm;
    }
}

Image World::render(const WorldParams& theta, bool* clamped) const {
    WorldParams t = theta;
    bool any_clamped = false;
    auto clamp_factor = [&](double& f) {
        if (!std::isfinite(f)) throw ConfigError("render: non-finite factor");
        if (f > kValidRange) {
            f = kValidRange;
            any_clamped = true;
        } else if (f < -kValidRange) {
            f = -kValidRange;
            any_clamped = true;
        }
    };
    for (auto& f : t.identity) clamp_factor(f);
    for (auto& f : t.attribute) clamp_factor(f);
    if (clamped) *clamped = any_clamped;

    const int size = cfg_.image_size;
    const FaceGeometry g = face_geometry(t, size);
    Image img(size, size);

    for (int yi = 0; yi < size; ++yi) {
        for (int xi = 0; xi < size; ++xi) {
            const double x = xi + 0.5, y = yi + 0.5;

            // fixed background gradient (scene layout is theta-independent)
            const double base = 0.10 + 0.08 * y / g.s + 0.03 * x / g.s;
            img.at(yi, xi, 0) = base;
            img.at(yi, xi, 1) = base + 0.02;
            img.at(yi, xi, 2) = base + 0.05;

            // face
            const double face_cov = cov(ellipse_sd_px(x, y, g.cx, g.cy, g.rx, g.ry));
            Rgb fc = g.face_col;
            if (y > g.wr_top && y < g.wr_bot) {
                const double pat = 0.5 * (1.0 + std::sin(6.28318530717958647692 *
                                                         (y - g.cy) / g.wr_period));
                const double m = 1.0 - g.wr_amp * pat;
                fc = {fc.r * m, fc.g * m, fc.b * m};
            }
            blend(img, yi, xi, fc, face_cov);

            // eyes: sclera then pupil, clipped to the sclera
            for (int side = -1; side <= 1; side += 2) {
                const double ex = g.cx + side * g.eye_dx;
                const double sclera =
                    cov(ellipse_sd_px(x, y, ex, g.eye_y, g.eye_rx, g.eye_ry));
                blend(img, yi, xi, g.sclera_col, sclera);
                const double pupil =
                    cov(ellipse_sd_px(x, y, ex, g.eye_y, g.pupil_r, g.pupil_r));
                blend(img, yi, xi, g.pupil_col, pupil * sclera);
            }

            // glasses: two rings plus the bridge, alpha from the opacity factor
            double ring = 0.0;
            for (int side = -1; side <= 1; side += 2) {
                const double ex = g.cx + side * g.eye_dx;
                const double d = std::sqrt((x - ex) * (x - ex) + (y - g.eye_y) * (y - g.eye_y));
                ring = std::max(ring, cov(std::abs(d - g.glasses_r) - 0.5 * g.glasses_th));
            }
            const double bridge_hw = g.eye_dx - g.glasses_r;
            if (bridge_hw > 0.0) {
                const double bx = std::abs(x - g.cx) - bridge_hw;
                const double by = std::abs(y - g.eye_y) - 0.5 * g.glasses_th;
                ring = std::max(ring, cov(bx) * cov(by));
            }
            blend(img, yi, xi, g.glasses_col, ring * g.glasses_op);

            // nose: narrow wedge widening toward the tip
            if (y > g.nose_top_y - 1.0 && y < g.nose_tip_y + 1.0) {
                const double span = g.nose_tip_y - g.nose_top_y;
                const double frac =
                    std::min(std::max((y - g.nose_top_y) / span, 0.0), 1.0);
                const double hw = g.nose_hw * (0.35 + 0.65 * frac);
                const double ny = std::max(g.nose_top_y - y, y - g.nose_tip_y);
                const double acov = cov(std::abs(x - g.cx) - hw) * cov(ny);
                Rgb nc = {g.face_col.r * 0.82, g.face_col.g * 0.82, g.face_col.b * 0.82};
                blend(img, yi, xi, nc, acov);
            }

            // mouth band along the bent curve
            blend(img, yi, xi, g.mouth_col, mouth_band_cov(g, x, y));

            // global brightness, linear in its factor
            img.at(yi, xi, 0) += g.bright;
            img.at(yi, xi, 1) += g.bright;
            img.at(yi, xi, 2) += g.bright;
        }
    }

    img.quantize8();
    return img;
}

LandmarkSet World::landmarks(const WorldParams& theta) const {
    const FaceGeometry g = face_geometry(theta, cfg_.image_size);
    LandmarkSet lm;
    lm.points = {
        {{g.cx - g.eye_dx, g.eye_y}},
        {{g.cx + g.eye_dx, g.eye_y}},
        {{g.cx, g.nose_tip_y}},
        {{g.cx - g.mouth_hw, g.mouth_y - 0.5 * g.bend}},
        {{g.cx + g.mouth_hw, g.mouth_y - 0.5 * g.bend}},
    };
    for (auto& p : lm.points) {
        p[0] = std::min(std::max(p[0], 0.0), g.s - 1.0);
        p[1] = std::min(std::max(p[1], 0.0), g.s - 1.0);
    }
    return lm;
}

std::vector<uint8_t> World::mouth_region_mask(const WorldParams& a, const WorldParams& b) const {
    const int size = cfg_.image_size;
    const FaceGeometry ga = face_geometry(a, size);
    const FaceGeometry gb = face_geometry(b, size);
    const double margin = 2.0;  // covers the 1 px antialias ramp on both sides
    const double x0 = ga.cx - ga.mouth_hw - margin, x1 = ga.cx + ga.mouth_hw + margin;
    const double y0 = std::min(ga.mouth_y - 0.5 * std::abs(ga.bend),
                               gb.mouth_y - 0.5 * std::abs(gb.bend)) -
                      0.5 * ga.mouth_th - margin;
    const double y1 = std::max(ga.mouth_y + 0.5 * std::abs(ga.bend),
                               gb.mouth_y + 0.5 * std::abs(gb.bend)) +
                      0.5 * ga.mouth_th + margin;
    std::vector<uint8_t> mask((size_t)size * size, 0);
    for (int yi = 0; yi < size; ++yi)
        for (int xi = 0; xi < size; ++xi) {
            const double x = xi + 0.5, y = yi + 0.5;
            if (x >= x0 && x <= x1 && y >= y0 && y <= y1)
                mask[(size_t)yi * size + xi] = 1;
        }
    return mask;
}

std::vector<uint8_t> World::face_region_mask(const LandmarkSet& lm, double margin_px) const {
    const int size = cfg_.image_size;
    double x0 = 1e9, x1 = -1e9, y0 = 1e9, y1 = -1e9;
    for (const auto& p : lm.points) {
        x0 = std::min(x0, p[0]);
        x1 = std::max(x1, p[0]);
        y0 = std::min(y0, p[1]);
        y1 = std::max(y1, p[1]);
    }
    x0 -= margin_px;
    x1 += margin_px;
    y0 -= margin_px;
    y1 += margin_px;
    std::vector<uint8_t> mask((size_t)size * size, 0);
    for (int yi = 0; yi < size; ++yi)
        for (int xi = 0; xi < size; ++xi)
            if (xi + 0.5 >= x0 && xi + 0.5 <= x1 && yi + 0.5 >= y0 && yi + 0.5 <= y1)
                mask[(size_t)yi * size + xi] = 1;
    return mask;
}

double World::eye_distance_px(double eye_spacing_factor) const {
    return 2.0 * cfg_.image_size * (0.115 + 0.030 * sq25(eye_spacing_factor));
}

WPlusLatent World::embed_latent(const WorldParams& theta) const {
    const std::vector<double> f = theta.concat();
    std::vector<double> row((size_t)cfg_.d_latent, 0.0);
    for (int r = 0; r < cfg_.d_latent; ++r) {
        double acc = 0.0;
        for (int c = 0; c < WorldParams::kTotalFactors; ++c)
            acc += map_a_.ptr()[(size_t)r * WorldParams::kTotalFactors + c] * f[(size_t)c];
        row[(size_t)r] = acc;
    }
    WPlusLatent w(cfg_.n_layers, cfg_.d_latent);
    for (int l = 0; l < cfg_.n_layers; ++l)
        std::copy(row.begin(), row.end(), w.mat.data().begin() + (size_t)l * cfg_.d_latent);
    return w;
}

WorldParams World::recover_factors(const WPlusLatent& w) const {
    if (w.d_latent() != cfg_.d_latent)
        throw ConfigError("recover_factors: latent width mismatch");
    std::vector<double> mean((size_t)cfg_.d_latent, 0.0);
    const double inv = 1.0 / (double)w.n_layers();
    for (int l = 0; l < w.n_layers(); ++l)
        for (int c = 0; c < cfg_.d_latent; ++c)
            mean[(size_t)c] += inv * w.mat.ptr()[(size_t)l * cfg_.d_latent + c];
    std::vector<double> f((size_t)WorldParams::kTotalFactors, 0.0);
    for (int c = 0; c < WorldParams::kTotalFactors; ++c) {
        double acc = 0.0;
        for (int r = 0; r < cfg_.d_latent; ++r)
            acc += map_a_.ptr()[(size_t)r * WorldParams::kTotalFactors + c] * mean[(size_t)r];
        f[(size_t)c] = acc;
    }
    return WorldParams::from_concat(f);
}

AttributeDirection World::analytic_direction(int attr_index) const {
    if (attr_index < 0 || attr_index >= WorldParams::kAttributeFactors)
        throw UsageError("analytic_direction: bad attribute index");
    const int col = WorldParams::kIdentityFactors + attr_index;
    AttributeDirection d;
    d.attribute_id = synthetic_attribute_names()[(size_t)attr_index];
    d.delta = Tensor::zeros({cfg_.n_layers, cfg_.d_latent});
    const double inv_norm = 1.0 / std::sqrt((double)cfg_.n_layers);  // columns are unit norm
    for (int l = 0; l < cfg_.n_layers; ++l)
        for (int r = 0; r < cfg_.d_latent; ++r)
            d.delta.ptr()[(size_t)l * cfg_.d_latent + r] =
                map_a_.ptr()[(size_t)r * WorldParams::kTotalFactors + col] * inv_norm;
    // strength 1.0 moves the recovered factor by exactly 1.0
    d.calibration_scale = std::sqrt((double)cfg_.n_layers);
    return d;
}

DirectionBank World::analytic_bank() const {
    DirectionBank bank;
    for (int k = 0; k < WorldParams::kAttributeFactors; ++k) bank.add(analytic_direction(k));
    return bank;
}

Image World::decode(const WPlusLatent& w) const { return render(recover_factors(w)); }

WorldParams World::sample_independent(Rng& rng) const {
    WorldParams t;
    for (auto& f : t.identity) f = rng.uniform(-kCalibratedRange, kCalibratedRange);
    for (auto& f : t.attribute) f = rng.uniform(-kCalibratedRange, kCalibratedRange);
    return t;
}

WorldParams World::sample_dataset(Rng& rng) const {
    WorldParams t;
    for (auto& f : t.identity) f = rng.uniform(-kCalibratedRange, kCalibratedRange);
    for (int i = 0; i < WorldParams::kAttributeFactors; ++i) {
        double mixed = 0.0;
        for (int j = 0; j < WorldParams::kIdentityFactors; ++j)
            mixed += attr_mix_.ptr()[(size_t)i * WorldParams::kIdentityFactors + j] *
                     t.identity[(size_t)j];
        t.attribute[(size_t)i] =
            cfg_.attr_id_coupling * mixed + cfg_.attr_noise * rng.uniform(-1.0, 1.0);
    }
    return t;
}

Tensor World::landmark_heatmap(const LandmarkSet& lm, double sigma_px) const {
    const int size = cfg_.image_size;
    Tensor hm = Tensor::zeros({1, size, size});
    const double inv2s2 = 1.0 / (2.0 * sigma_px * sigma_px);
    for (int yi = 0; yi < size; ++yi)
        for (int xi = 0; xi < size; ++xi) {
            double acc = 0.0;
            for (const auto& p : lm.points) {
                const double dx = xi + 0.5 - p[0], dy = yi + 0.5 - p[1];
                acc += std::exp(-(dx * dx + dy * dy) * inv2s2);
            }
            hm.ptr()[(size_t)yi * size + xi] = acc;
        }
    return hm;
}

FaceEmbedding World::identity_target(const WorldParams& theta) const {
    FaceEmbedding e;
    e.v.assign((size_t)cfg_.d_id, 0.0);
    for (int r = 0; r < cfg_.d_id; ++r) {
        double acc = 0.0;
        for (int c = 0; c < WorldParams::kIdentityFactors; ++c)
            acc += id_lift_.ptr()[(size_t)r * WorldParams::kIdentityFactors + c] *
                   theta.identity[(size_t)c];
        e.v[(size_t)r] = acc;
    }
    double n = 0.0;
    for (double x : e.v) n += x * x;
    if (n < 1e-24) {
        // all-zero identity factors map to a fixed pole on the sphere
        e.v[0] = 1.0;
        return e;
    }
    e.normalize();
    return e;
}

namespace {
constexpr char kWorldMagic[8] = {'P', 'S', 'T', 'F', 'W', 'R', 'L', 'D'};
}

void World::save(const std::string& path) const {
    BinWriter w(path);
    w.raw(kWorldMagic, 8);
    w.u32(1);
    w.u64(seed_);
    w.u32((uint32_t)cfg_.image_size);
    w.u32((uint32_t)cfg_.n_layers);
    w.u32((uint32_t)cfg_.d_latent);
    w.u32((uint32_t)cfg_.d_id);
    w.u32((uint32_t)cfg_.dataset_size);
    w.f64(cfg_.attr_id_coupling);
    w.f64(cfg_.attr_noise);
    w.u32((uint32_t)cfg_.probe_dataset_size);
    w.u32((uint32_t)cfg_.probe_train_steps);
    w.f64(cfg_.probe_lr);
    std::map<std::string, Tensor> mats{{"map_a", map_a_},
                                       {"id_lift", id_lift_},
                                       {"attr_mix", attr_mix_}};
    write_named_tensors(w, mats);
}

World World::load(const std::string& path) {
    BinReader r(path);
    char magic[8];
    r.raw(magic, 8);
    if (std::string(magic, 8) != std::string(kWorldMagic, 8))
        throw RuntimeAbort("not a world file: " + path);
    if (r.u32() != 1) throw RuntimeAbort("unsupported world version");
    World w;
    w.seed_ = r.u64();
    w.cfg_.image_size = (int)r.u32();
    w.cfg_.n_layers = (int)r.u32();
    w.cfg_.d_latent = (int)r.u32();
    w.cfg_.d_id = (int)r.u32();
    w.cfg_.dataset_size = (int)r.u32();
    w.cfg_.attr_id_coupling = r.f64();
    w.cfg_.attr_noise = r.f64();
    w.cfg_.probe_dataset_size = (int)r.u32();
    w.cfg_.probe_train_steps = (int)r.u32();
    w.cfg_.probe_lr = r.f64();
    auto mats = read_named_tensors(r);
    w.map_a_ = mats.at("map_a");
    w.id_lift_ = mats.at("id_lift");
    w.attr_mix_ = mats.at("attr_mix");
    return w;
}

}  // namespace pstf
