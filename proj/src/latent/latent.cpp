#include "pstf/latent/latent.hpp"

#include <cmath>

#include "pstf/core/errors.hpp"
#include "pstf/core/serial.hpp"

namespace pstf {

double WPlusLatent::frobenius_norm() const {
    double acc = 0.0;
    for (double v : mat.data()) acc += v * v;
    return std::sqrt(acc);
}

std::vector<std::string> DirectionBank::attribute_names() const {
    std::vector<std::string> names;
    names.reserve(directions.size());
    for (const auto& d : directions) names.push_back(d.attribute_id);
    return names;
}

int DirectionBank::index_of(const std::string& name) const {
    for (size_t i = 0; i < directions.size(); ++i)
        if (directions[i].attribute_id == name) return (int)i;
    return -1;
}

const AttributeDirection& DirectionBank::by_name(const std::string& name) const {
    int i = index_of(name);
    if (i < 0) {
        std::string known;
        for (const auto& d : directions) known += " " + d.attribute_id;
        throw UsageError("unknown attribute '" + name + "'; bank contains:" + known);
    }
    return directions[(size_t)i];
}

void DirectionBank::add(AttributeDirection d) {
    if (index_of(d.attribute_id) >= 0)
        throw UsageError("duplicate attribute id in bank: " + d.attribute_id);
    directions.push_back(std::move(d));
}

const std::vector<std::string>& paper_attribute_names() {
    static const std::vector<std::string> names = {
        "smile", "surprise", "angry", "sad",   "eyesclose", "eyeglasses", "beard",
        "gender", "age",     "black", "white", "yellow",    "pose",       "lights"};
    return names;
}

WPlusLatent apply_edit(const WPlusLatent& w, const AttributeDirection& d, double alpha) {
    if (w.mat.shape() != d.delta.shape())
        throw ConfigError("apply_edit: latent " + shape_str(w.mat.shape()) + " vs direction " +
                          shape_str(d.delta.shape()));
    WPlusLatent out(w.n_layers(), w.d_latent());
    const double c = alpha * d.calibration_scale;
    for (size_t i = 0; i < w.mat.data().size(); ++i)
        out.mat.data()[i] = w.mat.data()[i] + c * d.delta.data()[i];
    return out;
}

AttributeDirection extract_direction(const std::vector<WPlusLatent>& edited,
                                     const std::vector<WPlusLatent>& unedited,
                                     const std::string& attribute_id) {
    if (edited.empty() || unedited.empty())
        throw UsageError("extract_direction: empty input");
    if (edited.size() != unedited.size())
        throw UsageError("extract_direction: pair count mismatch");
    const Shape shape = edited[0].mat.shape();
    Tensor mean = Tensor::zeros(shape);
    const double inv = 1.0 / (double)edited.size();
    for (size_t p = 0; p < edited.size(); ++p) {
        if (edited[p].mat.shape() != shape || unedited[p].mat.shape() != shape)
            throw ConfigError("extract_direction: inconsistent latent shapes");
        for (size_t i = 0; i < mean.data().size(); ++i)
            mean.data()[i] += inv * (edited[p].mat.data()[i] - unedited[p].mat.data()[i]);
    }
    double norm = 0.0;
    for (double v : mean.data()) norm += v * v;
    norm = std::sqrt(norm);
    if (norm < 1e-12)
        throw DegenerateDirectionError("extract_direction: zero mean difference");
    AttributeDirection d;
    d.attribute_id = attribute_id;
    d.delta = Tensor::zeros(shape);
    for (size_t i = 0; i < mean.data().size(); ++i) d.delta.data()[i] = mean.data()[i] / norm;
    d.calibration_scale = norm;
    return d;
}

std::vector<WPlusLatent> sweep(const WPlusLatent& w, const AttributeDirection& d,
                               const std::vector<double>& alphas) {
    std::vector<WPlusLatent> out;
    out.reserve(alphas.size());
    for (double a : alphas) out.push_back(apply_edit(w, d, a));
    return out;
}

double latent_cosine(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) throw ConfigError("latent_cosine: size mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        dot += a.ptr()[i] * b.ptr()[i];
        na += a.ptr()[i] * a.ptr()[i];
        nb += b.ptr()[i] * b.ptr()[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / std::sqrt(na * nb);
}

namespace {
constexpr char kBankMagic[8] = {'P', 'S', 'T', 'F', 'B', 'A', 'N', 'K'};
constexpr uint32_t kBankVersion = 1;
}  // namespace

void save_bank(const DirectionBank& bank, const std::string& path) {
    if (bank.directions.empty()) throw UsageError("save_bank: empty bank");
    const int nl = bank.directions[0].delta.dim(0);
    const int dl = bank.directions[0].delta.dim(1);
    BinWriter w(path);
    w.raw(kBankMagic, 8);
    w.u32(kBankVersion);
    w.u32((uint32_t)nl);
    w.u32((uint32_t)dl);
    w.u32((uint32_t)bank.directions.size());
    for (const auto& d : bank.directions) w.str(d.attribute_id);
    for (const auto& d : bank.directions) {
        if (d.delta.dim(0) != nl || d.delta.dim(1) != dl)
            throw ConfigError("save_bank: inconsistent direction shapes");
        w.f32((float)d.calibration_scale);
        w.f32_array_from_f64(d.delta.data());
    }
}

DirectionBank load_bank(const std::string& path) {
    BinReader r(path);
    char magic[8];
    r.raw(magic, 8);
    if (std::string(magic, 8) != std::string(kBankMagic, 8))
        throw RuntimeAbort("not a direction bank: " + path);
    if (r.u32() != kBankVersion) throw RuntimeAbort("unsupported bank version: " + path);
    const int nl = (int)r.u32();
    const int dl = (int)r.u32();
    const uint32_t n = r.u32();
    std::vector<std::string> names;
    for (uint32_t i = 0; i < n; ++i) names.push_back(r.str());
    DirectionBank bank;
    for (uint32_t i = 0; i < n; ++i) {
        AttributeDirection d;
        d.attribute_id = names[i];
        d.calibration_scale = (double)r.f32();
        d.delta = Tensor::zeros({nl, dl});
        for (auto& v : d.delta.data()) v = (double)r.f32();
        bank.add(std::move(d));
    }
    return bank;
}

}  // namespace pstf
