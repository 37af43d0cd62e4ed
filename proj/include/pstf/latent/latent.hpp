#ifndef PSTF_LATENT_LATENT_HPP
#define PSTF_LATENT_LATENT_HPP

#include <string>
#include <vector>

#include "pstf/core/tensor.hpp"

namespace pstf {

// One face's attribute state: a stack of per-layer latent rows, all rows
// sharing the experiment's fixed [n_layers x d_latent] shape.
struct WPlusLatent {
    Tensor mat;  // [n_layers, d_latent]

    WPlusLatent() = default;
    WPlusLatent(int n_layers, int d_latent) : mat(Tensor::zeros({n_layers, d_latent})) {}
    explicit WPlusLatent(Tensor m) : mat(std::move(m)) {}

    // Tensor is a shared handle; latents are values, so copies own their data.
    WPlusLatent(const WPlusLatent& o) : mat(o.mat.defined() ? o.mat.detach_copy() : Tensor()) {}
    WPlusLatent& operator=(const WPlusLatent& o) {
        if (this != &o) mat = o.mat.defined() ? o.mat.detach_copy() : Tensor();
        return *this;
    }
    WPlusLatent(WPlusLatent&&) = default;
    WPlusLatent& operator=(WPlusLatent&&) = default;

    int n_layers() const { return mat.dim(0); }
    int d_latent() const { return mat.dim(1); }
    double frobenius_norm() const;
};

// Named unit-norm edit direction. calibration_scale carries the magnitude of
// the raw mean difference so apply_edit(w, d, alpha) reproduces the
// un-normalized edit.
struct AttributeDirection {
    std::string attribute_id;
    Tensor delta;  // [n_layers, d_latent], unit Frobenius norm
    double calibration_scale = 1.0;

    AttributeDirection() = default;
    AttributeDirection(const AttributeDirection& o)
        : attribute_id(o.attribute_id),
          delta(o.delta.defined() ? o.delta.detach_copy() : Tensor()),
          calibration_scale(o.calibration_scale) {}
    AttributeDirection& operator=(const AttributeDirection& o) {
        if (this != &o) {
            attribute_id = o.attribute_id;
            delta = o.delta.defined() ? o.delta.detach_copy() : Tensor();
            calibration_scale = o.calibration_scale;
        }
        return *this;
    }
    AttributeDirection(AttributeDirection&&) = default;
    AttributeDirection& operator=(AttributeDirection&&) = default;
};

struct DirectionBank {
    std::vector<AttributeDirection> directions;

    std::vector<std::string> attribute_names() const;
    const AttributeDirection& by_name(const std::string& name) const;
    int index_of(const std::string& name) const;  // -1 if absent
    void add(AttributeDirection d);               // rejects duplicate ids
    size_t size() const { return directions.size(); }
};

// The 14 edit categories used when the bank mirrors the full-scale setup
// instead of the synthetic world's factors.
const std::vector<std::string>& paper_attribute_names();

// w + alpha * calibration_scale * delta. Input untouched.
WPlusLatent apply_edit(const WPlusLatent& w, const AttributeDirection& d, double alpha);

// Unit direction from paired edited/unedited latents: normalized mean
// difference, with the mean's Frobenius norm kept as calibration_scale.
AttributeDirection extract_direction(const std::vector<WPlusLatent>& edited,
                                     const std::vector<WPlusLatent>& unedited,
                                     const std::string& attribute_id = "extracted");

std::vector<WPlusLatent> sweep(const WPlusLatent& w, const AttributeDirection& d,
                               const std::vector<double>& alphas);

double latent_cosine(const Tensor& a, const Tensor& b);

// Bank archive: header (magic, version, shape, names) followed by one raw
// little-endian f32 matrix plus f32 calibration scale per direction, in
// header order. Exact layout in docs/formats.md.
void save_bank(const DirectionBank& bank, const std::string& path);
DirectionBank load_bank(const std::string& path);

}  // namespace pstf

#endif  // PSTF_LATENT_LATENT_HPP
