#ifndef PSTF_CORE_IMAGE_HPP
#define PSTF_CORE_IMAGE_HPP

#include <string>
#include <vector>

#include "pstf/core/tensor.hpp"

namespace pstf {

// H x W x 3 image, values in [0,1], interleaved row-major.
// The dataset format is binary PPM (P6, maxval 255); the world renderer
// quantizes to the 1/255 grid, so disk round-trips are exact.
struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> pixels;  // h*w*3

    Image() = default;
    Image(int h, int w) : height(h), width(w), pixels((size_t)h * w * 3, 0.0) {}

    double& at(int y, int x, int c) { return pixels[((size_t)y * width + x) * 3 + c]; }
    double at(int y, int x, int c) const { return pixels[((size_t)y * width + x) * 3 + c]; }

    double mean() const {
        double acc = 0.0;
        for (double v : pixels) acc += v;
        return pixels.empty() ? 0.0 : acc / (double)pixels.size();
    }

    // Snap every channel onto the 1/255 grid (the world's image space).
    void quantize8();

    // Channel-major [3,H,W] tensor for the nets.
    Tensor to_tensor() const;
    static Image from_tensor(const Tensor& t);
};

void write_ppm(const Image& img, const std::string& path);
Image read_ppm(const std::string& path);

}  // namespace pstf

#endif  // PSTF_CORE_IMAGE_HPP
