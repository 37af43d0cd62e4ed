#include "pstf/core/image.hpp"

#include <cmath>
#include <fstream>

#include "pstf/core/errors.hpp"

namespace pstf {

void Image::quantize8() {
    for (auto& v : pixels) {
        double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        v = std::round(c * 255.0) / 255.0;
    }
}

Tensor Image::to_tensor() const {
    Tensor t = Tensor::zeros({3, height, width});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                t.ptr()[((size_t)c * height + y) * width + x] = at(y, x, c);
    return t;
}

Image Image::from_tensor(const Tensor& t) {
    if (t.shape().size() != 3 || t.dim(0) != 3) throw ConfigError("from_tensor: need [3,h,w]");
    Image img(t.dim(1), t.dim(2));
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                img.at(y, x, c) = t.ptr()[((size_t)c * img.height + y) * img.width + x];
    return img;
}

void write_ppm(const Image& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeAbort("cannot write image: " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> row((size_t)img.width * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = img.at(y, x, c);
                v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
                row[(size_t)x * 3 + c] = (unsigned char)std::lround(v * 255.0);
            }
        out.write(reinterpret_cast<const char*>(row.data()), (std::streamsize)row.size());
    }
    if (!out) throw RuntimeAbort("short write: " + path);
}

Image read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RuntimeAbort("cannot read image: " + path);
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    if (magic != "P6" || maxval != 255 || w <= 0 || h <= 0)
        throw RuntimeAbort("unsupported ppm: " + path);
    in.get();  // single whitespace after header
    Image img(h, w);
    std::vector<unsigned char> row((size_t)w * 3);
    for (int y = 0; y < h; ++y) {
        in.read(reinterpret_cast<char*>(row.data()), (std::streamsize)row.size());
        if ((size_t)in.gcount() != row.size()) throw RuntimeAbort("truncated ppm: " + path);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = (double)row[(size_t)x * 3 + c] / 255.0;
    }
    return img;
}

}  // namespace pstf
