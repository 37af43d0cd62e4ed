#include "pstf/core/serial.hpp"

namespace pstf {

void write_named_tensors(BinWriter& w, const std::map<std::string, Tensor>& entries) {
    w.u64(entries.size());
    for (const auto& [name, t] : entries) {  // std::map: sorted, canonical order
        w.str(name);
        w.u32((uint32_t)t.shape().size());
        for (int d : t.shape()) w.u32((uint32_t)d);
        w.raw(t.data().data(), t.data().size() * 8);
    }
}

std::map<std::string, Tensor> read_named_tensors(BinReader& r) {
    std::map<std::string, Tensor> out;
    uint64_t n = r.u64();
    for (uint64_t i = 0; i < n; ++i) {
        std::string name = r.str();
        uint32_t nd = r.u32();
        Shape shape;
        for (uint32_t k = 0; k < nd; ++k) shape.push_back((int)r.u32());
        Tensor t = Tensor::zeros(shape);
        r.raw(t.data().data(), t.data().size() * 8);
        out.emplace(std::move(name), std::move(t));
    }
    return out;
}

}  // namespace pstf
