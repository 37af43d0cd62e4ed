#ifndef PSTF_CORE_SERIAL_HPP
#define PSTF_CORE_SERIAL_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "pstf/core/errors.hpp"
#include "pstf/core/tensor.hpp"

namespace pstf {

// Little-endian binary stream helpers. All on-disk formats in this project
// are written through these so the byte layout is identical everywhere.
class BinWriter {
public:
    explicit BinWriter(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw RuntimeAbort("cannot open for write: " + path);
        path_ = path;
    }

    void u32(uint32_t v) { raw(&v, 4); }
    void u64(uint64_t v) { raw(&v, 8); }
    void i64(int64_t v) { raw(&v, 8); }
    void f32(float v) { raw(&v, 4); }
    void f64(double v) { raw(&v, 8); }

    void str(const std::string& s) {
        u32((uint32_t)s.size());
        raw(s.data(), s.size());
    }

    void f64_array(const std::vector<double>& v) {
        u64(v.size());
        raw(v.data(), v.size() * 8);
    }

    void f32_array_from_f64(const std::vector<double>& v) {
        for (double x : v) f32((float)x);
    }

    void raw(const void* p, size_t n) {
        out_.write(reinterpret_cast<const char*>(p), (std::streamsize)n);
        if (!out_) throw RuntimeAbort("write failed: " + path_);
    }

    void close() { out_.close(); }

private:
    std::ofstream out_;
    std::string path_;
};

class BinReader {
public:
    explicit BinReader(const std::string& path) : in_(path, std::ios::binary) {
        if (!in_) throw RuntimeAbort("cannot open for read: " + path);
        path_ = path;
    }

    uint32_t u32() {
        uint32_t v;
        raw(&v, 4);
        return v;
    }
    uint64_t u64() {
        uint64_t v;
        raw(&v, 8);
        return v;
    }
    int64_t i64() {
        int64_t v;
        raw(&v, 8);
        return v;
    }
    float f32() {
        float v;
        raw(&v, 4);
        return v;
    }
    double f64() {
        double v;
        raw(&v, 8);
        return v;
    }

    std::string str() {
        uint32_t n = u32();
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }

    std::vector<double> f64_array() {
        uint64_t n = u64();
        std::vector<double> v(n);
        raw(v.data(), n * 8);
        return v;
    }

    void raw(void* p, size_t n) {
        in_.read(reinterpret_cast<char*>(p), (std::streamsize)n);
        if ((size_t)in_.gcount() != n) throw RuntimeAbort("truncated read: " + path_);
    }

    bool at_eof() {
        return in_.peek() == std::char_traits<char>::eof();
    }

private:
    std::ifstream in_;
    std::string path_;
};

// Named-tensor archive body shared by checkpoints, probes and world files.
// Layout per entry: name, u32 ndim, u32 dims[ndim], f64 data (row-major LE).
void write_named_tensors(BinWriter& w, const std::map<std::string, Tensor>& entries);
std::map<std::string, Tensor> read_named_tensors(BinReader& r);

}  // namespace pstf

#endif  // PSTF_CORE_SERIAL_HPP
