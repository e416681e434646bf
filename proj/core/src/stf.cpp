#include "seedsr/stf.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "seedsr/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "STF codec below assumes a little-endian host");

namespace seedsr {

namespace {

constexpr char kMagic[4] = {'S', 'T', 'F', '1'};

void write_all(std::ofstream& f, const void* p, size_t n) {
    f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_all(std::ifstream& f, void* p, size_t n, const std::string& path) {
    f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(f.gcount()) != n) {
        throw FormatError("stf: truncated file " + path);
    }
}

}  // namespace

void save_stf(const std::string& path, const Tensor& t, bool as_f32) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw MissingArtifactError("stf: cannot open for writing: " + path);
    write_all(f, kMagic, 4);
    const uint8_t dtype = as_f32 ? 1 : 2;
    const uint8_t ndim = static_cast<uint8_t>(t.ndim());
    write_all(f, &dtype, 1);
    write_all(f, &ndim, 1);
    for (int d : t.dims()) {
        const uint32_t u = static_cast<uint32_t>(d);
        write_all(f, &u, 4);
    }
    if (as_f32) {
        std::vector<float> buf(static_cast<size_t>(t.numel()));
        for (int64_t i = 0; i < t.numel(); ++i) buf[static_cast<size_t>(i)] = static_cast<float>(t[i]);
        write_all(f, buf.data(), buf.size() * 4);
    } else {
        write_all(f, t.raw(), static_cast<size_t>(t.numel()) * 8);
    }
    if (!f) throw FormatError("stf: write failed: " + path);
}

Tensor load_stf(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw MissingArtifactError("stf: cannot open: " + path);
    char magic[4];
    read_all(f, magic, 4, path);
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("stf: bad magic in " + path);
    }
    uint8_t dtype = 0, ndim = 0;
    read_all(f, &dtype, 1, path);
    read_all(f, &ndim, 1, path);
    if (dtype != 1 && dtype != 2) {
        throw FormatError("stf: unknown dtype code " + std::to_string(dtype) + " in " + path);
    }
    std::vector<int> dims(ndim);
    for (auto& d : dims) {
        uint32_t u = 0;
        read_all(f, &u, 4, path);
        if (u == 0 || u > (1u << 24)) throw FormatError("stf: implausible extent in " + path);
        d = static_cast<int>(u);
    }
    const int64_t n = numel_of(dims);
    std::vector<double> data(static_cast<size_t>(n));
    if (dtype == 1) {
        std::vector<float> buf(static_cast<size_t>(n));
        read_all(f, buf.data(), buf.size() * 4, path);
        for (int64_t i = 0; i < n; ++i) data[static_cast<size_t>(i)] = buf[static_cast<size_t>(i)];
    } else {
        read_all(f, data.data(), data.size() * 8, path);
    }
    // trailing garbage means the writer and reader disagree on the format
    char probe;
    f.read(&probe, 1);
    if (f.gcount() != 0) throw FormatError("stf: trailing bytes in " + path);
    return Tensor(std::move(dims), std::move(data));
}

}  // namespace seedsr
