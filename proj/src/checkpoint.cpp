#include "gfk/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace gfk {
namespace {

constexpr char kMagic[4] = {'G', 'F', 'K', '1'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

void write_f64(std::ostream& os, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64(os, bits);
}

uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

double read_f64(std::istream& is) {
    const uint64_t bits = read_u64(is);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedParam>& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    for (const auto& p : params) {
        write_u32(os, static_cast<uint32_t>(p.name.size()));
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        write_u32(os, static_cast<uint32_t>(p.tensor.rank()));
        for (int64_t d : p.tensor.shape()) write_u64(os, static_cast<uint64_t>(d));
        for (double v : p.tensor.data()) write_f64(os, v);
    }
    if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

std::vector<NamedParam> read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    const uint32_t version = read_u32(is);
    if (version != kVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version) + " in " + path);
    std::vector<NamedParam> out;
    while (true) {
        is.peek();
        if (is.eof()) break;
        const uint32_t name_len = read_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw std::runtime_error("checkpoint: truncated name in " + path);
        const uint32_t rank = read_u32(is);
        Shape shape(rank);
        for (uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int64_t>(read_u64(is));
        const int64_t n = shape_numel(shape);
        std::vector<double> values(static_cast<size_t>(n));
        for (auto& v : values) v = read_f64(is);
        out.push_back({std::move(name), Tensor::from_vector(std::move(shape), std::move(values))});
    }
    return out;
}

void load_checkpoint(const std::string& path, std::vector<NamedParam>& params) {
    auto stored = read_checkpoint(path);
    std::map<std::string, Tensor> by_name;
    for (auto& p : stored) by_name.emplace(p.name, p.tensor);
    for (auto& p : params) {
        auto it = by_name.find(p.name);
        if (it == by_name.end()) throw std::runtime_error("checkpoint: missing parameter " + p.name + " in " + path);
        if (it->second.shape() != p.tensor.shape())
            throw std::runtime_error("checkpoint: shape mismatch for " + p.name + ": file " +
                                     shape_str(it->second.shape()) + " vs model " + shape_str(p.tensor.shape()));
        auto dst = p.tensor.mutable_data();
        auto src = it->second.data();
        std::copy(src.begin(), src.end(), dst.begin());
    }
}

}  // namespace gfk
