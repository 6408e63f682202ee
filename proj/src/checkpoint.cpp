#include "streamdit/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace streamdit {

namespace {
constexpr char kMagic[4] = {'S', 'D', 'C', 'K'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i)
        b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i)
        b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double d) {
    uint64_t v;
    std::memcpy(&v, &d, 8);
    put_u64(os, v);
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    check(is.good(), "checkpoint: truncated file");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    check(is.good(), "checkpoint: truncated file");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& is) {
    uint64_t v = get_u64(is);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
}
}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& params) {
    std::ofstream os(path, std::ios::binary);
    check(os.good(), "checkpoint: cannot open for write");
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_u64(os, params.size());
    for (const auto& [name, t] : params) {
        put_u32(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(os, static_cast<uint32_t>(t.rank()));
        for (long e : t.shape)
            put_u64(os, static_cast<uint64_t>(e));
        for (double d : t.data)
            put_f64(os, d);
    }
    check(os.good(), "checkpoint: write failed");
}

ParamStore load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    check(is.good(), "checkpoint: cannot open for read");
    char magic[4];
    is.read(magic, 4);
    check(is.good() && std::memcmp(magic, kMagic, 4) == 0, "checkpoint: bad magic");
    check(get_u32(is) == kVersion, "checkpoint: unsupported version");
    const uint64_t count = get_u64(is);
    ParamStore params;
    for (uint64_t i = 0; i < count; ++i) {
        const uint32_t len = get_u32(is);
        std::string name(len, '\0');
        is.read(name.data(), len);
        check(is.good(), "checkpoint: truncated name");
        const uint32_t rank = get_u32(is);
        std::vector<long> shape(rank);
        for (auto& e : shape)
            e = static_cast<long>(get_u64(is));
        Tensor t(shape);
        for (auto& d : t.data)
            d = get_f64(is);
        params.emplace(std::move(name), std::move(t));
    }
    return params;
}

}  // namespace streamdit
