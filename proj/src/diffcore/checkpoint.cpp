#include "diffcore/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "common/errors.hpp"
#include "diffcore/rng.hpp"

namespace diffcore {

namespace {

constexpr char kMagic[8] = {'M', 'D', 'C', 'K', 'P', 'T', '0', '1'};

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw common::IoError("checkpoint: truncated file");
    return v;
}

}  // namespace

std::uint64_t config_digest(const std::string& canonical) { return hash_label(canonical); }

void save_checkpoint(const std::string& path, const ParamStore& params, const CheckpointMeta& meta) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw common::IoError("checkpoint: cannot open for write: " + path);
    os.write(kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(os, meta.version);
    write_pod<std::uint64_t>(os, meta.config_digest);
    write_pod<std::uint64_t>(os, meta.step);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
    params.for_each_const([&](const std::string& name, const Tensor& p, const Tensor&) {
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(p.rank()));
        for (std::size_t d : p.shape()) write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(d));
        os.write(reinterpret_cast<const char*>(p.data()), static_cast<std::streamsize>(p.numel() * sizeof(double)));
    });
    if (!os) throw common::IoError("checkpoint: write failed: " + path);
}

CheckpointMeta load_checkpoint(const std::string& path, ParamStore& params) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw common::IoError("checkpoint: cannot open: " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw common::IoError("checkpoint: bad magic in " + path);
    CheckpointMeta meta;
    meta.version = read_pod<std::uint32_t>(is);
    if (meta.version != 1) throw common::IoError("checkpoint: unsupported version " + std::to_string(meta.version));
    meta.config_digest = read_pod<std::uint64_t>(is);
    meta.step = read_pod<std::uint64_t>(is);
    const auto count = read_pod<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = read_pod<std::uint32_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const auto rank = read_pod<std::uint32_t>(is);
        Shape shape(rank);
        for (auto& d : shape) d = static_cast<std::size_t>(read_pod<std::uint64_t>(is));
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
        if (!is) throw common::IoError("checkpoint: truncated tensor data for " + name);
        if (params.contains(name)) {
            Tensor& dst = params.param(name);
            Tensor::check_same_shape(dst, t, "load_checkpoint");
            dst = std::move(t);
        } else {
            params.add(name, std::move(t));
        }
    }
    return meta;
}

}  // namespace diffcore
