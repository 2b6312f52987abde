#include "bevmask/dump.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "common/errors.hpp"

namespace bevmask {

namespace {
template <typename T>
void put(std::string& s, T v) {
    s.append(reinterpret_cast<const char*>(&v), sizeof(T));
}
}  // namespace

std::string dump_bytes(const MaskStack& m) {
    std::string s;
    put<std::uint32_t>(s, static_cast<std::uint32_t>(m.channels));
    put<std::uint32_t>(s, static_cast<std::uint32_t>(m.size_px));
    put<std::uint32_t>(s, static_cast<std::uint32_t>(m.size_px));
    put<double>(s, m.resolution);
    s.append(reinterpret_cast<const char*>(m.data.data()), m.data.size() * sizeof(double));
    return s;
}

void write_dump(const std::string& path, const MaskStack& m) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw common::IoError("raster dump: cannot open for write: " + path);
    const std::string bytes = dump_bytes(m);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw common::IoError("raster dump: write failed: " + path);
}

MaskStack read_dump(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw common::IoError("raster dump: cannot open: " + path);
    std::uint32_t c = 0, h = 0, w = 0;
    double res = 0.0;
    is.read(reinterpret_cast<char*>(&c), sizeof(c));
    is.read(reinterpret_cast<char*>(&h), sizeof(h));
    is.read(reinterpret_cast<char*>(&w), sizeof(w));
    is.read(reinterpret_cast<char*>(&res), sizeof(res));
    if (!is || h != w) throw common::IoError("raster dump: bad header in " + path);
    MaskStack m;
    m.channels = static_cast<int>(c);
    m.size_px = static_cast<int>(h);
    m.resolution = res;
    m.anchor_col = m.anchor_row = m.size_px / 2;
    m.data.resize(static_cast<std::size_t>(c) * h * w);
    is.read(reinterpret_cast<char*>(m.data.data()), static_cast<std::streamsize>(m.data.size() * sizeof(double)));
    if (!is) throw common::IoError("raster dump: truncated data in " + path);
    return m;
}

void write_pgm(const std::string& path, const MaskStack& m, int channel) {
    if (channel < 0 || channel >= m.channels) throw common::ContractError("write_pgm: channel out of range");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw common::IoError("pgm: cannot open for write: " + path);
    os << "P5\n" << m.size_px << " " << m.size_px << "\n255\n";
    const double* plane = m.channel(channel);
    for (int i = 0; i < m.size_px * m.size_px; ++i) {
        const unsigned char v = static_cast<unsigned char>(std::lround(std::clamp(plane[i], 0.0, 1.0) * 255.0));
        os.put(static_cast<char>(v));
    }
    if (!os) throw common::IoError("pgm: write failed: " + path);
}

}  // namespace bevmask
