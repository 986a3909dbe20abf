#include "b0cast/b0v_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace b0cast {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little,
              "B0V payload writer assumes a little-endian host");

json header_common(const GridSpec& g, Units units) {
    json h;
    h["magic"] = "B0V1";
    h["dims"] = {g.dims[0], g.dims[1], g.dims[2]};
    h["spacing_mm"] = {g.spacing[0], g.spacing[1], g.spacing[2]};
    h["origin_mm"] = {g.origin[0], g.origin[1], g.origin[2]};
    h["units"] = units_to_string(units);
    h["dtype"] = "f32le";
    return h;
}

void write_payload(std::ofstream& f, const float* data, std::size_t count) {
    f.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(float)));
}

struct ParsedHeader {
    GridSpec grid;
    Units units;
    std::vector<double> echoes_ms;
    bool has_echoes = false;
};

template <typename T>
T require_field(const json& h, const char* name) {
    if (!h.contains(name)) throw ParseError(std::string("B0V header: missing field '") + name + "'");
    try {
        return h.at(name).get<T>();
    } catch (const json::exception&) {
        throw ParseError(std::string("B0V header: malformed field '") + name + "'");
    }
}

ParsedHeader parse_header(const std::string& line, const std::filesystem::path& path) {
    json h;
    try {
        h = json::parse(line);
    } catch (const json::exception& e) {
        throw ParseError("B0V header: invalid JSON in " + path.string() + ": " + e.what());
    }
    if (require_field<std::string>(h, "magic") != "B0V1")
        throw ParseError("B0V header: bad field 'magic' in " + path.string());
    if (require_field<std::string>(h, "dtype") != "f32le")
        throw ParseError("B0V header: unsupported field 'dtype' in " + path.string());
    auto dims = require_field<std::vector<long long>>(h, "dims");
    auto spacing = require_field<std::vector<double>>(h, "spacing_mm");
    auto origin = require_field<std::vector<double>>(h, "origin_mm");
    if (dims.size() != 3) throw ParseError("B0V header: field 'dims' must have 3 entries");
    if (spacing.size() != 3) throw ParseError("B0V header: field 'spacing_mm' must have 3 entries");
    if (origin.size() != 3) throw ParseError("B0V header: field 'origin_mm' must have 3 entries");
    ParsedHeader p;
    for (int a = 0; a < 3; ++a) {
        if (dims[a] <= 0) throw ParseError("B0V header: field 'dims' must be positive");
        if (!(spacing[a] > 0.0)) throw ParseError("B0V header: field 'spacing_mm' must be positive");
        p.grid.dims[a] = static_cast<int>(dims[a]);
        p.grid.spacing[a] = spacing[a];
        p.grid.origin[a] = origin[a];
    }
    p.units = units_from_string(require_field<std::string>(h, "units"));
    if (h.contains("echoes_ms")) {
        p.echoes_ms = require_field<std::vector<double>>(h, "echoes_ms");
        p.has_echoes = true;
    }
    return p;
}

std::vector<float> read_payload(std::ifstream& f, std::size_t expected,
                                const std::filesystem::path& path) {
    std::vector<float> data(expected);
    f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(expected * sizeof(float)));
    const auto got = static_cast<std::size_t>(f.gcount());
    if (got != expected * sizeof(float))
        throw IntegrityError("B0V payload: expected " + std::to_string(expected * sizeof(float)) +
                             " bytes, file holds " + std::to_string(got) + " in " + path.string());
    // trailing garbage is an integrity failure too
    char probe;
    if (f.read(&probe, 1); f.gcount() != 0)
        throw IntegrityError("B0V payload: trailing bytes after declared payload in " + path.string());
    return data;
}

std::string header_line(std::ifstream& f, const std::filesystem::path& path) {
    std::string line;
    if (!std::getline(f, line))
        throw ParseError("B0V header: cannot read header line from " + path.string());
    return line;
}

} // namespace

void write_volume(const Volume3D& vol, const std::filesystem::path& path) {
    vol.validate();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open for writing: " + path.string());
    f << header_common(vol.grid, vol.units).dump() << '\n';
    write_payload(f, vol.data.data(), vol.data.size());
    if (!f) throw Error("write failed: " + path.string());
}

Volume3D read_volume(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open for reading: " + path.string());
    const ParsedHeader h = parse_header(header_line(f, path), path);
    if (h.has_echoes)
        throw ParseError("B0V header: scalar read of a multi-echo file " + path.string());
    Volume3D vol;
    vol.grid = h.grid;
    vol.units = h.units;
    vol.data = read_payload(f, h.grid.num_voxels(), path);
    for (float v : vol.data)
        if (!std::isfinite(v)) throw IntegrityError("B0V payload: non-finite value in " + path.string());
    return vol;
}

void write_complex_volume(const ComplexVolume& vol, const std::filesystem::path& path) {
    vol.validate();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open for writing: " + path.string());
    json h = header_common(vol.grid, Units::dimensionless);
    h["echoes_ms"] = vol.echoes_ms;
    f << h.dump() << '\n';
    for (const auto& echo : vol.echo_data)
        write_payload(f, reinterpret_cast<const float*>(echo.data()), echo.size() * 2);
    if (!f) throw Error("write failed: " + path.string());
}

ComplexVolume read_complex_volume(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open for reading: " + path.string());
    const ParsedHeader h = parse_header(header_line(f, path), path);
    if (!h.has_echoes)
        throw ParseError("B0V header: missing field 'echoes_ms' for complex read of " + path.string());
    const std::size_t nvox = h.grid.num_voxels();
    const std::size_t ne = h.echoes_ms.size();
    const auto payload = read_payload(f, nvox * 2 * ne, path);
    ComplexVolume vol;
    vol.grid = h.grid;
    vol.echoes_ms = h.echoes_ms;
    vol.echo_data.resize(ne);
    for (std::size_t e = 0; e < ne; ++e) {
        vol.echo_data[e].resize(nvox);
        std::memcpy(vol.echo_data[e].data(), payload.data() + e * nvox * 2, nvox * 2 * sizeof(float));
    }
    vol.validate();
    return vol;
}

} // namespace b0cast
