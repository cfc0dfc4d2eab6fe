#include "diffgate/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace diffgate {

static_assert(std::endian::native == std::endian::little,
              "file formats are defined little-endian");

namespace {

constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void put(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const char* what) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw FormatError(std::string("truncated file while reading ") + what);
    return v;
}

void put_string(std::ofstream& out, const std::string& s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::ifstream& in) {
    const auto len = get<std::uint32_t>(in, "string length");
    std::string s(len, '\0');
    in.read(s.data(), len);
    if (!in) throw FormatError("truncated file while reading string");
    return s;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open for writing: " + path.string());
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open for reading: " + path.string());
    return in;
}

ConfigHash read_header(std::ifstream& in, const char magic[4],
                       const ConfigHash* expected_hash, const std::string& path) {
    char m[4];
    in.read(m, 4);
    if (!in || std::memcmp(m, magic, 4) != 0)
        throw FormatError("bad magic in " + path);
    const auto version = get<std::uint32_t>(in, "format version");
    if (version != kFormatVersion)
        throw FormatError("unsupported format version " + std::to_string(version));
    ConfigHash hash;
    in.read(reinterpret_cast<char*>(hash.data()), hash.size());
    if (!in) throw FormatError("truncated header in " + path);
    if (expected_hash && hash != *expected_hash)
        throw IncompatibleError("config hash mismatch: file " + hash_hex(hash) +
                                " vs expected " + hash_hex(*expected_hash));
    return hash;
}

void write_header(std::ofstream& out, const char magic[4], const ConfigHash& hash) {
    out.write(magic, 4);
    put<std::uint32_t>(out, kFormatVersion);
    out.write(reinterpret_cast<const char*>(hash.data()), hash.size());
}

}  // namespace

std::string hash_hex(const ConfigHash& h) {
    static const char* digits = "0123456789abcdef";
    std::string s;
    s.reserve(64);
    for (auto b : h) {
        s += digits[b >> 4];
        s += digits[b & 0xf];
    }
    return s;
}

void save_mask(const DiffSubnetwork& net, const std::filesystem::path& path,
               const ConfigHash& config_hash) {
    if (!net.frozen())
        throw std::logic_error("save_mask: subnetwork has no frozen mask yet");
    auto out = open_out(path);
    write_header(out, "DGM1", config_hash);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(net.groups().size()));
    for (const auto& [name, g] : net.groups()) {
        put_string(out, name);
        std::uint64_t count = 0;
        for (double v : g.frozen_mask.data())
            if (v != 0.0) ++count;
        put<std::uint64_t>(out, count);
        for (std::size_t i = 0; i < g.frozen_mask.numel(); ++i)
            if (g.frozen_mask.data()[i] != 0.0) {
                put<std::uint64_t>(out, i);
                put<double>(out, g.w.data()[i]);
            }
    }
    if (!out) throw FormatError("write failed: " + path.string());
}

DiffSubnetwork load_mask(const std::filesystem::path& path, const ParamGroups& shapes,
                         const ConfigHash* expected_hash) {
    auto in = open_in(path);
    read_header(in, "DGM1", expected_hash, path.string());
    const auto group_count = get<std::uint32_t>(in, "group count");

    std::map<std::string, DiffSubnetwork::Group> groups;
    for (std::uint32_t gi = 0; gi < group_count; ++gi) {
        const std::string name = get_string(in);
        auto it = shapes.find(name);
        if (it == shapes.end())
            throw FormatError("mask file names unknown group '" + name + "'");
        const std::size_t numel = it->second.numel();
        std::vector<double> w(numel, 0.0), mask(numel, 0.0);
        const auto entries = get<std::uint64_t>(in, "entry count");
        for (std::uint64_t e = 0; e < entries; ++e) {
            const auto idx = get<std::uint64_t>(in, "entry index");
            const auto val = get<double>(in, "entry value");
            if (idx >= numel)
                throw FormatError("entry index out of range in group '" + name + "'");
            w[idx] = val;
            mask[idx] = 1.0;
        }
        DiffSubnetwork::Group g;
        g.w = Tensor::from(it->second.shape(), std::move(w), /*requires_grad=*/true);
        g.frozen_mask = Tensor::from(it->second.shape(), std::move(mask));
        groups.emplace(name, std::move(g));
    }
    if (groups.size() != shapes.size())
        throw FormatError("mask file covers " + std::to_string(groups.size()) +
                          " groups, model has " + std::to_string(shapes.size()));
    return DiffSubnetwork::from_frozen(std::move(groups));
}

void save_checkpoint(const ParamGroups& params, const std::filesystem::path& path,
                     const ConfigHash& config_hash) {
    auto out = open_out(path);
    write_header(out, "DGC1", config_hash);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, t] : params) {
        put_string(out, name);
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape().size()));
        for (auto d : t.shape()) put<std::uint64_t>(out, d);
        out.write(reinterpret_cast<const char*>(t.data().data()),
                  static_cast<std::streamsize>(t.numel() * sizeof(double)));
    }
    if (!out) throw FormatError("write failed: " + path.string());
}

ParamGroups load_checkpoint(const std::filesystem::path& path,
                            const ConfigHash* expected_hash) {
    auto in = open_in(path);
    read_header(in, "DGC1", expected_hash, path.string());
    const auto group_count = get<std::uint32_t>(in, "group count");
    ParamGroups params;
    for (std::uint32_t gi = 0; gi < group_count; ++gi) {
        const std::string name = get_string(in);
        const auto rank = get<std::uint32_t>(in, "rank");
        std::vector<std::size_t> shape(rank);
        std::size_t numel = 1;
        for (auto& d : shape) {
            d = get<std::uint64_t>(in, "dim");
            numel *= d;
        }
        std::vector<double> data(numel);
        in.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(numel * sizeof(double)));
        if (!in) throw FormatError("truncated tensor data in group '" + name + "'");
        params.emplace(name, Tensor::from(std::move(shape), std::move(data)));
    }
    return params;
}

ConfigHash checkpoint_hash(const std::filesystem::path& path) {
    auto in = open_in(path);
    return read_header(in, "DGC1", nullptr, path.string());
}

}  // namespace diffgate
