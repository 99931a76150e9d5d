#include "rulkit/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <vector>

#include "rulkit/errors.hpp"

namespace rulkit {

namespace {

constexpr char kMagic[8] = {'R', 'U', 'L', 'K', 'I', 'T', '0', '1'};

const std::array<const char*, 7> kArchIds = {"ae-raw",     "ae-feat", "vqvae-raw",
                                             "vqvae-feat", "astcn",   "pca",
                                             "som"};

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError("checkpoint: truncated file");
    return v;
}

void write_string(std::ostream& out, const std::string& s) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
    const auto n = read_pod<std::uint32_t>(in);
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw IoError("checkpoint: truncated string");
    return s;
}

}  // namespace

std::uint64_t fnv1a_bytes(const void* data, std::size_t n, std::uint64_t hash) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        hash ^= p[i];
        hash *= kFnvPrime;
    }
    return hash;
}

std::uint64_t fnv1a_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file for hashing: " + path.string());
    std::uint64_t hash = kFnvOffset;
    std::array<char, 65536> buf;
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        hash = fnv1a_bytes(buf.data(), static_cast<std::size_t>(in.gcount()), hash);
    }
    return hash;
}

bool is_known_arch(const std::string& arch) {
    for (const char* id : kArchIds)
        if (arch == id) return true;
    return false;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    if (!is_known_arch(ckpt.arch)) throw ConfigError("checkpoint: unknown arch id " + ckpt.arch);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
    out.write(kMagic, sizeof(kMagic));
    write_string(out, ckpt.arch);
    write_pod<std::uint64_t>(out, ckpt.seed);
    write_pod<std::uint64_t>(out, ckpt.tensors.size());
    for (const auto& [name, tensor] : ckpt.tensors) {
        write_string(out, name);
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.ndim()));
        for (std::size_t d = 0; d < tensor.ndim(); ++d)
            write_pod<std::uint64_t>(out, tensor.dim(d));
        out.write(reinterpret_cast<const char*>(tensor.data()),
                  static_cast<std::streamsize>(tensor.size() * sizeof(double)));
    }
    if (!out) throw IoError("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    char magic[sizeof(kMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw IoError("checkpoint: bad magic in " + path.string());

    Checkpoint ckpt;
    ckpt.arch = read_string(in);
    if (!is_known_arch(ckpt.arch)) throw IoError("checkpoint: unknown arch id " + ckpt.arch);
    ckpt.seed = read_pod<std::uint64_t>(in);
    const auto count = read_pod<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string name = read_string(in);
        const auto ndim = read_pod<std::uint32_t>(in);
        std::vector<std::size_t> shape(ndim);
        for (auto& d : shape) d = static_cast<std::size_t>(read_pod<std::uint64_t>(in));
        Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!in) throw IoError("checkpoint: truncated tensor data");
        ckpt.tensors.emplace(std::move(name), std::move(t));
    }
    return ckpt;
}

}  // namespace rulkit
