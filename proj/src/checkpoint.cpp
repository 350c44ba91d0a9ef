#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "cqa/boc_net.hpp"
#include "cqa/errors.hpp"

namespace cqa::boc {

namespace {

constexpr char kMagic[8] = {'C', 'Q', 'A', 'B', 'O', 'C', '\0', '\0'};
constexpr std::uint32_t kVersion = 1;

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out.insert(out.end(), b, b + n);
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }

    std::vector<std::uint8_t> out;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : buf(b) {}
    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw FormatError("checkpoint truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos++]) << (8 * i);
        return v;
    }
    std::string str() {
        const auto n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
        pos += n;
        return s;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    bool done() const { return pos == buf.size(); }

    std::span<const std::uint8_t> buf;
    std::size_t pos = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize(const ModelParameters& params) {
    Writer w;
    w.bytes(kMagic, sizeof kMagic);
    w.u32(kVersion);
    w.u64(params.config.hash());
    w.str(params.config.to_json());
    w.u32(static_cast<std::uint32_t>(params.groups.size()));
    for (const auto& g : params.groups) {
        w.str(g.name);
        w.u32(static_cast<std::uint32_t>(g.tensors.size()));
        for (const auto& t : g.tensors) {
            w.str(t.name);
            w.u32(t.is_bias ? 1 : 0);
            w.u32(static_cast<std::uint32_t>(t.shape.size()));
            for (int d : t.shape) w.u32(static_cast<std::uint32_t>(d));
            for (double v : t.values) w.f32(static_cast<float>(v));
        }
    }
    return std::move(w.out);
}

ModelParameters deserialize(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    r.need(sizeof kMagic);
    if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw FormatError("not a model checkpoint");
    r.pos += sizeof kMagic;
    const auto version = r.u32();
    if (version != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const auto hash = r.u64();
    const auto cfg = NetworkConfig::from_json(r.str());
    if (cfg.hash() != hash) throw FormatError("checkpoint config hash mismatch");

    ModelParameters p = zero_parameters(cfg);
    const auto n_groups = r.u32();
    if (n_groups != p.groups.size()) throw FormatError("checkpoint layer groups do not match its config");
    for (auto& g : p.groups) {
        if (r.str() != g.name) throw FormatError("checkpoint group name mismatch");
        if (r.u32() != g.tensors.size()) throw FormatError("checkpoint tensor count mismatch in " + g.name);
        for (auto& t : g.tensors) {
            if (r.str() != t.name) throw FormatError("checkpoint tensor name mismatch");
            if ((r.u32() != 0) != t.is_bias) throw FormatError("checkpoint bias flag mismatch for " + t.name);
            const auto rank = r.u32();
            if (rank != t.shape.size()) throw FormatError("checkpoint rank mismatch for " + t.name);
            for (int d : t.shape) {
                if (r.u32() != static_cast<std::uint32_t>(d)) throw FormatError("checkpoint shape mismatch for " + t.name);
            }
            for (auto& v : t.values) v = static_cast<double>(r.f32());
        }
    }
    if (!r.done()) throw FormatError("trailing bytes after checkpoint");
    return p;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParameters& params) {
    const auto bytes = serialize(params);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot write checkpoint " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ModelParameters load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot read checkpoint " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

}  // namespace cqa::boc
