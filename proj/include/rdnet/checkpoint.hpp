#pragma once

// Versioned binary checkpoint, little-endian:
//
//   "RDNETCKP" | u32 version | u64 fingerprint | u64 step | u32 entries
//   per entry: u32 name_len | name | u32 n,c,h,w | f64 × n·c·h·w
//
// Entries are "param/<name>", plus "rmsprop.square_avg/<name>" and
// "rmsprop.momentum/<name>" once the optimizer has state. The fingerprint
// hashes the architecture description; loading into a differently shaped
// model is refused.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "rdnet/model.hpp"

namespace rdnet {

inline constexpr char kCheckpointMagic[8] = {'R', 'D', 'N', 'E', 'T', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// FNV-1a 64.
inline std::uint64_t fingerprint(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fingerprint(const ModelConfig& cfg) { return fingerprint(cfg.architecture()); }

namespace checkpoint_detail {

class Writer {
public:
    void u32(std::uint32_t v) { raw(v, 4); }
    void u64(std::uint64_t v) { raw(v, 8); }
    void f64(double v) { raw(std::bit_cast<std::uint64_t>(v), 8); }
    void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
    const std::vector<char>& buffer() const { return buf_; }

private:
    void raw(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    std::vector<char> buf_;
};

class Reader {
public:
    Reader(std::vector<char> data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}
    std::uint32_t u32() { return static_cast<std::uint32_t>(raw(4)); }
    std::uint64_t u64() { return raw(8); }
    double f64() { return std::bit_cast<double>(raw(8)); }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s(data_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw ValidationError("checkpoint '" + path_ + "' is truncated");
    }
    std::uint64_t raw(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }
    std::vector<char> data_;
    std::string path_;
    std::size_t pos_ = 0;
};

inline void write_entry(Writer& w, const std::string& name, const Shape& s, std::span<const double> values) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name);
    for (std::size_t d : {s.n, s.c, s.h, s.w}) w.u32(static_cast<std::uint32_t>(d));
    for (double v : values) w.f64(v);
}

}  // namespace checkpoint_detail

inline void save_checkpoint(const std::filesystem::path& path, const Rdnet& model, std::uint64_t step) {
    using namespace checkpoint_detail;
    const auto& entries = model.params().entries();
    std::uint32_t count = 0;
    for (const auto& e : entries) count += 1 + (e.square_avg.empty() ? 0 : 1) + (e.momentum.empty() ? 0 : 1);

    Writer w;
    w.bytes(std::string_view(kCheckpointMagic, sizeof kCheckpointMagic));
    w.u32(kCheckpointVersion);
    w.u64(fingerprint(model.config()));
    w.u64(step);
    w.u32(count);
    for (const auto& e : entries) {
        const Shape s = e.value.shape();
        write_entry(w, "param/" + e.name, s, e.value.data());
        if (!e.square_avg.empty()) write_entry(w, "rmsprop.square_avg/" + e.name, s, e.square_avg);
        if (!e.momentum.empty()) write_entry(w, "rmsprop.momentum/" + e.name, s, e.momentum);
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write checkpoint '" + path.string() + "'");
    f.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
    if (!f) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

/// Restores parameters and optimizer state; returns the saved step.
inline std::uint64_t load_checkpoint(const std::filesystem::path& path, Rdnet& model) {
    using namespace checkpoint_detail;
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint '" + path.string() + "'");
    std::vector<char> data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader r(std::move(data), path.string());
    if (r.bytes(sizeof kCheckpointMagic) != std::string_view(kCheckpointMagic, sizeof kCheckpointMagic))
        throw ValidationError("'" + path.string() + "' is not a checkpoint file");
    if (const auto v = r.u32(); v != kCheckpointVersion)
        throw ValidationError("checkpoint '" + path.string() + "' has unsupported version " + std::to_string(v));
    if (r.u64() != fingerprint(model.config()))
        throw ValidationError("checkpoint '" + path.string() +
                              "' was written for a different architecture (config fingerprint mismatch)");
    const std::uint64_t step = r.u64();
    const std::uint32_t count = r.u32();

    // Decode fully before touching the model so a bad file changes nothing.
    struct Decoded {
        std::string name;
        Shape shape;
        std::vector<double> values;
    };
    std::vector<Decoded> decoded;
    for (std::uint32_t i = 0; i < count; ++i) {
        Decoded d;
        d.name = r.bytes(r.u32());
        d.shape = {r.u32(), r.u32(), r.u32(), r.u32()};
        d.values.resize(d.shape.numel());
        for (double& v : d.values) v = r.f64();
        decoded.push_back(std::move(d));
    }
    if (!r.done()) throw ValidationError("checkpoint '" + path.string() + "' has trailing bytes");

    auto& entries = model.params().entries();
    auto find = [&](const std::string& name) -> ParamStore::Entry& {
        for (auto& e : entries)
            if (e.name == name) return e;
        throw ValidationError("checkpoint '" + path.string() + "' names unknown parameter '" + name + "'");
    };
    std::vector<std::pair<ParamStore::Entry*, std::string>> targets;
    std::size_t params_seen = 0;
    for (const Decoded& d : decoded) {
        const auto slash = d.name.find('/');
        const std::string kind = d.name.substr(0, slash);
        const std::string name = slash == std::string::npos ? std::string() : d.name.substr(slash + 1);
        if (kind != "param" && kind != "rmsprop.square_avg" && kind != "rmsprop.momentum")
            throw ValidationError("checkpoint '" + path.string() + "': unknown entry kind '" + kind + "'");
        ParamStore::Entry& e = find(name);
        if (d.shape != e.value.shape())
            throw ValidationError("checkpoint '" + path.string() + "': '" + d.name + "' has shape " + d.shape.str() +
                                  ", model expects " + e.value.shape().str());
        if (kind == "param") ++params_seen;
        targets.emplace_back(&e, kind);
    }
    if (params_seen != entries.size())
        throw ValidationError("checkpoint '" + path.string() + "' is missing parameters");
    for (auto& e : entries) {
        e.square_avg.clear();
        e.momentum.clear();
    }
    for (std::size_t i = 0; i < decoded.size(); ++i) {
        auto& [e, kind] = targets[i];
        if (kind == "param") std::copy(decoded[i].values.begin(), decoded[i].values.end(), e->value.mutable_data().begin());
        else if (kind == "rmsprop.square_avg") e->square_avg = decoded[i].values;
        else e->momentum = decoded[i].values;
    }
    return step;
}

}  // namespace rdnet
