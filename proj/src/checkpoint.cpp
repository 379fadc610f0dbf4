// Copyright (c) 2026, The coqg Authors
// SPDX-License-Identifier: Apache-2.0

#include "checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "errors.hpp"

namespace coqg {

namespace {

constexpr char kMagic[8] = {'C', 'O', 'Q', 'G', 'C', 'K', 'P', 'T'};

template <typename T>
T to_little(T v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
        std::memcpy(&v, b, sizeof(T));
        return v;
    }
}

class Writer {
public:
    template <typename T>
    void put(T v) {
        v = to_little(v);
        out_.append(reinterpret_cast<const char*>(&v), sizeof(T));
    }
    void put_bytes(const std::string& s) {
        put(static_cast<std::uint32_t>(s.size()));
        out_ += s;
    }
    void put_doubles(const DenseArray& a) {
        for (double v : a.values()) put(v);
    }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(const std::string& in) : in_(in) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, in_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return to_little(v);
    }
    std::string get_bytes() {
        const auto n = get<std::uint32_t>();
        need(n);
        std::string s = in_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    DenseArray get_doubles(const Shape& shape) {
        std::vector<double> v(element_count(shape));
        for (double& x : v) x = get<double>();
        return DenseArray(shape, std::move(v));
    }
    bool done() const { return pos_ == in_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > in_.size()) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
    }
    const std::string& in_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const ParameterStore& store, const std::string& metadata) {
    Writer w;
    std::string magic(kMagic, sizeof(kMagic));
    for (char c : magic) w.put(c);
    w.put(kCheckpointVersion);
    w.put(store.rng_seed());
    w.put(store.optimizer_steps());
    w.put_bytes(metadata);
    w.put(static_cast<std::uint32_t>(store.size()));
    for (const auto& [name, p] : store) {
        w.put_bytes(name);
        w.put(static_cast<std::uint8_t>(p.trainable));
        const bool moments = !p.first_moment.empty();
        w.put(static_cast<std::uint8_t>(moments));
        w.put(static_cast<std::uint32_t>(p.value.rank()));
        for (std::size_t e : p.value.shape()) w.put(static_cast<std::uint64_t>(e));
        w.put_doubles(p.value);
        if (moments) {
            w.put_doubles(p.first_moment);
            w.put_doubles(p.second_moment);
        }
    }
    return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
    Reader r(bytes);
    for (char c : kMagic) {
        if (r.get<char>() != c) throw FormatError("not a coqg checkpoint (bad magic)");
    }
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint format version " + std::to_string(version));
    }
    Checkpoint ck{ParameterStore(r.get<std::uint64_t>()), {}};
    ck.store.set_optimizer_steps(r.get<std::uint64_t>());
    ck.metadata = r.get_bytes();
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.get_bytes();
        const bool trainable = r.get<std::uint8_t>() != 0;
        const bool moments = r.get<std::uint8_t>() != 0;
        const auto rank = r.get<std::uint32_t>();
        if (rank == 0 || rank > 8) throw FormatError("bad rank for parameter '" + name + "'");
        Shape shape(rank);
        for (auto& e : shape) e = static_cast<std::size_t>(r.get<std::uint64_t>());
        Parameter& p = ck.store.add(name, r.get_doubles(shape), trainable);
        if (moments) {
            p.first_moment = r.get_doubles(shape);
            p.second_moment = r.get_doubles(shape);
        }
    }
    if (!r.done()) throw FormatError("trailing bytes after checkpoint entries");
    return ck;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path + "'");
}

void save_checkpoint(const std::string& path, const ParameterStore& store, const std::string& metadata) {
    write_file(path, serialize_checkpoint(store, metadata));
}

Checkpoint load_checkpoint(const std::string& path) { return deserialize_checkpoint(read_file(path)); }

}  // namespace coqg
