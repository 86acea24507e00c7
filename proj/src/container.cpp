#include "ssmi/container.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace ssmi {

namespace {

std::array<std::uint32_t, 256> make_crc_table() {
    std::array<std::uint32_t, 256> table{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
        table[i] = c;
    }
    return table;
}

class Writer {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u16(std::uint16_t v) {
        for (int i = 0; i < 2; ++i) bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        bytes_.insert(bytes_.end(), b, b + n);
    }
    std::vector<unsigned char> take() { return std::move(bytes_); }

private:
    std::vector<unsigned char> bytes_;
};

class Reader {
public:
    Reader(const std::vector<unsigned char>& bytes, std::size_t end) : b_(bytes), end_(end) {}

    std::size_t offset() const { return pos_; }
    void need(std::size_t n, const char* what) {
        if (pos_ + n > end_) throw FormatError(pos_, std::string("truncated while reading ") + what);
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return b_[pos_++];
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = 0;
        for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(b_[pos_++]) << (8 * i);
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_++]) << (8 * i);
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_++]) << (8 * i);
        return v;
    }
    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
    std::string str(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
        pos_ += n;
        return s;
    }

private:
    const std::vector<unsigned char>& b_;
    std::size_t end_;
    std::size_t pos_ = 0;
};

}  // namespace

std::uint32_t crc32(const unsigned char* data, std::size_t len) {
    static const auto table = make_crc_table();
    std::uint32_t c = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

std::vector<unsigned char> encode_container(const Container& c) {
    Writer w;
    w.raw("SSMI", 4);
    w.u32(kContainerVersion);
    w.u32(static_cast<std::uint32_t>(c.meta_json.size()));
    w.raw(c.meta_json.data(), c.meta_json.size());
    w.u32(static_cast<std::uint32_t>(c.tensors.size()));
    for (const auto& t : c.tensors) {
        w.u16(static_cast<std::uint16_t>(t.name.size()));
        w.raw(t.name.data(), t.name.size());
        w.u8(static_cast<std::uint8_t>(t.shape.size()));
        std::size_t numel = 1;
        for (std::size_t dim : t.shape) {
            w.u64(dim);
            numel *= dim;
        }
        if (numel != t.data.size()) {
            throw ContractError("encode_container: tensor '" + t.name + "' shape/data mismatch");
        }
        for (double v : t.data) w.f64(v);
    }
    auto bytes = w.take();
    const std::uint32_t crc = crc32(bytes.data(), bytes.size());
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<unsigned char>(crc >> (8 * i)));
    return bytes;
}

Container decode_container(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < 16) throw FormatError(0, "file too short for header");
    const std::size_t body = bytes.size() - 4;
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body + i]) << (8 * i);
    if (crc32(bytes.data(), body) != stored) {
        throw FormatError(body, "CRC32 mismatch");
    }

    Reader r(bytes, body);
    if (r.str(4, "magic") != "SSMI") throw FormatError(0, "bad magic, expected 'SSMI'");
    const std::uint32_t version = r.u32("version");
    if (version != kContainerVersion) {
        throw FormatError(4, "unsupported format version " + std::to_string(version));
    }
    Container c;
    const std::uint32_t meta_len = r.u32("metadata length");
    c.meta_json = r.str(meta_len, "metadata");
    const std::uint32_t count = r.u32("tensor count");
    c.tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedArray t;
        const std::uint16_t name_len = r.u16("tensor name length");
        t.name = r.str(name_len, "tensor name");
        const std::uint8_t ndim = r.u8("tensor rank");
        std::size_t numel = 1;
        for (std::uint8_t k = 0; k < ndim; ++k) {
            const std::uint64_t dim = r.u64("tensor dims");
            if (dim == 0 || dim > (1ull << 32)) {
                throw FormatError(r.offset() - 8, "implausible dimension in '" + t.name + "'");
            }
            t.shape.push_back(static_cast<std::size_t>(dim));
            numel *= static_cast<std::size_t>(dim);
        }
        r.need(numel * 8, "tensor data");
        t.data.resize(numel);
        for (std::size_t k = 0; k < numel; ++k) t.data[k] = r.f64("tensor data");
        c.tensors.push_back(std::move(t));
    }
    if (r.offset() != body) {
        throw FormatError(r.offset(), "trailing bytes after last tensor");
    }
    return c;
}

void write_file_atomic(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot open '" + tmp + "' for writing");
        f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!f) throw Error("write failed for '" + tmp + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw Error("rename failed for '" + path + "'");
    }
}

void write_container(const std::string& path, const Container& c) {
    auto bytes = encode_container(c);
    write_file_atomic(path, std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

Container read_container(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open '" + path + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    return decode_container(bytes);
}

}  // namespace ssmi
