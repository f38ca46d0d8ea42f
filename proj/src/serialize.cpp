#include "mqt/serialize.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace mqt {

namespace {

constexpr char kMagic[4] = {'M', 'Q', 'T', '0'};

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (is.gcount() != 8) throw FormatError("container truncated while reading integer");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_f64_le(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64(os, bits);
}

void write_f32_le(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

double read_f64_le(std::istream& is) {
    const std::uint64_t bits = read_u64(is);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

float read_f32_le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (is.gcount() != 4) throw FormatError("container truncated while reading f32 payload");
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace

void write_container(std::ostream& os, const std::map<std::string, Tensor>& tensors, DType dtype) {
    os.write(kMagic, 4);
    for (const auto& [name, t] : tensors) {
        write_u64(os, name.size());
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u64(os, static_cast<std::uint64_t>(t.rank()));
        for (auto d : t.shape()) write_u64(os, static_cast<std::uint64_t>(d));
        const unsigned char tag = static_cast<unsigned char>(dtype);
        os.write(reinterpret_cast<const char*>(&tag), 1);
        for (double v : t.data()) {
            if (dtype == DType::F64)
                write_f64_le(os, v);
            else
                write_f32_le(os, static_cast<float>(v));
        }
    }
    if (!os) throw FormatError("container write failed");
}

std::map<std::string, Tensor> read_container(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("bad container magic, expected MQT0");
    std::map<std::string, Tensor> out;
    while (true) {
        is.peek();
        if (is.eof()) break;
        const std::uint64_t name_len = read_u64(is);
        if (name_len > (1u << 20)) throw FormatError("implausible tensor name length");
        std::string name(name_len, '\0');
        is.read(name.data(), static_cast<std::streamsize>(name_len));
        if (static_cast<std::uint64_t>(is.gcount()) != name_len)
            throw FormatError("container truncated in tensor name");
        const std::uint64_t rank = read_u64(is);
        if (rank > 16) throw FormatError("implausible tensor rank");
        Shape shape;
        std::uint64_t count = 1;
        for (std::uint64_t i = 0; i < rank; ++i) {
            const std::uint64_t d = read_u64(is);
            if (d == 0 || d > (1ull << 32)) throw FormatError("implausible dimension size");
            shape.push_back(static_cast<std::int64_t>(d));
            count *= d;
        }
        unsigned char tag;
        is.read(reinterpret_cast<char*>(&tag), 1);
        if (is.gcount() != 1) throw FormatError("container truncated before dtype tag");
        if (tag != 0 && tag != 1) throw FormatError("unknown dtype tag " + std::to_string(tag));
        std::vector<double> data(count);
        for (std::uint64_t i = 0; i < count; ++i)
            data[i] = (tag == 1) ? read_f64_le(is) : static_cast<double>(read_f32_le(is));
        out.emplace(std::move(name), Tensor::from_data(std::move(shape), std::move(data)));
    }
    return out;
}

void save_container(const std::string& path, const std::map<std::string, Tensor>& tensors,
                    DType dtype) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path + " for writing");
    write_container(os, tensors, dtype);
}

std::map<std::string, Tensor> load_container(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path);
    return read_container(is);
}

}  // namespace mqt
