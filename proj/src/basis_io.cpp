#include "lpsr/basis_io.hpp"

#include <cstring>
#include <fstream>
#include <vector>

namespace lpsr {
namespace {

void put_bytes(std::string& out, const void* p, std::size_t n) {
    out.append(static_cast<const char*>(p), n);
}

template <typename T>
void put_le(std::string& out, T value) {
    unsigned char bytes[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i)
        bytes[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff);
    put_bytes(out, bytes, sizeof(T));
}

void put_f32(std::string& out, float value) {
    std::uint32_t bits;
    std::memcpy(&bits, &value, sizeof(bits));
    put_le(out, bits);
}

class Reader {
public:
    Reader(const std::string& buf) : buf_(buf) {}

    std::size_t offset() const { return off_; }

    template <typename T>
    T take_le(const char* field) {
        if (off_ + sizeof(T) > buf_.size())
            throw BasisFormatError(std::string("truncated ") + field, off_);
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[off_ + i])) << (8 * i);
        off_ += sizeof(T);
        return static_cast<T>(v);
    }

    float take_f32(const char* field) {
        const std::uint32_t bits = take_le<std::uint32_t>(field);
        float f;
        std::memcpy(&f, &bits, sizeof(f));
        return f;
    }

    void expect_magic() {
        if (off_ + 4 > buf_.size()) throw BasisFormatError("truncated magic", off_);
        if (std::memcmp(buf_.data() + off_, kBasisMagic, 4) != 0)
            throw BasisFormatError("bad magic", off_);
        off_ += 4;
    }

    bool exhausted() const { return off_ == buf_.size(); }

private:
    const std::string& buf_;
    std::size_t off_ = 0;
};

}  // namespace

BasisFormatError::BasisFormatError(const std::string& what, std::size_t offset)
    : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"),
      offset_(offset) {}

void write_basis(const std::string& path, const SteeringBasis& basis) {
    if (basis.count() < 1) throw std::invalid_argument("write_basis: empty basis");
    std::string out;
    out.reserve(24 + static_cast<std::size_t>(basis.count()) * basis.dim() * 4);
    put_bytes(out, kBasisMagic, 4);
    put_le<std::uint16_t>(out, kBasisVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(basis.dim()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(basis.count()));
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(basis.layer));
    put_le<std::uint64_t>(out, basis.cfg_digest);
    for (int r = 0; r < basis.count(); ++r)
        for (int c = 0; c < basis.dim(); ++c) put_f32(out, basis.vectors(r, c));

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("write_basis: cannot open " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("write_basis: write failed for " + path);
}

SteeringBasis read_basis(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_basis: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    Reader r(buf);
    r.expect_magic();
    const auto version = r.take_le<std::uint16_t>("version");
    if (version != kBasisVersion)
        throw BasisFormatError("unsupported version " + std::to_string(version), 4);
    const auto dim = r.take_le<std::uint32_t>("dim");
    const auto count = r.take_le<std::uint32_t>("count");
    const auto layer = r.take_le<std::uint16_t>("layer");
    const auto digest = r.take_le<std::uint64_t>("cfg_digest");
    if (dim == 0 || count == 0) throw BasisFormatError("empty geometry", 6);

    SteeringBasis basis;
    basis.layer = layer;
    basis.cfg_digest = digest;
    basis.vectors.resize(static_cast<int>(count), static_cast<int>(dim));
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::size_t row_off = r.offset();
        for (std::uint32_t j = 0; j < dim; ++j)
            basis.vectors(static_cast<int>(i), static_cast<int>(j)) = r.take_f32("payload");
        const double norm = basis.vectors.row(static_cast<int>(i)).cast<double>().norm();
        if (!basis.vectors.row(static_cast<int>(i)).allFinite())
            throw BasisFormatError("non-finite vector " + std::to_string(i), row_off);
        if (std::abs(norm - 1.0) > 1e-6)
            throw BasisFormatError("vector " + std::to_string(i) + " not unit norm", row_off);
    }
    if (!r.exhausted()) throw BasisFormatError("trailing bytes", r.offset());
    return basis;
}

}  // namespace lpsr
