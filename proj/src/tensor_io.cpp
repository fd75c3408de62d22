#include "voxalign/tensor_io.hpp"

#include <zlib.h>

#include <array>
#include <bit>
#include <fstream>
#include <limits>
#include <string>

#include "voxalign/error.hpp"

namespace voxalign {
namespace {

constexpr std::array<char, 4> kMagic{'X', 'M', 'D', 'T'};
// Refuse headers that would describe more than 2^36 elements (512 GiB).
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 36;

template <typename T>
void put_le(std::vector<unsigned char>& buf, T value) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    const U bits = std::bit_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(U); ++i) buf.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

template <typename U>
U get_le(const unsigned char* p) {
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
    return v;
}

void read_exact(std::istream& in, unsigned char* dst, std::size_t n, const char* what) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
        throw Error(ErrorCode::FormatError, std::string("truncated tensor container while reading ") + what);
    }
}

}  // namespace

std::uint64_t Tensor::element_count() const {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return dims.empty() ? 0 : n;
}

std::uint32_t crc32(std::span<const unsigned char> bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks.
    std::size_t offset = 0;
    while (offset < bytes.size()) {
        const std::size_t chunk = std::min<std::size_t>(bytes.size() - offset, 1u << 30);
        crc = ::crc32(crc, bytes.data() + offset, static_cast<uInt>(chunk));
        offset += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

void write_tensor(std::ostream& out, std::span<const std::uint64_t> dims, std::span<const double> data) {
    if (dims.empty()) throw Error(ErrorCode::FormatError, "tensor rank must be at least 1");
    if (dims.size() > std::numeric_limits<std::uint8_t>::max()) {
        throw Error(ErrorCode::FormatError, "tensor rank exceeds 255");
    }
    std::uint64_t product = 1;
    for (auto d : dims) product *= d;
    if (product != data.size()) {
        throw Error(ErrorCode::FormatError, "dims product " + std::to_string(product) + " != data length " +
                                                std::to_string(data.size()));
    }

    std::vector<unsigned char> header;
    header.insert(header.end(), kMagic.begin(), kMagic.end());
    put_le(header, kTensorVersion);
    put_le(header, kDtypeFloat64);
    put_le(header, static_cast<std::uint8_t>(dims.size()));
    for (auto d : dims) put_le(header, d);

    std::vector<unsigned char> payload;
    payload.reserve(data.size() * 8);
    for (double x : data) put_le(payload, x);

    std::vector<unsigned char> trailer;
    put_le(trailer, crc32(payload));

    out.write(reinterpret_cast<const char*>(header.data()), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    out.write(reinterpret_cast<const char*>(trailer.data()), static_cast<std::streamsize>(trailer.size()));
    if (!out) throw Error(ErrorCode::IoError, "failed writing tensor container");
}

Tensor read_tensor(std::istream& in) {
    std::array<unsigned char, 10> fixed{};
    read_exact(in, fixed.data(), fixed.size(), "header");
    if (!std::equal(kMagic.begin(), kMagic.end(), fixed.begin(),
                    [](char a, unsigned char b) { return static_cast<unsigned char>(a) == b; })) {
        throw Error(ErrorCode::FormatError, "bad magic, not a tensor container");
    }
    const auto version = get_le<std::uint32_t>(fixed.data() + 4);
    if (version != kTensorVersion) {
        throw Error(ErrorCode::FormatError, "unsupported container version " + std::to_string(version));
    }
    if (fixed[8] != kDtypeFloat64) {
        throw Error(ErrorCode::FormatError, "unsupported dtype code " + std::to_string(fixed[8]));
    }
    const std::size_t rank = fixed[9];
    if (rank == 0) throw Error(ErrorCode::FormatError, "rank-0 tensor");

    Tensor t;
    t.dims.resize(rank);
    std::vector<unsigned char> dim_bytes(rank * 8);
    read_exact(in, dim_bytes.data(), dim_bytes.size(), "dims");
    std::uint64_t count = 1;
    for (std::size_t i = 0; i < rank; ++i) {
        t.dims[i] = get_le<std::uint64_t>(dim_bytes.data() + 8 * i);
        if (t.dims[i] != 0 && count > kMaxElements / t.dims[i]) {
            throw Error(ErrorCode::FormatError, "tensor dims describe an implausibly large payload");
        }
        count *= t.dims[i];
    }

    std::vector<unsigned char> payload(count * 8);
    read_exact(in, payload.data(), payload.size(), "payload");
    std::array<unsigned char, 4> trailer{};
    read_exact(in, trailer.data(), trailer.size(), "checksum");
    const auto stored = get_le<std::uint32_t>(trailer.data());
    if (stored != crc32(payload)) throw Error(ErrorCode::ChecksumMismatch, "payload CRC-32 does not match");

    t.data.resize(count);
    for (std::size_t i = 0; i < count; ++i) t.data[i] = std::bit_cast<double>(get_le<std::uint64_t>(&payload[8 * i]));
    return t;
}

void write_tensor(const std::filesystem::path& path, std::span<const std::uint64_t> dims,
                  std::span<const double> data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open for writing: " + path.string());
    write_tensor(out, dims, data);
    out.close();
    if (!out) throw Error(ErrorCode::IoError, "failed closing " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open for reading: " + path.string());
    Tensor t = read_tensor(in);
    if (in.peek() != std::char_traits<char>::eof()) {
        throw Error(ErrorCode::FormatError, "trailing bytes after tensor container in " + path.string());
    }
    return t;
}

void write_tensor_bundle(const std::filesystem::path& path, std::span<const Tensor> tensors) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open for writing: " + path.string());
    for (const auto& t : tensors) write_tensor(out, t.dims, t.data);
    out.close();
    if (!out) throw Error(ErrorCode::IoError, "failed closing " + path.string());
}

std::vector<Tensor> read_tensor_bundle(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open for reading: " + path.string());
    std::vector<Tensor> tensors;
    while (in.peek() != std::char_traits<char>::eof()) tensors.push_back(read_tensor(in));
    if (tensors.empty()) throw Error(ErrorCode::FormatError, "empty tensor bundle: " + path.string());
    return tensors;
}

}  // namespace voxalign
