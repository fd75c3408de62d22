#pragma once

// Binary tensor container (all integers little-endian):
//
//   offset  size      field
//   0       4         magic "XMDT"
//   4       4  u32    version (1)
//   8       1  u8     dtype (0 = float64)
//   9       1  u8     rank (>= 1)
//   10      8*rank    dims, u64 each
//   ...     8*prod    payload, IEEE-754 binary64 little-endian
//   ...     4  u32    CRC-32 (IEEE, zlib polynomial) of the payload bytes
//
// Several containers may be concatenated in one file (a "bundle").

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace voxalign {

inline constexpr std::uint32_t kTensorVersion = 1;
inline constexpr std::uint8_t kDtypeFloat64 = 0;

struct Tensor {
    std::vector<std::uint64_t> dims;
    std::vector<double> data;

    std::uint64_t element_count() const;
    bool operator==(const Tensor&) const = default;
};

std::uint32_t crc32(std::span<const unsigned char> bytes);

/// Throws FormatError if dims is empty or its product differs from data.size().
void write_tensor(std::ostream& out, std::span<const std::uint64_t> dims, std::span<const double> data);
/// Throws FormatError on a malformed or truncated container, ChecksumMismatch on a bad CRC.
Tensor read_tensor(std::istream& in);

/// File variants additionally throw IoError when the file cannot be opened or written.
void write_tensor(const std::filesystem::path& path, std::span<const std::uint64_t> dims,
                  std::span<const double> data);
Tensor read_tensor(const std::filesystem::path& path);

void write_tensor_bundle(const std::filesystem::path& path, std::span<const Tensor> tensors);
/// Reads containers until end of file. An empty file is a FormatError.
std::vector<Tensor> read_tensor_bundle(const std::filesystem::path& path);

}  // namespace voxalign
