#pragma once

#include <string>

#include "lpsr/steering.hpp"

namespace lpsr {

// Binary basis file:
//   magic "LPSB" | version u16 | dim u32 | count u32 | layer u16 | cfg_digest u64
// followed by count*dim little-endian f32 payload. All integers little-endian.
inline constexpr char kBasisMagic[4] = {'L', 'P', 'S', 'B'};
inline constexpr std::uint16_t kBasisVersion = 1;

/// Thrown on malformed basis files; the message names the offending byte
/// offset.
class BasisFormatError : public std::runtime_error {
public:
    BasisFormatError(const std::string& what, std::size_t offset);
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

void write_basis(const std::string& path, const SteeringBasis& basis);

/// Reads and validates a basis file: magic, version, payload size, finite
/// entries, and unit row norms (within 1e-6).
SteeringBasis read_basis(const std::string& path);

}  // namespace lpsr
