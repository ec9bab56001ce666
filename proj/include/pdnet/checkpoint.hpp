#pragma once

#include <filesystem>
#include <iosfwd>

#include "pdnet/model.hpp"

namespace pdnet {

// Checkpoint layout, little-endian:
//   "PDNC" | u32 version (=1) | u32 n + n bytes key=value config
//   | u32 record count | per record: u32 n + n bytes name, PDT1 tensor, u8 frozen
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename Real>
void write_checkpoint(std::ostream& out, const PDNetParams<Real>& params);

/// Rebuilds the architecture from the embedded config and fills every tensor.
/// The whole file is validated before anything is returned.
template <typename Real>
PDNetParams<Real> read_checkpoint(std::istream& in);

template <typename Real>
void save_checkpoint(const PDNetParams<Real>& params, const std::filesystem::path& path);

template <typename Real>
PDNetParams<Real> load_checkpoint(const std::filesystem::path& path);

/// Copies the master-encoder tensors of `prior` into `target` by name. The
/// target decoder, heads and subnet keep their current values. Shapes must
/// agree.
template <typename Real>
void transfer_prior(const PDNetParams<Real>& prior, PDNetParams<Real>& target);

}  // namespace pdnet
