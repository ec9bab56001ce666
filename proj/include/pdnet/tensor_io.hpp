#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "pdnet/tensor.hpp"

// PDT1 tensor encoding:
//   "PDT1" | u32 rank (=4) | u32 n | u32 c | u32 h | u32 w | u8 dtype | scalars
// All integers and scalars little-endian; dtype 0 = f32, 1 = f64.
namespace pdnet::io {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

template <typename Real>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::f32; }
template <>
constexpr DType dtype_of<double>() { return DType::f64; }

void write_u8(std::ostream& out, std::uint8_t v);
void write_u32(std::ostream& out, std::uint32_t v);
std::uint8_t read_u8(std::istream& in);
std::uint32_t read_u32(std::istream& in);
void write_bytes(std::ostream& out, const std::string& bytes);
std::string read_bytes(std::istream& in, std::size_t count);

template <typename Real>
void write_tensor(std::ostream& out, const Tensor<Real>& tensor);

/// Reads one PDT1 record, converting the stored dtype to Real.
template <typename Real>
Tensor<Real> read_tensor(std::istream& in);

template <typename Real>
void save_tensor(const std::filesystem::path& path, const Tensor<Real>& tensor);
template <typename Real>
Tensor<Real> load_tensor(const std::filesystem::path& path);

}  // namespace pdnet::io
