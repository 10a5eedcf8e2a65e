#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "promptmr/ndarray.hpp"

// Measurement model: centered orthonormal 2D FFTs, coil expand/reduce,
// Cartesian line masks, ACS extraction and root-sum-of-squares combination.
// All functions are pure; complex data stays complex at this boundary.

namespace promptmr {

enum class FrameAxis { temporal, contrast };

const char* to_string(FrameAxis a);
FrameAxis frame_axis_from_string(const std::string& s);

/// Multi-coil k-space, axes [frame, coil, ky, kx].
struct KSpaceVolume {
  ComplexArray data;
  FrameAxis axis_meaning = FrameAxis::temporal;

  std::size_t frames() const { return data.dim(0); }
  std::size_t coils() const { return data.dim(1); }
  std::size_t ky() const { return data.dim(2); }
  std::size_t kx() const { return data.dim(3); }
};

enum class MaskScheme { equispaced, random };

const char* to_string(MaskScheme s);
MaskScheme mask_scheme_from_string(const std::string& s);

/// Phase-encode line mask; broadcast over kx, coils and frames.
struct UndersampleMask {
  std::vector<std::uint8_t> keep;
  int acceleration = 1;
  int acs_lines = 0;

  std::size_t ky() const noexcept { return keep.size(); }
  /// First ACS line; the block is [acs_begin, acs_begin + acs_lines).
  std::size_t acs_begin() const noexcept { return (keep.size() - static_cast<std::size_t>(acs_lines)) / 2; }
  double sampled_fraction() const;
  bool operator==(const UndersampleMask&) const = default;
};

/// Per-coil complex maps [coil, ky, kx], normalised so that sum_i |S_i|^2 = 1
/// wherever any coil is nonzero.
struct CoilSensitivities {
  ComplexArray maps;
  std::size_t coils() const { return maps.dim(0); }
};

// ---- Fourier ----------------------------------------------------------------

/// Centered, orthonormal 2D DFT over the last two axes.
ComplexArray fft2c(const ComplexArray& image);
ComplexArray ifft2c(const ComplexArray& kspace);

namespace detail {
/// In-place centered orthonormal transform of `batch` contiguous ny x nx planes.
void fft2c_planes(cdouble* data, std::size_t batch, std::size_t ny, std::size_t nx, bool inverse);
}  // namespace detail

// ---- coil operators -----------------------------------------------------------

/// x [ky,kx] -> [coil,ky,kx], coil i = S_i * x.
ComplexArray expand(const ComplexArray& image, const CoilSensitivities& sens);
/// [coil,ky,kx] -> [ky,kx], sum_i conj(S_i) * x_i.
ComplexArray reduce(const ComplexArray& coil_images, const CoilSensitivities& sens);

/// Divide every coil by the pixelwise RSS; pixels where all coils vanish stay zero.
CoilSensitivities normalize_rss(ComplexArray maps);

/// sqrt(sum_coil |x|^2) over axis -3: [...,coil,ky,kx] -> [...,ky,kx].
RealArray rss(const ComplexArray& coil_images);

// ---- sampling -----------------------------------------------------------------

UndersampleMask make_mask(int ky, int acceleration, int acs_lines, MaskScheme scheme, std::uint64_t seed);

/// Zero every non-kept ky line of an array with trailing [ky,kx] axes.
ComplexArray apply_mask(const ComplexArray& k, const UndersampleMask& m);
KSpaceVolume apply_mask(const KSpaceVolume& k, const UndersampleMask& m);

/// Keep only the ACS block.
ComplexArray extract_acs(const ComplexArray& k, const UndersampleMask& m);
KSpaceVolume extract_acs(const KSpaceVolume& k, const UndersampleMask& m);

/// A = M F E : image [ky,kx] -> masked coil k-space [coil,ky,kx].
ComplexArray forward_A(const ComplexArray& image, const CoilSensitivities& sens, const UndersampleMask& m);
/// A^H = R F^-1 M.
ComplexArray adjoint_A(const ComplexArray& kspace, const CoilSensitivities& sens, const UndersampleMask& m);

/// <a, b> = sum conj(a) * b.
cdouble inner(std::span<const cdouble> a, std::span<const cdouble> b);
double norm2(std::span<const cdouble> a);

}  // namespace promptmr
