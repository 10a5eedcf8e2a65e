#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "promptmr/container.hpp"
#include "promptmr/fourier.hpp"

namespace promptmr {

enum class CoilProfile { gaussian, uniform };

/// Description of one synthetic cardiac-like case.
struct PhantomSpec {
  std::size_t ky = 64;
  std::size_t kx = 64;
  std::size_t n_coils = 4;
  std::size_t n_frames = 12;
  FrameAxis frame_axis = FrameAxis::temporal;
  /// Peak excursion of the blood-pool radius, as a fraction of the FOV.
  double motion_amplitude = 0.06;
  /// Per-frame tissue intensity multipliers (contrast mode). Empty means a
  /// linear ramp 0.3 .. 1.0 over the frames.
  std::vector<double> contrast_schedule;
  /// Complex noise std relative to the peak noiseless k-space magnitude.
  double noise_std = 0.005;
  std::uint64_t seed = 0;
  CoilProfile coil_profile = CoilProfile::gaussian;

  void validate() const;
  double schedule_at(std::size_t frame) const;
  bool operator==(const PhantomSpec&) const = default;
};

struct CaseRecord {
  KSpaceVolume kspace;       ///< fully sampled, noisy
  RealArray target;          ///< [frame, ky, kx], RSS of the noiseless coil images
  CoilSensitivities sens_true;
  PhantomSpec spec;
};

/// Complex object image for an arbitrary (possibly out-of-range) frame index.
/// Temporal geometry is periodic in n_frames.
ComplexArray phantom_image(const PhantomSpec& spec, long frame);

/// Ground-truth coil maps for `spec` (RSS-normalised).
CoilSensitivities phantom_sensitivities(const PhantomSpec& spec);

CaseRecord simulate_case(const PhantomSpec& spec);

enum class Boundary { cyclic, replicate };

const char* to_string(Boundary b);
Boundary boundary_from_string(const std::string& s);
/// Cyclic for cine (periodic cardiac cycle), replicate for contrast series.
Boundary default_boundary(FrameAxis axis);

/// Frame indices center-a .. center+a after boundary handling.
std::vector<std::size_t> adjacent_indices(std::size_t n_frames, std::size_t center, int a, Boundary boundary);

/// [2a+1, coil, ky, kx] window around `center`.
ComplexArray build_adjacent_stack(const KSpaceVolume& k, std::size_t center, int a, Boundary boundary);

// Case container I/O (see container.hpp for the on-disk layout).
void write_case(const CaseRecord& rec, const std::filesystem::path& dir);
/// The container `write_case` would write; callers may add arrays before writing.
Container case_container(const CaseRecord& rec);
CaseRecord read_case(const std::filesystem::path& dir);

}  // namespace promptmr
