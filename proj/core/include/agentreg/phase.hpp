#pragma once

#include <vector>

#include "agentreg/numerics.hpp"

namespace agentreg {

/// Phase texture of an image: every channel is rebuilt from its Fourier phase
/// with the amplitude spectrum flattened to that channel's mean amplitude.
struct PhaseMap {
  Tensor texture;                          // H×W×channels
  std::vector<double> amplitude_constant;  // one per channel
};

/// Elementwise atan2(Im, Re) of a spectrum.
Tensor phase_spectrum(const ComplexTensor& spectrum);

/// Imaginary residue above this magnitude means the spectrum lost its
/// conjugate symmetry somewhere, and is reported as a numerical failure.
inline constexpr double kMaxImaginaryResidue = 1e-9;

PhaseMap extract_phase_map(const Tensor& image);

/// Area-weighted resampling of an H×W×C tensor onto an out_h×out_w grid.
Tensor area_downsample(const Tensor& x, std::size_t out_h, std::size_t out_w);

/// The adaptor input for a feature grid of size out_h×out_w.
Tensor phase_adaptor_input(const PhaseMap& phase, std::size_t out_h,
                           std::size_t out_w);

/// base + adaptor(downsampled phase texture). base is H'×W'×C.
Tensor fuse_phase_features(const Tensor& base_features, const PhaseMap& phase,
                           const ConvStackWeights& adaptor,
                           ConvStackCache* cache = nullptr);

}  // namespace agentreg
