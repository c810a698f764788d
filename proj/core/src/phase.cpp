#include "agentreg/phase.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "agentreg/error.hpp"

namespace agentreg {

Tensor phase_spectrum(const ComplexTensor& spectrum) {
  Tensor phi(spectrum.re.dims());
  for (std::size_t i = 0; i < phi.size(); ++i) {
    phi[i] = std::atan2(spectrum.im[i], spectrum.re[i]);
  }
  return phi;
}

namespace {

constexpr double kUndefinedPhaseRelative = 1e-12;

// Averages each bin with the conjugate of its mirror: the spectrum of a real
// plane becomes conjugate-symmetric bit for bit.
ComplexTensor symmetrized(const ComplexTensor& f) {
  const std::size_t h = f.re.dim(0), w = f.re.dim(1);
  ComplexTensor out = f;
  for (std::size_t u = 0; u < h; ++u) {
    for (std::size_t v = 0; v < w; ++v) {
      const std::size_t mu = (h - u) % h, mv = (w - v) % w;
      out.re(u, v) = 0.5 * (f.re(u, v) + f.re(mu, mv));
      out.im(u, v) = 0.5 * (f.im(u, v) - f.im(mu, mv));
    }
  }
  return out;
}

}  // namespace

PhaseMap extract_phase_map(const Tensor& image) {
  if (image.rank() != 3) {
    fail(ErrorKind::kDimension, "extract_phase_map expects an H×W×C image");
  }
  const std::size_t h = image.dim(0), w = image.dim(1), channels = image.dim(2);
  if (h < 2 || w < 2) {
    fail(ErrorKind::kDimension, "extract_phase_map needs H, W >= 2");
  }
  PhaseMap out{Tensor({h, w, channels}), std::vector<double>(channels)};
  for (std::size_t c = 0; c < channels; ++c) {
    Tensor plane({h, w});
    bool all_zero = true;
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        plane(i, j) = image(i, j, c);
        all_zero = all_zero && plane(i, j) == 0.0;
      }
    }
    if (all_zero) {
      fail(ErrorKind::kDegenerateInput,
           "channel " + std::to_string(c) + " is all zero; its phase is undefined");
    }
    const ComplexTensor spectrum = symmetrized(dft2(plane));
    const Tensor phi = phase_spectrum(spectrum);
    double amplitude_sum = 0.0, amplitude_max = 0.0;
    for (std::size_t k = 0; k < spectrum.re.size(); ++k) {
      const double a = std::hypot(spectrum.re[k], spectrum.im[k]);
      amplitude_sum += a;
      amplitude_max = std::max(amplitude_max, a);
    }
    const double amplitude = amplitude_sum / static_cast<double>(spectrum.re.size());
    out.amplitude_constant[c] = amplitude;

    // Bins at rounding-noise magnitude carry no phase; they stay empty so a
    // single-frequency image reconstructs to that single frequency.
    const double defined = kUndefinedPhaseRelative * amplitude_max;
    ComplexTensor flat{Tensor({h, w}), Tensor({h, w})};
    for (std::size_t k = 0; k < phi.size(); ++k) {
      if (std::hypot(spectrum.re[k], spectrum.im[k]) <= defined) continue;
      flat.re[k] = amplitude * std::cos(phi[k]);
      flat.im[k] = amplitude * std::sin(phi[k]);
    }
    const ComplexTensor rebuilt = idft2(flat);
    // Imaginary residue, relative to max(1, c).
    const double scale = std::max(1.0, amplitude);
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        if (std::abs(rebuilt.im(i, j)) > kMaxImaginaryResidue * scale) {
          fail(ErrorKind::kNumerical, "phase reconstruction left an imaginary residue");
        }
        out.texture(i, j, c) = rebuilt.re(i, j);
      }
    }
  }
  return out;
}

Tensor area_downsample(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  if (x.rank() != 3) fail(ErrorKind::kDimension, "area_downsample expects H×W×C");
  if (out_h == 0 || out_w == 0) fail(ErrorKind::kDimension, "empty output grid");
  const std::size_t h = x.dim(0), w = x.dim(1), channels = x.dim(2);
  const double sy = static_cast<double>(h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(w) / static_cast<double>(out_w);
  Tensor out({out_h, out_w, channels});
  for (std::size_t oi = 0; oi < out_h; ++oi) {
    const double y0 = static_cast<double>(oi) * sy, y1 = y0 + sy;
    for (std::size_t oj = 0; oj < out_w; ++oj) {
      const double x0 = static_cast<double>(oj) * sx, x1 = x0 + sx;
      double total = 0.0;
      for (auto i = static_cast<std::size_t>(std::floor(y0));
           i < std::min<std::size_t>(h, static_cast<std::size_t>(std::ceil(y1))); ++i) {
        const double wy = std::min(y1, static_cast<double>(i + 1)) -
                          std::max(y0, static_cast<double>(i));
        if (wy <= 0.0) continue;
        for (auto j = static_cast<std::size_t>(std::floor(x0));
             j < std::min<std::size_t>(w, static_cast<std::size_t>(std::ceil(x1))); ++j) {
          const double wx = std::min(x1, static_cast<double>(j + 1)) -
                            std::max(x0, static_cast<double>(j));
          if (wx <= 0.0) continue;
          const double wt = wy * wx;
          total += wt;
          for (std::size_t c = 0; c < channels; ++c) out(oi, oj, c) += wt * x(i, j, c);
        }
      }
      for (std::size_t c = 0; c < channels; ++c) out(oi, oj, c) /= total;
    }
  }
  return out;
}

Tensor phase_adaptor_input(const PhaseMap& phase, std::size_t out_h,
                           std::size_t out_w) {
  return area_downsample(phase.texture, out_h, out_w);
}

Tensor fuse_phase_features(const Tensor& base_features, const PhaseMap& phase,
                           const ConvStackWeights& adaptor,
                           ConvStackCache* cache) {
  if (base_features.rank() != 3) {
    fail(ErrorKind::kDimension, "base features must be H'×W'×C");
  }
  if (adaptor.out_channels() != base_features.dim(2)) {
    fail(ErrorKind::kDimension, "adaptor produces " +
                                    std::to_string(adaptor.out_channels()) +
                                    " channels, base features have " +
                                    std::to_string(base_features.dim(2)));
  }
  if (adaptor.in_channels() != phase.texture.dim(2)) {
    fail(ErrorKind::kDimension, "adaptor input channels do not match the phase map");
  }
  const Tensor input = phase_adaptor_input(phase, base_features.dim(0), base_features.dim(1));
  return base_features + conv_stack_forward(input, adaptor, cache);
}

}  // namespace agentreg
