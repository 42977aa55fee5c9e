#pragma once

#include <optional>
#include <span>
#include <vector>

#include "image.hpp"

namespace vfpp {

/// Per-pixel phase analysis products. `order` holds the number of 2 pi cycles
/// added to the wrapped phase.
struct PhaseMaps {
  RasterF64 wrapped;    // (-pi, pi]
  RasterF64 avg;        // I'
  RasterF64 mod;        // I''
  std::vector<int> order;
  RasterF64 unwrapped;  // wrapped + 2 pi order where mask is set
  Mask8 mask;

  int width() const { return wrapped.width; }
  int height() const { return wrapped.height; }
};

struct WrappedPhase {
  RasterF64 wrapped;
  RasterF64 avg;
  RasterF64 mod;
};

/// N-step phase shifting with delta_n = 2 pi n / N, n = 1..N.
WrappedPhase compute_wrapped_phase(std::span<const GrayImage16> frames, int n_steps);
/// Same estimator on continuous intensities, one vector per frame.
WrappedPhase compute_wrapped_phase(std::span<const RasterF64> frames, int n_steps);

/// Gray-code decode result: `index` is floor(u / T) per pixel, `parity` the
/// binarized complementary frame (round(u / T) mod 2) when one was captured.
struct GrayDecode {
  int width = 0;
  int height = 0;
  std::vector<int> index;
  std::vector<std::uint8_t> parity;
  Mask8 valid;
};

/// Binarizes each Gray frame against (white + black) / 2 per pixel. Pixels
/// where white <= black are marked invalid.
GrayDecode decode_fringe_order(std::span<const GrayImage16> gray_frames, const GrayImage16& white,
                               const GrayImage16& black, const GrayImage16* complementary = nullptr);

/// Turns a Gray decode into the cycle count k of Phi = phi + 2 pi k, resolving
/// the one-period ambiguity next to code transitions from the wrapped phase
/// sign (and the complementary parity frame when present).
std::vector<int> resolve_fringe_order(const RasterF64& wrapped, const GrayDecode& decode);

/// Phi = phi + 2 pi k.
RasterF64 unwrap_phase(const RasterF64& wrapped, std::span<const int> order);

/// Clears mask where modulation < threshold.
PhaseMaps mask_by_modulation(PhaseMaps maps, double threshold);

/// Full chain: wrap, decode, resolve order, unwrap, and modulation mask.
/// The mask also drops pixels whose Gray decode was invalid.
PhaseMaps analyze_phase(std::span<const GrayImage16> fringes, int n_steps, std::span<const GrayImage16> gray_frames,
                        const GrayImage16& white, const GrayImage16& black, const GrayImage16* complementary,
                        double mod_threshold);

/// Bilinear sample of the unwrapped phase; nullopt if any contributing pixel
/// is masked or the point falls outside the image.
std::optional<double> sample_unwrapped(const PhaseMaps& maps, double u, double v);

}  // namespace vfpp
