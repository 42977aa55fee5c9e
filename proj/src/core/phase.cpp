#include "phase.hpp"

#include <cmath>
#include <numbers>

#include "error.hpp"
#include "parallel.hpp"
#include "patterns.hpp"

namespace vfpp {
namespace {

constexpr double kPi = std::numbers::pi;

template <typename Frame>
WrappedPhase wrap_impl(std::span<const Frame> frames, int n_steps) {
  if (n_steps < 3) throw Error(ErrorCode::InvalidArgument, "n_steps must be >= 3");
  if (static_cast<int>(frames.size()) != n_steps)
    throw Error(ErrorCode::FrameCountMismatch,
                "expected " + std::to_string(n_steps) + " frames, got " + std::to_string(frames.size()));
  const int w = frames[0].width;
  const int h = frames[0].height;
  for (const auto& f : frames)
    if (f.width != w || f.height != h) throw Error(ErrorCode::DimensionMismatch, "fringe frames differ in size");

  std::vector<double> sin_d(n_steps), cos_d(n_steps);
  for (int n = 1; n <= n_steps; ++n) {
    sin_d[n - 1] = std::sin(2.0 * kPi * n / n_steps);
    cos_d[n - 1] = std::cos(2.0 * kPi * n / n_steps);
  }
  WrappedPhase out{RasterF64(w, h), RasterF64(w, h), RasterF64(w, h)};
  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      double sum = 0.0;
      for (int n = 0; n < n_steps; ++n) sum += static_cast<double>(frames[n].data[i]);
      // Removing the mean first makes constant stacks give exactly zero modulation.
      const double mean = sum / n_steps;
      double s = 0.0, c = 0.0;
      for (int n = 0; n < n_steps; ++n) {
        const double v = static_cast<double>(frames[n].data[i]) - mean;
        s += v * sin_d[n];
        c += v * cos_d[n];
      }
      double phi = -std::atan2(s, c);
      if (phi <= -kPi) phi += 2.0 * kPi;
      out.wrapped.data[i] = phi;
      out.avg.data[i] = sum / n_steps;
      out.mod.data[i] = 2.0 / n_steps * std::sqrt(s * s + c * c);
    }
  });
  return out;
}

}  // namespace

WrappedPhase compute_wrapped_phase(std::span<const GrayImage16> frames, int n_steps) {
  if (frames.empty()) throw Error(ErrorCode::FrameCountMismatch, "no frames");
  return wrap_impl(frames, n_steps);
}

WrappedPhase compute_wrapped_phase(std::span<const RasterF64> frames, int n_steps) {
  if (frames.empty()) throw Error(ErrorCode::FrameCountMismatch, "no frames");
  return wrap_impl(frames, n_steps);
}

GrayDecode decode_fringe_order(std::span<const GrayImage16> gray_frames, const GrayImage16& white,
                               const GrayImage16& black, const GrayImage16* complementary) {
  if (!white.same_dims(black)) throw Error(ErrorCode::DimensionMismatch, "white/black frames differ in size");
  for (const auto& f : gray_frames)
    if (!f.same_dims(white)) throw Error(ErrorCode::DimensionMismatch, "Gray frame differs in size");
  if (complementary && !complementary->same_dims(white))
    throw Error(ErrorCode::DimensionMismatch, "complementary frame differs in size");

  GrayDecode d;
  d.width = white.width;
  d.height = white.height;
  const std::size_t n = white.size();
  d.index.assign(n, 0);
  d.valid = Mask8(d.width, d.height, 255);
  if (complementary) d.parity.assign(n, 0);
  parallel_for(0, d.height, [&](int y) {
    for (int x = 0; x < d.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * d.width + x;
      const double hi = white.data[i];
      const double lo = black.data[i];
      if (hi <= lo) {
        d.valid.data[i] = 0;
        continue;
      }
      const double thr = 0.5 * (hi + lo);
      std::uint32_t code = 0;
      for (const auto& f : gray_frames) code = (code << 1) | (f.data[i] > thr ? 1U : 0U);
      d.index[i] = static_cast<int>(gray_decode(code));
      if (complementary) d.parity[i] = complementary->data[i] > thr ? 1 : 0;
    }
  });
  return d;
}

std::vector<int> resolve_fringe_order(const RasterF64& wrapped, const GrayDecode& decode) {
  if (wrapped.width != decode.width || wrapped.height != decode.height)
    throw Error(ErrorCode::DimensionMismatch, "wrapped phase and Gray decode differ in size");
  const bool have_parity = !decode.parity.empty();
  std::vector<int> k(decode.index.size());
  for (std::size_t i = 0; i < k.size(); ++i) {
    const int g = decode.index[i];
    const double phi = wrapped.data[i];
    // The wrapped phase jumps at mid-period while Gray transitions sit at
    // phase zero, so pixels in the second half of a Gray period belong to
    // the next phase cycle.
    if (!have_parity || std::abs(phi) >= kPi / 2.0) {
      k[i] = g + (phi < 0.0 ? 1 : 0);
    } else {
      // Near a Gray transition g may be one low; the parity frame picks
      // between g and g + 1.
      k[i] = ((g & 1) == decode.parity[i]) ? g : g + 1;
    }
  }
  return k;
}

RasterF64 unwrap_phase(const RasterF64& wrapped, std::span<const int> order) {
  if (order.size() != wrapped.data.size())
    throw Error(ErrorCode::DimensionMismatch, "order map and wrapped phase differ in size");
  RasterF64 out(wrapped.width, wrapped.height);
  for (std::size_t i = 0; i < order.size(); ++i) out.data[i] = wrapped.data[i] + 2.0 * kPi * order[i];
  return out;
}

PhaseMaps mask_by_modulation(PhaseMaps maps, double threshold) {
  if (!(threshold >= 0.0)) throw Error(ErrorCode::InvalidArgument, "modulation threshold must be >= 0");
  if (maps.mask.data.size() != maps.mod.data.size()) maps.mask = Mask8(maps.mod.width, maps.mod.height, 255);
  for (std::size_t i = 0; i < maps.mod.data.size(); ++i)
    if (maps.mod.data[i] < threshold) maps.mask.data[i] = 0;
  return maps;
}

PhaseMaps analyze_phase(std::span<const GrayImage16> fringes, int n_steps, std::span<const GrayImage16> gray_frames,
                        const GrayImage16& white, const GrayImage16& black, const GrayImage16* complementary,
                        double mod_threshold) {
  auto w = compute_wrapped_phase(fringes, n_steps);
  if (w.wrapped.width != white.width || w.wrapped.height != white.height)
    throw Error(ErrorCode::DimensionMismatch, "fringe and Gray frames differ in size");
  auto decode = decode_fringe_order(gray_frames, white, black, complementary);
  PhaseMaps maps;
  maps.order = resolve_fringe_order(w.wrapped, decode);
  maps.unwrapped = unwrap_phase(w.wrapped, maps.order);
  maps.wrapped = std::move(w.wrapped);
  maps.avg = std::move(w.avg);
  maps.mod = std::move(w.mod);
  maps.mask = decode.valid;
  // Zero modulation has no defined phase regardless of threshold.
  for (std::size_t i = 0; i < maps.mod.data.size(); ++i)
    if (maps.mod.data[i] <= 0.0) maps.mask.data[i] = 0;
  return mask_by_modulation(std::move(maps), mod_threshold);
}

std::optional<double> sample_unwrapped(const PhaseMaps& maps, double u, double v) {
  const int w = maps.width();
  const int h = maps.height();
  const int x0 = static_cast<int>(std::floor(u));
  const int y0 = static_cast<int>(std::floor(v));
  if (x0 < 0 || y0 < 0 || x0 + 1 >= w || y0 + 1 >= h) return std::nullopt;
  const double ax = u - x0;
  const double ay = v - y0;
  double acc = 0.0;
  for (int dy = 0; dy <= 1; ++dy) {
    for (int dx = 0; dx <= 1; ++dx) {
      const double wgt = (dx ? ax : 1.0 - ax) * (dy ? ay : 1.0 - ay);
      if (!maps.mask.at(x0 + dx, y0 + dy)) {
        if (wgt > 0.0) return std::nullopt;
        continue;
      }
      acc += wgt * maps.unwrapped.at(x0 + dx, y0 + dy);
    }
  }
  return acc;
}

}  // namespace vfpp
