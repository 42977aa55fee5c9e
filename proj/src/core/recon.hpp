#pragma once

#include "calib.hpp"
#include "geometry.hpp"
#include "phase.hpp"
#include "ply.hpp"

namespace vfpp {

/// Solves the 3x3 system built from both camera rows and the projector column
/// row. Throws SingularGeometry when |det A| < 1e-12 times the product of the
/// row norms.
Vec3 triangulate_point(const ProjectionMatrix& mc, const ProjectionMatrix& mp, double uc, double vc, double up);

struct ReconstructionStats {
  std::size_t valid_pixels = 0;
  std::size_t singular_skipped = 0;
  /// Pixels per log10(condition number) bucket, from [0,1) up to [9, inf).
  std::vector<std::size_t> condition_histogram;
};

/// Triangulates every masked pixel of a vertical-fringe phase map, then
/// multiplies coordinates by `scale`. Throws EmptyMask without valid pixels.
PointCloud reconstruct_cloud(const PhaseMaps& maps, const CalibrationResult& calib, double period_px,
                             double scale = 1.0, ReconstructionStats* stats = nullptr);

}  // namespace vfpp
