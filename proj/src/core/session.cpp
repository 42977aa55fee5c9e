#include "session.hpp"

namespace vfpp {

PhaseMaps analyze_direction(const FrameLookup& frames, const FringeSetSpec& fringe, bool complementary,
                            double mod_threshold) {
  fringe.validate();
  const FringeDirection d = fringe.direction;
  std::vector<GrayImage16> fr;
  for (int n = 1; n <= fringe.n_steps; ++n) fr.push_back(frames(fringe_pattern_id(d, fringe.period_px, n)));
  GraySetSpec g;
  g.period_px = fringe.period_px;
  g.direction = d;
  g.proj_width = fringe.proj_width;
  g.proj_height = fringe.proj_height;
  std::vector<GrayImage16> bits;
  for (int b = 0; b < g.n_bits(); ++b) bits.push_back(frames(gray_pattern_id(d, b)));
  const std::string dn = direction_name(d);
  const GrayImage16* comp = complementary ? &frames("gray_" + dn + "_comp") : nullptr;
  return analyze_phase(fr, fringe.n_steps, bits, frames("white_" + dn), frames("black_" + dn), comp, mod_threshold);
}

PoseCorrespondences extract_pose_correspondences(const FrameLookup& frames, const FringeSetSpec& base,
                                                 bool complementary, const CalibBoardSpec& board,
                                                 double mod_threshold, int pose_index) {
  PoseCorrespondences pc;
  pc.grid = detect_circle_grid(frames("white_vertical"), board, pose_index);
  FringeSetSpec v = base, h = base;
  v.direction = FringeDirection::Vertical;
  h.direction = FringeDirection::Horizontal;
  const PhaseMaps pv = analyze_direction(frames, v, complementary, mod_threshold);
  const PhaseMaps ph = analyze_direction(frames, h, complementary, mod_threshold);
  pc.projector = map_centers_to_projector(pc.grid, pv, ph, base.period_px);
  return pc;
}

}  // namespace vfpp
