#pragma once

#include <functional>
#include <string>

#include "calib.hpp"
#include "patterns.hpp"
#include "phase.hpp"

namespace vfpp {

/// Returns the captured frame for a pattern id; throws when missing.
using FrameLookup = std::function<const GrayImage16&(const std::string& id)>;

/// Phase analysis of one fringe direction from its captured pattern set.
PhaseMaps analyze_direction(const FrameLookup& frames, const FringeSetSpec& fringe, bool complementary,
                            double mod_threshold);

struct PoseCorrespondences {
  GridDetection grid;
  std::vector<Vec2> projector;
};

/// Circle centers in the camera (from the white frame) and in the projector
/// (from both unwrapped phase maps) for one calibration pose.
PoseCorrespondences extract_pose_correspondences(const FrameLookup& frames, const FringeSetSpec& base,
                                                 bool complementary, const CalibBoardSpec& board,
                                                 double mod_threshold, int pose_index);

}  // namespace vfpp
