#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "geometry.hpp"
#include "image.hpp"

namespace vfpp {

/// Vertical fringes vary along projector columns (encode u_p); horizontal
/// fringes vary along rows (encode v_p).
enum class FringeDirection { Vertical, Horizontal };

const char* direction_name(FringeDirection d);
FringeDirection parse_direction(const std::string& s);

struct FringeSetSpec {
  int n_steps = 18;
  int period_px = 38;
  FringeDirection direction = FringeDirection::Vertical;
  int proj_width = 912;
  int proj_height = 1140;
  std::uint16_t min_level = 0;
  std::uint16_t max_level = 65535;

  int swept_dim() const { return direction == FringeDirection::Vertical ? proj_width : proj_height; }
  int period_count() const { return swept_dim() / period_px; }
  void validate() const;
};

struct GraySetSpec {
  int period_px = 38;
  FringeDirection direction = FringeDirection::Vertical;
  int proj_width = 912;
  int proj_height = 1140;
  std::uint16_t min_level = 0;
  std::uint16_t max_level = 65535;
  /// Adds one frame holding the parity of round(u / T), used to correct order
  /// decoding next to period boundaries.
  bool complementary = true;

  int swept_dim() const { return direction == FringeDirection::Vertical ? proj_width : proj_height; }
  int period_count() const { return swept_dim() / period_px; }
  /// ceil(log2(period_count)), at least 1.
  int n_bits() const;
  void validate() const;
};

struct GrayPatternSet {
  std::vector<GrayImage16> bits;  // most significant bit first
  std::optional<GrayImage16> complementary;
  GrayImage16 white;
  GrayImage16 black;
};

std::uint32_t gray_encode(std::uint32_t index);
std::uint32_t gray_decode(std::uint32_t code);

/// Pattern n = 1..N holds round(I' + I'' cos(2 pi u / T + 2 pi n / N)) along the
/// swept axis.
std::vector<GrayImage16> gen_fringe_patterns(const FringeSetSpec& spec);
GrayPatternSet gen_gray_code_patterns(const GraySetSpec& spec);

struct CalibBoardSpec {
  int rows = 5;
  int cols = 9;
  double d_circle_mm = 10.0;
  double d_centers_mm = 30.0;
  double border_mm = 10.0;
  double plane_w_m = 0.15;
  double plane_h_m = 0.15;
  double px_per_mm = 10.0;
  /// Albedo written for circles relative to the white background (0 = black ink).
  double circle_level = 0.1;

  void validate() const;
};

/// Metric quantities of a generated board, in meters as the formulas state.
struct BoardReport {
  double w_pattern_m = 0;
  double h_pattern_m = 0;
  double scale = 0;
  double d_circle_sim_m = 0;
  double d_centers_sim_m = 0;
  /// Plane-local position (mm, origin at the plane's top-left corner, +y down)
  /// of the first circle center.
  double first_center_x_mm = 0;
  double first_center_y_mm = 0;
  int texture_width = 0;
  int texture_height = 0;
};

constexpr double kMillimetersToMeters = 0.001;

BoardReport board_report(const CalibBoardSpec& spec);

struct CalibBoard {
  GrayImage16 texture;
  BoardReport report;
};

/// `allow_scaling == false` fails with PatternExceedsPlane if the pattern has
/// to shrink to fit the plane.
CalibBoard gen_calibration_board(const CalibBoardSpec& spec, bool allow_scaling = true);

/// Circle centers in the board frame (mm, z = 0), row-major, origin at the
/// first center, +x along a row, +y down the rows.
std::vector<Vec3> board_object_points(const CalibBoardSpec& spec);

/// Plane-local (mm) position of board-frame point `p`.
Vec2 board_to_plane_mm(const BoardReport& report, const Vec3& p);

/// One projected frame with its canonical file stem.
struct PatternEntry {
  std::string id;
  GrayImage16 image;
};

/// Per-direction capture sequence: N fringes, Gray bits, the complementary
/// frame, then white and black. Ids follow fringe_{dir}_{T}px_{n:02},
/// gray_{dir}_{b:02}, gray_{dir}_comp, white_{dir}, black_{dir}.
std::vector<PatternEntry> direction_pattern_set(const FringeSetSpec& fringe, bool complementary = true);

/// Vertical then horizontal sets sharing period and levels.
std::vector<PatternEntry> standard_pattern_set(const FringeSetSpec& base, bool complementary = true);

std::string fringe_pattern_id(FringeDirection d, int period_px, int n);
std::string gray_pattern_id(FringeDirection d, int bit);

}  // namespace vfpp
