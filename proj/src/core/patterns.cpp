#include "patterns.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "error.hpp"

namespace vfpp {

const char* direction_name(FringeDirection d) {
  return d == FringeDirection::Vertical ? "vertical" : "horizontal";
}

FringeDirection parse_direction(const std::string& s) {
  if (s == "vertical" || s == "v") return FringeDirection::Vertical;
  if (s == "horizontal" || s == "h") return FringeDirection::Horizontal;
  throw Error(ErrorCode::InvalidArgument, "unknown fringe direction: " + s);
}

namespace {

void check_sweep(int swept, int period, std::uint16_t lo, std::uint16_t hi) {
  if (period < 4) throw Error(ErrorCode::InvalidArgument, "fringe period must be >= 4 px");
  if (swept <= 0) throw Error(ErrorCode::InvalidArgument, "projector dimensions must be positive");
  if (swept % period != 0)
    throw Error(ErrorCode::InvalidArgument,
                "period " + std::to_string(period) + " does not divide swept dimension " + std::to_string(swept));
  if (hi <= lo) throw Error(ErrorCode::InvalidArgument, "max_level must exceed min_level");
}

// Fills an image whose value depends only on the swept coordinate.
GrayImage16 sweep_image(int w, int h, FringeDirection dir, const std::vector<std::uint16_t>& profile) {
  GrayImage16 img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(x, y) = profile[dir == FringeDirection::Vertical ? x : y];
  return img;
}

}  // namespace

void FringeSetSpec::validate() const {
  if (n_steps < 3) throw Error(ErrorCode::InvalidArgument, "n_steps must be >= 3");
  if (proj_width <= 0 || proj_height <= 0) throw Error(ErrorCode::InvalidArgument, "bad projector size");
  check_sweep(swept_dim(), period_px, min_level, max_level);
}

int GraySetSpec::n_bits() const {
  int bits = 0;
  while ((1 << bits) < period_count()) ++bits;
  return std::max(bits, 1);
}

void GraySetSpec::validate() const {
  if (proj_width <= 0 || proj_height <= 0) throw Error(ErrorCode::InvalidArgument, "bad projector size");
  check_sweep(swept_dim(), period_px, min_level, max_level);
}

std::uint32_t gray_encode(std::uint32_t index) { return index ^ (index >> 1); }

std::uint32_t gray_decode(std::uint32_t code) {
  std::uint32_t v = code;
  for (std::uint32_t shift = 1; shift < 32; shift <<= 1) v ^= v >> shift;
  return v;
}

std::vector<GrayImage16> gen_fringe_patterns(const FringeSetSpec& spec) {
  spec.validate();
  const double mid = (static_cast<double>(spec.max_level) + spec.min_level) / 2.0;
  const double amp = (static_cast<double>(spec.max_level) - spec.min_level) / 2.0;
  const int swept = spec.swept_dim();
  std::vector<GrayImage16> out;
  out.reserve(spec.n_steps);
  for (int n = 1; n <= spec.n_steps; ++n) {
    const double delta = 2.0 * std::numbers::pi * n / spec.n_steps;
    std::vector<std::uint16_t> profile(swept);
    for (int u = 0; u < swept; ++u) {
      const double phase = 2.0 * std::numbers::pi * u / spec.period_px + delta;
      const double v = std::round(mid + amp * std::cos(phase));
      profile[u] = static_cast<std::uint16_t>(std::clamp(v, double(spec.min_level), double(spec.max_level)));
    }
    out.push_back(sweep_image(spec.proj_width, spec.proj_height, spec.direction, profile));
  }
  return out;
}

GrayPatternSet gen_gray_code_patterns(const GraySetSpec& spec) {
  spec.validate();
  const int swept = spec.swept_dim();
  const int bits = spec.n_bits();
  GrayPatternSet set;
  for (int b = bits - 1; b >= 0; --b) {
    std::vector<std::uint16_t> profile(swept);
    for (int u = 0; u < swept; ++u) {
      const auto code = gray_encode(static_cast<std::uint32_t>(u / spec.period_px));
      profile[u] = ((code >> b) & 1U) ? spec.max_level : spec.min_level;
    }
    set.bits.push_back(sweep_image(spec.proj_width, spec.proj_height, spec.direction, profile));
  }
  if (spec.complementary) {
    // Parity of round(u / T): transitions sit at half periods, where the main
    // code is unambiguous.
    std::vector<std::uint16_t> profile(swept);
    for (int u = 0; u < swept; ++u) {
      const int order = (2 * u + spec.period_px) / (2 * spec.period_px);
      profile[u] = (order & 1) ? spec.max_level : spec.min_level;
    }
    set.complementary = sweep_image(spec.proj_width, spec.proj_height, spec.direction, profile);
  }
  set.white = GrayImage16(spec.proj_width, spec.proj_height, spec.max_level);
  set.black = GrayImage16(spec.proj_width, spec.proj_height, spec.min_level);
  return set;
}

void CalibBoardSpec::validate() const {
  if (rows < 3 || cols < 3) throw Error(ErrorCode::InvalidArgument, "board needs at least 3 rows and 3 cols");
  if (cols % 2 == 0) throw Error(ErrorCode::InvalidArgument, "board column count must be odd");
  if (!(d_circle_mm > 0 && d_centers_mm > d_circle_mm))
    throw Error(ErrorCode::InvalidArgument, "need 0 < d_circle < d_centers");
  if (border_mm < 0 || plane_w_m <= 0 || plane_h_m <= 0 || px_per_mm <= 0)
    throw Error(ErrorCode::InvalidArgument, "board plane and border must be positive");
  if (circle_level < 0 || circle_level > 1) throw Error(ErrorCode::InvalidArgument, "circle_level outside [0,1]");
}

BoardReport board_report(const CalibBoardSpec& spec) {
  spec.validate();
  BoardReport r;
  r.w_pattern_m = (2.0 * spec.border_mm + (spec.cols - 1) * spec.d_centers_mm / 2.0 + spec.d_circle_mm) *
                  kMillimetersToMeters;
  r.h_pattern_m =
      (2.0 * spec.border_mm + (spec.rows - 1) * spec.d_centers_mm + spec.d_circle_mm) * kMillimetersToMeters;
  r.scale = std::min(spec.plane_w_m / r.w_pattern_m, spec.plane_h_m / r.h_pattern_m);
  r.d_circle_sim_m = spec.d_circle_mm * kMillimetersToMeters * r.scale;
  r.d_centers_sim_m = spec.d_centers_mm * kMillimetersToMeters * r.scale;

  const double plane_w_mm = spec.plane_w_m * 1000.0;
  const double plane_h_mm = spec.plane_h_m * 1000.0;
  const double off_x = (plane_w_mm - r.w_pattern_m * 1000.0 * r.scale) / 2.0;
  const double off_y = (plane_h_mm - r.h_pattern_m * 1000.0 * r.scale) / 2.0;
  r.first_center_x_mm = off_x + r.scale * (spec.border_mm + spec.d_circle_mm / 2.0);
  r.first_center_y_mm = off_y + r.scale * (spec.border_mm + spec.d_circle_mm / 2.0);
  r.texture_width = std::max(1, static_cast<int>(std::lround(plane_w_mm * spec.px_per_mm)));
  r.texture_height = std::max(1, static_cast<int>(std::lround(plane_h_mm * spec.px_per_mm)));
  return r;
}

std::vector<Vec3> board_object_points(const CalibBoardSpec& spec) {
  const auto r = board_report(spec);
  const double pitch = r.d_centers_sim_m * 1000.0;
  std::vector<Vec3> pts;
  pts.reserve(static_cast<std::size_t>(spec.rows) * spec.cols);
  for (int i = 0; i < spec.rows; ++i)
    for (int j = 0; j < spec.cols; ++j) pts.emplace_back(j * pitch / 2.0, i * pitch, 0.0);
  return pts;
}

Vec2 board_to_plane_mm(const BoardReport& report, const Vec3& p) {
  return {report.first_center_x_mm + p.x(), report.first_center_y_mm + p.y()};
}

CalibBoard gen_calibration_board(const CalibBoardSpec& spec, bool allow_scaling) {
  CalibBoard board;
  board.report = board_report(spec);
  const auto& r = board.report;
  if (!allow_scaling && r.scale < 1.0)
    throw Error(ErrorCode::PatternExceedsPlane, "pattern needs scale " + std::to_string(r.scale) + " to fit plane");

  const double plane_w_mm = spec.plane_w_m * 1000.0;
  const double plane_h_mm = spec.plane_h_m * 1000.0;
  const int tw = r.texture_width;
  const int th = r.texture_height;
  const double sx = plane_w_mm / tw;  // mm per texel
  const double sy = plane_h_mm / th;
  const double radius = r.d_circle_sim_m * 1000.0 / 2.0;
  const std::uint16_t white = 65535;
  const auto ink = static_cast<std::uint16_t>(std::lround(spec.circle_level * 65535.0));
  board.texture = GrayImage16(tw, th, white);

  // 4x4 coverage supersampling per texel near circle edges.
  constexpr int kSub = 4;
  for (const auto& p : board_object_points(spec)) {
    const Vec2 c = board_to_plane_mm(r, p);
    const int x0 = std::max(0, static_cast<int>(std::floor((c.x() - radius) / sx)) - 1);
    const int x1 = std::min(tw - 1, static_cast<int>(std::ceil((c.x() + radius) / sx)) + 1);
    const int y0 = std::max(0, static_cast<int>(std::floor((c.y() - radius) / sy)) - 1);
    const int y1 = std::min(th - 1, static_cast<int>(std::ceil((c.y() + radius) / sy)) + 1);
    for (int ty = y0; ty <= y1; ++ty) {
      for (int tx = x0; tx <= x1; ++tx) {
        int inside = 0;
        for (int sj = 0; sj < kSub; ++sj) {
          for (int si = 0; si < kSub; ++si) {
            const double px = (tx + (si + 0.5) / kSub) * sx - c.x();
            const double py = (ty + (sj + 0.5) / kSub) * sy - c.y();
            inside += (px * px + py * py <= radius * radius) ? 1 : 0;
          }
        }
        if (inside == 0) continue;
        const double cover = static_cast<double>(inside) / (kSub * kSub);
        const double v = white + cover * (static_cast<double>(ink) - white);
        board.texture.at(tx, ty) = std::min(board.texture.at(tx, ty), static_cast<std::uint16_t>(std::lround(v)));
      }
    }
  }
  return board;
}

std::string fringe_pattern_id(FringeDirection d, int period_px, int n) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "fringe_%s_%dpx_%02d", direction_name(d), period_px, n);
  return buf;
}

std::string gray_pattern_id(FringeDirection d, int bit) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "gray_%s_%02d", direction_name(d), bit);
  return buf;
}

std::vector<PatternEntry> direction_pattern_set(const FringeSetSpec& fringe, bool complementary) {
  std::vector<PatternEntry> out;
  auto frames = gen_fringe_patterns(fringe);
  for (std::size_t n = 0; n < frames.size(); ++n)
    out.push_back({fringe_pattern_id(fringe.direction, fringe.period_px, static_cast<int>(n) + 1), std::move(frames[n])});
  GraySetSpec g;
  g.period_px = fringe.period_px;
  g.direction = fringe.direction;
  g.proj_width = fringe.proj_width;
  g.proj_height = fringe.proj_height;
  g.min_level = fringe.min_level;
  g.max_level = fringe.max_level;
  g.complementary = complementary;
  auto gray = gen_gray_code_patterns(g);
  for (std::size_t b = 0; b < gray.bits.size(); ++b)
    out.push_back({gray_pattern_id(fringe.direction, static_cast<int>(b)), std::move(gray.bits[b])});
  const std::string dir = direction_name(fringe.direction);
  if (gray.complementary) out.push_back({"gray_" + dir + "_comp", std::move(*gray.complementary)});
  out.push_back({"white_" + dir, std::move(gray.white)});
  out.push_back({"black_" + dir, std::move(gray.black)});
  return out;
}

std::vector<PatternEntry> standard_pattern_set(const FringeSetSpec& base, bool complementary) {
  auto v = base;
  v.direction = FringeDirection::Vertical;
  auto h = base;
  h.direction = FringeDirection::Horizontal;
  auto out = direction_pattern_set(v, complementary);
  auto more = direction_pattern_set(h, complementary);
  for (auto& e : more) out.push_back(std::move(e));
  return out;
}

}  // namespace vfpp
