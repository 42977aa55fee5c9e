#include "recon.hpp"

#include <cmath>
#include <numbers>

#include "error.hpp"
#include "parallel.hpp"

namespace vfpp {
namespace {

struct Solve {
  Vec3 x;
  double cond;
};

std::optional<Solve> solve_rows(const ProjectionMatrix& mc, const ProjectionMatrix& mp, double uc, double vc,
                                double up) {
  const Mat34& c = mc.m;
  const Mat34& p = mp.m;
  Eigen::Matrix<double, 3, 4> rows;
  rows.row(0) = c.row(0) - uc * c.row(2);
  rows.row(1) = c.row(1) - vc * c.row(2);
  rows.row(2) = p.row(0) - up * p.row(2);
  const Mat3 A = rows.leftCols<3>();
  const Vec3 b = -rows.col(3);
  const double scale = A.row(0).norm() * A.row(1).norm() * A.row(2).norm();
  const double det = A.determinant();
  if (!(std::abs(det) >= 1e-12 * scale)) return std::nullopt;
  const Eigen::PartialPivLU<Mat3> lu(A);
  Solve s{lu.solve(b), 0.0};
  // 1-norm condition estimate.
  s.cond = A.cwiseAbs().colwise().sum().maxCoeff() * lu.inverse().cwiseAbs().colwise().sum().maxCoeff();
  return s;
}

}  // namespace

Vec3 triangulate_point(const ProjectionMatrix& mc, const ProjectionMatrix& mp, double uc, double vc, double up) {
  const auto s = solve_rows(mc, mp, uc, vc, up);
  if (!s) throw Error(ErrorCode::SingularGeometry, "triangulation system is singular");
  return s->x;
}

PointCloud reconstruct_cloud(const PhaseMaps& maps, const CalibrationResult& calib, double period_px, double scale,
                             ReconstructionStats* stats) {
  const int w = maps.width(), h = maps.height();
  const auto mc = calib.camera_matrix();
  const auto mp = calib.projector_matrix();
  const double k = period_px / (2.0 * std::numbers::pi);

  // Rows are solved independently and concatenated in row-major order.
  std::vector<std::vector<Vec3>> row_pts(h);
  std::vector<std::vector<Vec2>> row_px(h);
  std::vector<std::size_t> row_valid(h, 0), row_singular(h, 0);
  std::vector<std::vector<std::size_t>> row_hist(h, std::vector<std::size_t>(10, 0));
  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      if (!maps.mask.at(x, y)) continue;
      ++row_valid[y];
      const auto s = solve_rows(mc, mp, x, y, maps.unwrapped.at(x, y) * k);
      if (!s) {
        ++row_singular[y];
        continue;
      }
      const int bucket = std::clamp(static_cast<int>(std::floor(std::log10(std::max(s->cond, 1.0)))), 0, 9);
      ++row_hist[y][bucket];
      row_pts[y].push_back(s->x * scale);
      row_px[y].emplace_back(x, y);
    }
  });
  ReconstructionStats st;
  st.condition_histogram.assign(10, 0);
  PointCloud cloud;
  for (int y = 0; y < h; ++y) {
    st.valid_pixels += row_valid[y];
    st.singular_skipped += row_singular[y];
    for (int b = 0; b < 10; ++b) st.condition_histogram[b] += row_hist[y][b];
    cloud.points.insert(cloud.points.end(), row_pts[y].begin(), row_pts[y].end());
    cloud.pixels.insert(cloud.pixels.end(), row_px[y].begin(), row_px[y].end());
  }
  if (st.valid_pixels == 0) throw Error(ErrorCode::EmptyMask, "phase mask has no valid pixels");
  if (stats) *stats = st;
  return cloud;
}

}  // namespace vfpp
