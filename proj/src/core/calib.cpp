#include "calib.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "error.hpp"
#include "io_util.hpp"
#include "scene.hpp"

namespace vfpp {
namespace {

constexpr double kPi = std::numbers::pi;

// ---------------------------------------------------------------- detection

struct Component {
  int label = 0;
  int area = 0;
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool touches_border = false;
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;

  double fill_ratio() const {
    const double mx = sx / area, my = sy / area;
    const double cxx = sxx / area - mx * mx + 1.0 / 12.0;
    const double cyy = syy / area - my * my + 1.0 / 12.0;
    const double cxy = sxy / area - mx * my;
    const double det = cxx * cyy - cxy * cxy;
    if (det <= 0.0) return 0.0;
    // A filled ellipse with covariance C has area 4 pi sqrt(det C).
    return area / (4.0 * kPi * std::sqrt(det));
  }
};

int otsu_threshold(const GrayImage16& img) {
  constexpr int kBins = 1024;
  std::vector<double> hist(kBins, 0.0);
  double total = 0;
  for (auto v : img.data) {
    if (v == 0) continue;  // rays that missed every surface
    hist[v >> 6] += 1.0;
    total += 1.0;
  }
  if (total == 0) return -1;
  double sum_all = 0;
  for (int i = 0; i < kBins; ++i) sum_all += i * hist[i];
  double w0 = 0, sum0 = 0, best = -1;
  int best_t = -1;
  for (int t = 0; t < kBins; ++t) {
    w0 += hist[t];
    sum0 += t * hist[t];
    const double w1 = total - w0;
    if (w0 == 0 || w1 == 0) continue;
    const double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      best_t = t;
    }
  }
  return best_t < 0 ? -1 : (best_t + 1) << 6;
}

Vec2 weighted_centroid(const GrayImage16& img, const std::vector<int>& labels, const Component& c) {
  const int w = img.width, h = img.height;
  constexpr int kInner = 2, kOuter = 4;
  const int x0 = std::max(0, c.x0 - kOuter), x1 = std::min(w - 1, c.x1 + kOuter);
  const int y0 = std::max(0, c.y0 - kOuter), y1 = std::min(h - 1, c.y1 + kOuter);
  const int ww = x1 - x0 + 1, hh = y1 - y0 + 1;
  // Chebyshev distance to the component, capped at kOuter + 1.
  std::vector<int> dist(static_cast<std::size_t>(ww) * hh, kOuter + 1);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      if (labels[static_cast<std::size_t>(y) * w + x] != c.label) continue;
      for (int dy = -kOuter; dy <= kOuter; ++dy)
        for (int dx = -kOuter; dx <= kOuter; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx < x0 || xx > x1 || yy < y0 || yy > y1) continue;
          int& d = dist[static_cast<std::size_t>(yy - y0) * ww + (xx - x0)];
          d = std::min(d, std::max(std::abs(dx), std::abs(dy)));
        }
    }
  double hi_sum = 0;
  int hi_n = 0;
  double lo = 65535;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const int d = dist[static_cast<std::size_t>(y - y0) * ww + (x - x0)];
      const double v = img.at(x, y);
      const int other = labels[static_cast<std::size_t>(y) * w + x];
      if (d == 0) lo = std::min(lo, v);
      if (d > kInner && d <= kOuter && other == 0) {
        hi_sum += v;
        ++hi_n;
      }
    }
  if (hi_n == 0) throw Error(ErrorCode::GridNotFound, "circle without a surrounding background ring");
  const double hi = hi_sum / hi_n;
  if (!(hi > lo)) throw Error(ErrorCode::GridNotFound, "circle has no contrast");
  double sw = 0, swx = 0, swy = 0;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      if (dist[static_cast<std::size_t>(y - y0) * ww + (x - x0)] > kInner) continue;
      const int other = labels[static_cast<std::size_t>(y) * w + x];
      if (other != 0 && other != c.label) continue;
      const double wgt = std::clamp((hi - img.at(x, y)) / (hi - lo), 0.0, 1.0);
      sw += wgt;
      swx += wgt * x;
      swy += wgt * y;
    }
  return {swx / sw, swy / sw};
}

std::vector<Vec2> order_lattice(const std::vector<Vec2>& pts, int rows, int cols) {
  const int n = static_cast<int>(pts.size());
  // Nearest neighbours run along rows (half the row spacing).
  Vec2 dir = Vec2::Zero();
  for (int i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    Vec2 bd = Vec2::Zero();
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double d = (pts[j] - pts[i]).squaredNorm();
      if (d < best) {
        best = d;
        bd = pts[j] - pts[i];
      }
    }
    if (std::abs(bd.x()) < std::abs(bd.y()))
      throw Error(ErrorCode::AmbiguousOrientation, "nearest-neighbour direction is not row-like");
    if (bd.x() < 0) bd = -bd;
    dir += bd.normalized();
  }
  dir.normalize();
  if (dir.x() < std::cos(kPi / 4))
    throw Error(ErrorCode::AmbiguousOrientation, "board rows deviate more than 45 degrees from image +u");
  const Vec2 nrm(-dir.y(), dir.x());

  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return nrm.dot(pts[a]) < nrm.dot(pts[b]); });
  std::vector<std::pair<double, int>> gaps;  // (gap, split position)
  for (int k = 0; k + 1 < n; ++k) gaps.push_back({nrm.dot(pts[idx[k + 1]]) - nrm.dot(pts[idx[k]]), k + 1});
  std::sort(gaps.begin(), gaps.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  if (rows > 1) {
    const double smallest_split = gaps[rows - 2].first;
    const double largest_inner = rows - 1 < static_cast<int>(gaps.size()) ? gaps[rows - 1].first : 0.0;
    if (!(smallest_split > 2.0 * largest_inner))
      throw Error(ErrorCode::AmbiguousOrientation, "row separation is not unique");
  }
  std::vector<int> splits;
  for (int r = 0; r + 1 < rows; ++r) splits.push_back(gaps[r].second);
  std::sort(splits.begin(), splits.end());
  splits.push_back(n);
  std::vector<Vec2> out;
  int start = 0;
  for (int split : splits) {
    if (split - start != cols) throw Error(ErrorCode::AmbiguousOrientation, "row does not hold the expected count");
    std::vector<int> row(idx.begin() + start, idx.begin() + split);
    std::sort(row.begin(), row.end(), [&](int a, int b) { return dir.dot(pts[a]) < dir.dot(pts[b]); });
    for (int i : row) out.push_back(pts[i]);
    start = split;
  }
  return out;
}

// ------------------------------------------------------------ projection

struct Projected {
  Vec2 uv;
  Eigen::Matrix<double, 2, 3> d_xc;  // wrt device-frame point
  Eigen::Matrix<double, 2, 4> d_k;   // wrt fx, fy, ox, oy
};

Projected project_with_jacobian(const Intrinsics& k, const Vec3& xc) {
  const double iz = 1.0 / xc.z();
  const double x = xc.x() * iz, y = xc.y() * iz;
  Projected p;
  p.uv = Vec2(k.fx * x + k.ox, k.fy * y + k.oy);
  p.d_xc << k.fx * iz, 0, -k.fx * x * iz, 0, k.fy * iz, -k.fy * y * iz;
  p.d_k << x, 0, 1, 0, 0, y, 0, 1;
  return p;
}

Vec2 project(const Intrinsics& k, const Vec3& xc) { return {k.fx * xc.x() / xc.z() + k.ox, k.fy * xc.y() / xc.z() + k.oy}; }

RigidPose retract_pose(const RigidPose& p, const Eigen::Ref<const Eigen::VectorXd>& d) {
  RigidPose out;
  out.R = rotation_from_axis_angle(Vec3(d[0], d[1], d[2])) * p.R;
  out.t = p.t + Vec3(d[3], d[4], d[5]);
  return out;
}

Intrinsics retract_k(const Intrinsics& k, const Eigen::Ref<const Eigen::VectorXd>& d) {
  Intrinsics o = k;
  o.fx += d[0];
  o.fy += d[1];
  o.ox += d[2];
  o.oy += d[3];
  return o;
}

void check_observations(const PoseObservations& obs, std::size_t n_points) {
  for (const auto& pose : obs)
    if (pose.size() != n_points)
      throw Error(ErrorCode::InconsistentPoseCount, "observation count differs from object point count");
}

// ---------------------------------------------------------- mono problem

struct MonoState {
  Intrinsics k;
  std::vector<RigidPose> poses;
};

Eigen::VectorXd mono_residuals(const MonoState& s, const PoseObservations& obs, std::span<const Vec3> pts) {
  Eigen::VectorXd r(2 * obs.size() * pts.size());
  std::size_t row = 0;
  for (std::size_t i = 0; i < obs.size(); ++i)
    for (std::size_t j = 0; j < pts.size(); ++j) {
      const Vec2 e = project(s.k, s.poses[i].apply(pts[j])) - obs[i][j];
      r[row++] = e.x();
      r[row++] = e.y();
    }
  return r;
}

Eigen::MatrixXd mono_jacobian(const MonoState& s, const PoseObservations& obs, std::span<const Vec3> pts) {
  const std::size_t n_par = 4 + 6 * obs.size();
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2 * obs.size() * pts.size(), n_par);
  std::size_t row = 0;
  for (std::size_t i = 0; i < obs.size(); ++i)
    for (std::size_t j = 0; j < pts.size(); ++j) {
      const Vec3 rx = s.poses[i].R * pts[j];
      const auto p = project_with_jacobian(s.k, rx + s.poses[i].t);
      J.block<2, 4>(row, 0) = p.d_k;
      J.block<2, 3>(row, 4 + 6 * i) = -p.d_xc * skew(rx);
      J.block<2, 3>(row, 4 + 6 * i + 3) = p.d_xc;
      row += 2;
    }
  return J;
}

std::vector<double> per_pose_rms_of(const Eigen::VectorXd& r, std::size_t n_poses, std::size_t n_points) {
  std::vector<double> out(n_poses);
  for (std::size_t i = 0; i < n_poses; ++i)
    out[i] = std::sqrt(r.segment(2 * i * n_points, 2 * n_points).squaredNorm() / n_points);
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Mat3 average_rotation(const std::vector<Mat3>& rs) {
  Mat3 sum = Mat3::Zero();
  for (const auto& r : rs) sum += r;
  return project_to_rotation(sum);
}

StereoState stereo_refine(StereoState s, const PoseObservations& cam, const PoseObservations& proj,
                          std::span<const Vec3> pts, const LmOptions& opt, LmReport& rep) {
  LmProblem<StereoState> prob;
  prob.residuals = [&](const StereoState& st) { return stereo_residuals(st, cam, proj, pts); };
  prob.jacobian = [&](const StereoState& st) { return stereo_jacobian(st, cam, proj, pts); };
  prob.retract = stereo_retract;
  rep = levenberg_marquardt(s, prob, opt);
  if (!rep.converged)
    throw Error(ErrorCode::NonConvergence,
                "stereo refinement did not converge in " + std::to_string(opt.max_iterations) + " iterations");
  return s;
}

}  // namespace

GridDetection detect_circle_grid(const GrayImage16& image, const CalibBoardSpec& spec, int pose_index) {
  spec.validate();
  const int w = image.width, h = image.height;
  const int thr = otsu_threshold(image);
  if (thr < 0) throw Error(ErrorCode::GridNotFound, "image has no lit pixels");

  std::vector<int> labels(image.size(), 0);
  std::vector<Component> comps;
  std::vector<int> stack;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (labels[i] != 0 || image.data[i] >= thr) continue;
      Component c;
      c.label = static_cast<int>(comps.size()) + 1;
      c.x0 = c.x1 = x;
      c.y0 = c.y1 = y;
      labels[i] = c.label;
      stack.assign(1, static_cast<int>(i));
      while (!stack.empty()) {
        const int p = stack.back();
        stack.pop_back();
        const int px = p % w, py = p / w;
        ++c.area;
        c.sx += px;
        c.sy += py;
        c.sxx += double(px) * px;
        c.syy += double(py) * py;
        c.sxy += double(px) * py;
        c.x0 = std::min(c.x0, px);
        c.x1 = std::max(c.x1, px);
        c.y0 = std::min(c.y0, py);
        c.y1 = std::max(c.y1, py);
        if (px == 0 || py == 0 || px == w - 1 || py == h - 1) c.touches_border = true;
        const int nb[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
        for (const auto& d : nb) {
          const int qx = px + d[0], qy = py + d[1];
          if (qx < 0 || qy < 0 || qx >= w || qy >= h) continue;
          const std::size_t q = static_cast<std::size_t>(qy) * w + qx;
          if (labels[q] != 0 || image.data[q] >= thr) continue;
          labels[q] = c.label;
          stack.push_back(static_cast<int>(q));
        }
      }
      comps.push_back(c);
    }

  std::vector<const Component*> cand;
  for (const auto& c : comps) {
    if (c.touches_border || c.area < 12) continue;
    const double fill = c.fill_ratio();
    if (fill < 0.75 || fill > 1.25) continue;
    cand.push_back(&c);
  }
  if (!cand.empty()) {
    std::vector<double> areas;
    for (const auto* c : cand) areas.push_back(c->area);
    const double med = median(areas);
    std::erase_if(cand, [&](const Component* c) { return c->area < 0.3 * med || c->area > 3.0 * med; });
  }
  const int expected = spec.rows * spec.cols;
  if (static_cast<int>(cand.size()) != expected)
    throw Error(ErrorCode::GridNotFound,
                "found " + std::to_string(cand.size()) + " circles, expected " + std::to_string(expected));

  // Components of other circles are excluded from each centroid window.
  std::vector<int> circle_labels(labels.size(), 0);
  std::vector<char> keep(comps.size() + 1, 0);
  for (const auto* c : cand) keep[c->label] = 1;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (keep[labels[i]]) circle_labels[i] = labels[i];

  std::vector<Vec2> centers;
  for (const auto* c : cand) centers.push_back(weighted_centroid(image, circle_labels, *c));
  GridDetection det;
  det.centers = order_lattice(centers, spec.rows, spec.cols);
  det.pose_index = pose_index;
  return det;
}

std::vector<Vec2> map_centers_to_projector(const GridDetection& det, const PhaseMaps& phi_v, const PhaseMaps& phi_h,
                                           double period_px) {
  if (phi_v.width() != phi_h.width() || phi_v.height() != phi_h.height())
    throw Error(ErrorCode::DimensionMismatch, "phase maps differ in size");
  const double s = period_px / (2.0 * kPi);
  std::vector<Vec2> out;
  out.reserve(det.centers.size());
  for (std::size_t i = 0; i < det.centers.size(); ++i) {
    const Vec2& c = det.centers[i];
    const auto pv = sample_unwrapped(phi_v, c.x(), c.y());
    const auto ph = sample_unwrapped(phi_h, c.x(), c.y());
    if (!pv || !ph)
      throw Error(ErrorCode::CenterMasked, "center " + std::to_string(i) + " falls on invalid phase (pose " +
                                               std::to_string(det.pose_index) + ")");
    out.emplace_back(*pv * s, *ph * s);
  }
  return out;
}

Mat3 estimate_homography(std::span<const Vec3> obj, std::span<const Vec2> img) {
  const std::size_t n = obj.size();
  if (n < 4 || img.size() != n) throw Error(ErrorCode::DegenerateConfiguration, "homography needs >= 4 matches");
  // Hartley normalization of both point sets.
  auto normalizer = [n](auto get) {
    Vec2 mean = Vec2::Zero();
    for (std::size_t i = 0; i < n; ++i) mean += get(i);
    mean /= static_cast<double>(n);
    double d = 0;
    for (std::size_t i = 0; i < n; ++i) d += (get(i) - mean).norm();
    d /= static_cast<double>(n);
    if (d <= 0) throw Error(ErrorCode::DegenerateConfiguration, "coincident homography points");
    const double s = std::sqrt(2.0) / d;
    Mat3 t;
    t << s, 0, -s * mean.x(), 0, s, -s * mean.y(), 0, 0, 1;
    return t;
  };
  const Mat3 to = normalizer([&](std::size_t i) { return Vec2(obj[i].x(), obj[i].y()); });
  const Mat3 ti = normalizer([&](std::size_t i) { return img[i]; });
  Eigen::MatrixXd A(2 * n, 9);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 X = to * Vec3(obj[i].x(), obj[i].y(), 1.0);
    const Vec3 u = ti * Vec3(img[i].x(), img[i].y(), 1.0);
    A.row(2 * i) << X.x(), X.y(), 1, 0, 0, 0, -u.x() * X.x(), -u.x() * X.y(), -u.x();
    A.row(2 * i + 1) << 0, 0, 0, X.x(), X.y(), 1, -u.y() * X.x(), -u.y() * X.y(), -u.y();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Eigen::VectorXd hv = svd.matrixV().col(8);
  Mat3 hn;
  hn << hv[0], hv[1], hv[2], hv[3], hv[4], hv[5], hv[6], hv[7], hv[8];
  Mat3 H = ti.inverse() * hn * to;
  return H / H(2, 2);
}

Intrinsics intrinsics_from_homographies(std::span<const Mat3> hs, int width, int height) {
  if (hs.size() < 3)
    throw Error(ErrorCode::DegenerateConfiguration, "intrinsic initialization needs at least 3 poses");
  // Work in normalized pixel units for conditioning.
  const double sc = std::max(width, height);
  Mat3 N;
  N << 1.0 / sc, 0, -0.5 * width / sc, 0, 1.0 / sc, -0.5 * height / sc, 0, 0, 1;
  Eigen::MatrixXd V(2 * hs.size(), 5);
  auto vij = [](const Mat3& H, int i, int j) {
    const Vec3 a = H.col(i), b = H.col(j);
    Eigen::Matrix<double, 1, 5> v;
    v << a[0] * b[0], a[1] * b[1], a[0] * b[2] + a[2] * b[0], a[1] * b[2] + a[2] * b[1], a[2] * b[2];
    return v;
  };
  for (std::size_t k = 0; k < hs.size(); ++k) {
    Mat3 H = N * hs[k];
    H /= H.norm();
    V.row(2 * k) = vij(H, 0, 1);
    V.row(2 * k + 1) = vij(H, 0, 0) - vij(H, 1, 1);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(V, Eigen::ComputeFullV);
  const auto sv = svd.singularValues();
  if (sv[3] < 1e-9 * sv[0]) throw Error(ErrorCode::DegenerateConfiguration, "intrinsic system is singular");
  Eigen::VectorXd b = svd.matrixV().col(4);
  if (b[0] < 0) b = -b;
  const double B11 = b[0], B22 = b[1], B13 = b[2], B23 = b[3], B33 = b[4];
  if (!(B11 > 0 && B22 > 0)) throw Error(ErrorCode::DegenerateConfiguration, "intrinsic system has no valid solution");
  const double oy = -B23 / B22;
  const double lambda = B33 - (B13 * B13 - oy * B11 * B23) / B11;
  if (!(lambda / B11 > 0 && lambda / B22 > 0))
    throw Error(ErrorCode::DegenerateConfiguration, "intrinsic system has no valid solution");
  const double fx = std::sqrt(lambda / B11);
  const double fy = std::sqrt(lambda / B22);
  const double ox = -B13 * fx * fx / lambda;
  // Undo the normalization: K = N^-1 K_n.
  Intrinsics k;
  k.fx = fx * sc;
  k.fy = fy * sc;
  k.ox = ox * sc + 0.5 * width;
  k.oy = oy * sc + 0.5 * height;
  k.width = width;
  k.height = height;
  return k;
}

RigidPose pose_from_homography(const Mat3& H, const Intrinsics& k) {
  const Mat3 ki = intrinsic_inverse(k);
  Vec3 h1 = ki * H.col(0), h2 = ki * H.col(1), h3 = ki * H.col(2);
  double s = 2.0 / (h1.norm() + h2.norm());
  if (h3.z() * s < 0) s = -s;
  Mat3 R;
  R.col(0) = s * h1;
  R.col(1) = s * h2;
  R.col(2) = R.col(0).cross(R.col(1));
  RigidPose p;
  p.R = project_to_rotation(R);
  p.t = s * h3;
  return p;
}

IntrinsicCalibration calibrate_intrinsics(const PoseObservations& obs, std::span<const Vec3> pts, int width,
                                          int height, const LmOptions& lm) {
  check_observations(obs, pts.size());
  if (obs.size() < 3) throw Error(ErrorCode::DegenerateConfiguration, "calibration needs at least 3 poses");
  std::vector<Mat3> hs;
  for (const auto& o : obs) hs.push_back(estimate_homography(pts, o));
  MonoState s;
  s.k = intrinsics_from_homographies(hs, width, height);
  for (const auto& h : hs) s.poses.push_back(pose_from_homography(h, s.k));

  LmProblem<MonoState> prob;
  prob.residuals = [&](const MonoState& st) { return mono_residuals(st, obs, pts); };
  prob.jacobian = [&](const MonoState& st) { return mono_jacobian(st, obs, pts); };
  prob.retract = [](const MonoState& st, const Eigen::VectorXd& d) {
    MonoState o;
    o.k = retract_k(st.k, d.segment(0, 4));
    for (std::size_t i = 0; i < st.poses.size(); ++i) o.poses.push_back(retract_pose(st.poses[i], d.segment(4 + 6 * i, 6)));
    return o;
  };
  IntrinsicCalibration out;
  out.lm = levenberg_marquardt(s, prob, lm);
  if (!out.lm.converged)
    throw Error(ErrorCode::NonConvergence,
                "intrinsic refinement did not converge in " + std::to_string(lm.max_iterations) + " iterations");
  const Eigen::VectorXd r = mono_residuals(s, obs, pts);
  out.k = s.k;
  out.poses = s.poses;
  out.rms = std::sqrt(r.squaredNorm() / (obs.size() * pts.size()));
  out.per_pose_rms = per_pose_rms_of(r, obs.size(), pts.size());
  return out;
}

IntrinsicCalibration calibrate_intrinsics(std::span<const GridDetection> dets, std::span<const Vec3> pts, int width,
                                          int height, const LmOptions& lm) {
  PoseObservations obs;
  for (const auto& d : dets) obs.push_back(d.centers);
  return calibrate_intrinsics(obs, pts, width, height, lm);
}

Eigen::VectorXd stereo_residuals(const StereoState& s, const PoseObservations& cam, const PoseObservations& proj,
                                 std::span<const Vec3> pts) {
  const std::size_t n = pts.size(), m = s.boards.size();
  Eigen::VectorXd r(4 * n * m);
  std::size_t row = 0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const Vec2 e = project(s.cam, s.boards[i].apply(pts[j])) - cam[i][j];
      r[row++] = e.x();
      r[row++] = e.y();
    }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const Vec2 e = project(s.proj, s.cam_to_proj.apply(s.boards[i].apply(pts[j]))) - proj[i][j];
      r[row++] = e.x();
      r[row++] = e.y();
    }
  return r;
}

Eigen::MatrixXd stereo_jacobian(const StereoState& s, const PoseObservations& cam, const PoseObservations& proj,
                                std::span<const Vec3> pts) {
  (void)cam;
  (void)proj;
  const std::size_t n = pts.size(), m = s.boards.size();
  const std::size_t n_par = 14 + 6 * m;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(4 * n * m, n_par);
  std::size_t row = 0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const Vec3 rx = s.boards[i].R * pts[j];
      const auto p = project_with_jacobian(s.cam, rx + s.boards[i].t);
      J.block<2, 4>(row, 0) = p.d_k;
      J.block<2, 3>(row, 14 + 6 * i) = -p.d_xc * skew(rx);
      J.block<2, 3>(row, 14 + 6 * i + 3) = p.d_xc;
      row += 2;
    }
  const Mat3& Rt = s.cam_to_proj.R;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const Vec3 rx = s.boards[i].R * pts[j];
      const Vec3 xc = rx + s.boards[i].t;
      const Vec3 rxc = Rt * xc;
      const auto p = project_with_jacobian(s.proj, rxc + s.cam_to_proj.t);
      J.block<2, 4>(row, 4) = p.d_k;
      J.block<2, 3>(row, 8) = -p.d_xc * skew(rxc);
      J.block<2, 3>(row, 11) = p.d_xc;
      J.block<2, 3>(row, 14 + 6 * i) = -p.d_xc * Rt * skew(rx);
      J.block<2, 3>(row, 14 + 6 * i + 3) = p.d_xc * Rt;
      row += 2;
    }
  return J;
}

StereoState stereo_retract(const StereoState& s, const Eigen::VectorXd& d) {
  StereoState o;
  o.cam = retract_k(s.cam, d.segment(0, 4));
  o.proj = retract_k(s.proj, d.segment(4, 4));
  o.cam_to_proj = retract_pose(s.cam_to_proj, d.segment(8, 6));
  o.boards.reserve(s.boards.size());
  for (std::size_t i = 0; i < s.boards.size(); ++i) o.boards.push_back(retract_pose(s.boards[i], d.segment(14 + 6 * i, 6)));
  return o;
}

ProjectionMatrix CalibrationResult::camera_matrix() const {
  return compose_projection(cam, RigidPose::identity(), DeviceRole::Camera);
}

ProjectionMatrix CalibrationResult::projector_matrix() const {
  return compose_projection(proj, cam_to_proj, DeviceRole::Projector);
}

ReprojectionStats reprojection_stats(const CalibrationResult& c, const PoseObservations& cam,
                                     const PoseObservations& proj, std::span<const Vec3> pts) {
  ReprojectionStats st;
  const std::size_t n = pts.size();
  double cam_ss = 0, proj_ss = 0;
  for (std::size_t a = 0; a < c.accepted_poses.size(); ++a) {
    const int i = c.accepted_poses[a];
    double pose_ss = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const Vec3 xc = c.per_pose_board[a].apply(pts[j]);
      const double ec = (project(c.cam, xc) - cam[i][j]).squaredNorm();
      const double ep = (project(c.proj, c.cam_to_proj.apply(xc)) - proj[i][j]).squaredNorm();
      cam_ss += ec;
      proj_ss += ep;
      pose_ss += ec + ep;
    }
    st.per_pose_rms.push_back(std::sqrt(pose_ss / (2.0 * n)));
  }
  const double total = static_cast<double>(n * c.accepted_poses.size());
  st.cam_rms = std::sqrt(cam_ss / total);
  st.proj_rms = std::sqrt(proj_ss / total);
  return st;
}

CalibrationResult stereo_calibrate(const PoseObservations& cam, const PoseObservations& proj,
                                   std::span<const Vec3> pts, const Intrinsics& cam_size, const Intrinsics& proj_size,
                                   const StereoOptions& opt) {
  if (cam.size() != proj.size())
    throw Error(ErrorCode::InconsistentPoseCount, "camera has " + std::to_string(cam.size()) +
                                                      " poses, projector " + std::to_string(proj.size()));
  check_observations(cam, pts.size());
  check_observations(proj, pts.size());

  auto cal_c = calibrate_intrinsics(cam, pts, cam_size.width, cam_size.height, opt.lm);
  auto cal_p = calibrate_intrinsics(proj, pts, proj_size.width, proj_size.height, opt.lm);

  StereoState s;
  s.cam = cal_c.k;
  s.proj = cal_p.k;
  s.boards = cal_c.poses;
  std::vector<Mat3> rel_r;
  Vec3 rel_t = Vec3::Zero();
  for (std::size_t i = 0; i < cam.size(); ++i) {
    const RigidPose rel = cal_p.poses[i] * cal_c.poses[i].inverse();
    rel_r.push_back(rel.R);
    rel_t += rel.t;
  }
  s.cam_to_proj.R = average_rotation(rel_r);
  s.cam_to_proj.t = rel_t / static_cast<double>(cam.size());

  CalibrationResult res;
  std::vector<int> accepted(cam.size());
  std::iota(accepted.begin(), accepted.end(), 0);
  s = stereo_refine(std::move(s), cam, proj, pts, opt.lm, res.lm);

  auto fill = [&](const StereoState& st) {
    res.cam = st.cam;
    res.proj = st.proj;
    res.cam_to_proj = st.cam_to_proj;
    res.per_pose_board = st.boards;
    res.accepted_poses = accepted;
  };
  fill(s);
  PoseObservations cam_sub = cam, proj_sub = proj;
  auto stats = reprojection_stats(res, cam, proj, pts);

  const double med = median(stats.per_pose_rms);
  std::vector<int> keep;
  for (std::size_t a = 0; a < accepted.size(); ++a)
    if (!(stats.per_pose_rms[a] > opt.outlier_factor * med)) keep.push_back(accepted[a]);
  if (keep.size() < accepted.size() && keep.size() >= 3) {
    cam_sub.clear();
    proj_sub.clear();
    StereoState s2 = s;
    s2.boards.clear();
    for (std::size_t a = 0; a < accepted.size(); ++a) {
      if (std::find(keep.begin(), keep.end(), accepted[a]) == keep.end()) continue;
      cam_sub.push_back(cam[accepted[a]]);
      proj_sub.push_back(proj[accepted[a]]);
      s2.boards.push_back(s.boards[a]);
    }
    accepted = keep;
    s = stereo_refine(std::move(s2), cam_sub, proj_sub, pts, opt.lm, res.lm);
    fill(s);
    stats = reprojection_stats(res, cam, proj, pts);
  }
  res.stereo_reproj_rms = stats.cam_rms;
  res.proj_reproj_rms = stats.proj_rms;
  res.per_pose_rms = stats.per_pose_rms;
  return res;
}

nlohmann::json calibration_to_json(const CalibrationResult& c) {
  using nlohmann::json;
  json j;
  j["version"] = 1;
  j["camera"] = {{"intrinsics", intrinsics_to_json(c.cam)}, {"extrinsics", pose_to_json(RigidPose::identity())}};
  j["projector"] = {{"intrinsics", intrinsics_to_json(c.proj)}, {"extrinsics", pose_to_json(c.cam_to_proj)}};
  j["errors"] = {{"stereo_reproj_rms_px", c.stereo_reproj_rms},
                 {"proj_reproj_rms_px", c.proj_reproj_rms},
                 {"per_pose_rms_px", c.per_pose_rms}};
  j["accepted_poses"] = c.accepted_poses;
  j["board_poses"] = json::array();
  for (const auto& p : c.per_pose_board) j["board_poses"].push_back(pose_to_json(p));
  j["lm"] = {{"iterations", c.lm.iterations}, {"converged", c.lm.converged}, {"final_cost", c.lm.final_cost}};
  return j;
}

CalibrationResult calibration_from_json(const nlohmann::json& j) {
  try {
    CalibrationResult c;
    c.cam = intrinsics_from_json(j.at("camera").at("intrinsics"));
    if (j["camera"].contains("extrinsics")) {
      const auto cam_pose = pose_from_json(j["camera"]["extrinsics"]);
      if (!cam_pose.R.isIdentity(1e-12) || cam_pose.t.norm() > 1e-12)
        throw Error(ErrorCode::ConfigError, "camera extrinsics must be the identity (camera frame is the world frame)");
    }
    c.proj = intrinsics_from_json(j.at("projector").at("intrinsics"));
    c.cam_to_proj = pose_from_json(j.at("projector").at("extrinsics"));
    if (j.contains("errors")) {
      const auto& e = j["errors"];
      c.stereo_reproj_rms = e.value("stereo_reproj_rms_px", 0.0);
      c.proj_reproj_rms = e.value("proj_reproj_rms_px", 0.0);
      c.per_pose_rms = e.value("per_pose_rms_px", std::vector<double>{});
    }
    c.accepted_poses = j.value("accepted_poses", std::vector<int>{});
    for (const auto& p : j.value("board_poses", nlohmann::json::array())) c.per_pose_board.push_back(pose_from_json(p));
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("calibration: ") + e.what());
  }
}

void save_calibration(const std::filesystem::path& p, const CalibrationResult& c) {
  write_json_file(p, calibration_to_json(c));
}

CalibrationResult load_calibration(const std::filesystem::path& p) { return calibration_from_json(read_json_file(p)); }

}  // namespace vfpp
