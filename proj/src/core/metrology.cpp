#include "metrology.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "error.hpp"
#include "io_util.hpp"
#include "parallel.hpp"

namespace vfpp {
namespace {

/// Static 3-d tree with exact nearest-neighbour queries.
class KdTree {
 public:
  explicit KdTree(const std::vector<Vec3>& pts) : pts_(pts), idx_(pts.size()) {
    std::iota(idx_.begin(), idx_.end(), 0);
    if (!pts.empty()) build(0, static_cast<int>(pts.size()), 0);
  }

  /// Index of the nearest point; ties go to the lowest index.
  int nearest(const Vec3& q) const {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    search(0, static_cast<int>(idx_.size()), 0, q, best, best_d);
    return best;
  }

 private:
  void build(int lo, int hi, int depth) {
    if (hi - lo <= 8) return;
    const int axis = depth % 3;
    const int mid = (lo + hi) / 2;
    std::nth_element(idx_.begin() + lo, idx_.begin() + mid, idx_.begin() + hi, [&](int a, int b) {
      return pts_[a][axis] < pts_[b][axis] || (pts_[a][axis] == pts_[b][axis] && a < b);
    });
    build(lo, mid, depth + 1);
    build(mid + 1, hi, depth + 1);
  }

  void search(int lo, int hi, int depth, const Vec3& q, int& best, double& best_d) const {
    if (hi - lo <= 8) {
      for (int i = lo; i < hi; ++i) {
        const double d = (pts_[idx_[i]] - q).squaredNorm();
        if (d < best_d || (d == best_d && idx_[i] < best)) {
          best_d = d;
          best = idx_[i];
        }
      }
      return;
    }
    const int axis = depth % 3;
    const int mid = (lo + hi) / 2;
    const int m = idx_[mid];
    const double d = (pts_[m] - q).squaredNorm();
    if (d < best_d || (d == best_d && m < best)) {
      best_d = d;
      best = m;
    }
    const double diff = q[axis] - pts_[m][axis];
    const bool left_first = diff < 0;
    if (left_first)
      search(lo, mid, depth + 1, q, best, best_d);
    else
      search(mid + 1, hi, depth + 1, q, best, best_d);
    if (diff * diff <= best_d) {
      if (left_first)
        search(mid + 1, hi, depth + 1, q, best, best_d);
      else
        search(lo, mid, depth + 1, q, best, best_d);
    }
  }

  const std::vector<Vec3>& pts_;
  std::vector<int> idx_;
};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double msac_cost(const std::vector<Vec3>& pts, const Vec3& c, double r, double tau2, std::size_t* inliers) {
  double cost = 0;
  std::size_t n_in = 0;
  for (const auto& p : pts) {
    const double d = (p - c).norm() - r;
    const double d2 = d * d;
    if (d2 < tau2) {
      cost += d2;
      ++n_in;
    } else {
      cost += tau2;
    }
  }
  if (inliers) *inliers = n_in;
  return cost;
}

/// Gauss-Newton on geometric residuals |p - c| - r.
void refine_sphere(const std::vector<Vec3>& pts, Vec3& c, double& r) {
  for (int it = 0; it < 50; ++it) {
    Eigen::Matrix4d A = Eigen::Matrix4d::Zero();
    Eigen::Vector4d g = Eigen::Vector4d::Zero();
    for (const auto& p : pts) {
      const Vec3 d = p - c;
      const double n = d.norm();
      if (n == 0) continue;
      const double res = n - r;
      Eigen::Vector4d j;
      j << -d / n, -1.0;
      A += j * j.transpose();
      g += j * res;
    }
    const Eigen::Vector4d step = A.ldlt().solve(-g);
    if (!step.allFinite()) return;
    c += step.head<3>();
    r += step[3];
    if (step.norm() < 1e-13 * (1.0 + std::abs(r))) return;
  }
}

// Rank of the centered scatter below 2.
bool collinear(const std::vector<Vec3>& pts) {
  Vec3 mean = Vec3::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  const Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  const Vec3 ev = es.eigenvalues();  // ascending
  return !(ev[1] > 1e-12 * ev[2]);
}

}  // namespace

RigidPose kabsch(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.size() != b.size() || a.size() < 3)
    throw Error(ErrorCode::DegenerateCorrespondences, "need at least 3 correspondences");
  Vec3 ca = Vec3::Zero(), cb = Vec3::Zero();
  for (std::size_t i = 0; i < a.size(); ++i) {
    ca += a[i];
    cb += b[i];
  }
  ca /= static_cast<double>(a.size());
  cb /= static_cast<double>(b.size());
  Mat3 H = Mat3::Zero();
  for (std::size_t i = 0; i < a.size(); ++i) H += (a[i] - ca) * (b[i] - cb).transpose();
  Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 s = svd.singularValues();
  if (!(s[0] > 0.0) || s[1] <= 1e-12 * s[0])
    throw Error(ErrorCode::DegenerateCorrespondences, "cross-covariance rank below 2 (collinear points)");
  const Mat3 U = svd.matrixU(), V = svd.matrixV();
  Mat3 D = Mat3::Identity();
  if ((V * U.transpose()).determinant() < 0) D(2, 2) = -1;
  RigidPose p;
  p.R = V * D * U.transpose();
  p.t = cb - p.R * ca;
  return p;
}

IcpResult icp_register(const PointCloud& source, const std::vector<Vec3>& target, int max_iter, double tol) {
  if (source.points.empty()) throw Error(ErrorCode::InvalidArgument, "ICP source is empty");
  if (target.size() < 3) throw Error(ErrorCode::DegenerateCorrespondences, "ICP target needs at least 3 points");
  if (collinear(target)) throw Error(ErrorCode::DegenerateCorrespondences, "ICP target points are collinear");
  const KdTree tree(target);
  const std::size_t n = source.points.size();
  std::vector<Vec3> matched(n);
  IcpResult res;
  auto match = [&](const RigidPose& pose) {
    std::vector<double> sq(n);
    parallel_for(0, static_cast<int>(n), [&](int i) {
      const Vec3 q = pose.R * source.points[i] + pose.t;
      matched[i] = target[tree.nearest(q)];
      sq[i] = (q - matched[i]).squaredNorm();
    });
    double ss = 0;
    for (double v : sq) ss += v;
    return std::sqrt(ss / n);
  };
  RigidPose pose;
  double prev = std::numeric_limits<double>::infinity();
  bool done = false;
  for (int it = 0; it < max_iter; ++it) {
    const double rms = match(pose);
    res.rms_history.push_back(rms);
    res.iterations = it + 1;
    if (prev - rms < tol || rms == 0.0) {
      done = true;
      res.rms = rms;
      break;
    }
    prev = rms;
    pose = kabsch(source.points, matched);
  }
  if (!done) {
    res.rms = match(pose);
    res.rms_history.push_back(res.rms);
  }
  res.pose = pose;
  res.aligned.pixels = source.pixels;
  res.aligned.points.reserve(n);
  for (const auto& p : source.points) res.aligned.points.push_back(pose.R * p + pose.t);
  return res;
}

IcpResult icp_register(const PointCloud& source, const TriangleMesh& target, int max_iter, double tol) {
  return icp_register(source, target.vertices, max_iter, tol);
}

std::optional<std::pair<Vec3, double>> sphere_from_four(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  // Centered and scaled coordinates keep the condition number meaningful.
  const Vec3 o = (a + b + c + d) / 4.0;
  const double s = std::max({(a - o).norm(), (b - o).norm(), (c - o).norm(), (d - o).norm()});
  if (!(s > 0)) return std::nullopt;
  Eigen::Matrix4d A;
  Eigen::Vector4d rhs;
  const Vec3* p[4] = {&a, &b, &c, &d};
  for (int i = 0; i < 4; ++i) {
    const Vec3 q = (*p[i] - o) / s;
    A.row(i) << q.x(), q.y(), q.z(), 1.0;
    rhs[i] = -q.squaredNorm();
  }
  Eigen::JacobiSVD<Eigen::Matrix4d> svd(A);
  const auto sv = svd.singularValues();
  if (!(sv[3] > 0) || sv[0] / sv[3] > 1e8) return std::nullopt;
  const Eigen::Vector4d x = A.partialPivLu().solve(rhs);
  const Vec3 cen = -0.5 * x.head<3>();
  const double r2 = cen.squaredNorm() - x[3];
  if (!(r2 > 0)) return std::nullopt;
  return std::make_pair(o + s * cen, s * std::sqrt(r2));
}

SphereFit fit_sphere_msac(const PointCloud& cloud, double tau, int max_trials, std::uint64_t seed) {
  const auto& pts = cloud.points;
  const std::size_t n = pts.size();
  if (n < 4) throw Error(ErrorCode::InvalidArgument, "sphere fit needs at least 4 points");
  if (!(tau > 0)) throw Error(ErrorCode::InvalidArgument, "inlier threshold must be > 0");
  const double tau2 = tau * tau;

  struct Trial {
    bool valid = false;
    Vec3 c;
    double r = 0;
    double cost = 0;
    std::size_t inliers = 0;
  };
  constexpr int kBatch = 32;
  Trial best;
  int needed = max_trials;
  int done = 0;
  while (done < std::min(needed, max_trials)) {
    const int count = std::min({kBatch, max_trials - done, needed - done});
    std::vector<Trial> batch(count);
    parallel_for(0, count, [&](int k) {
      std::mt19937_64 rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(done + k))));
      std::size_t idx[4];
      for (int i = 0; i < 4; ++i) {
        bool fresh;
        do {
          idx[i] = static_cast<std::size_t>(rng() % n);
          fresh = true;
          for (int j = 0; j < i; ++j) fresh = fresh && idx[j] != idx[i];
        } while (!fresh);
      }
      const auto s = sphere_from_four(pts[idx[0]], pts[idx[1]], pts[idx[2]], pts[idx[3]]);
      if (!s) return;
      Trial& t = batch[k];
      t.valid = true;
      t.c = s->first;
      t.r = s->second;
      t.cost = msac_cost(pts, t.c, t.r, tau2, &t.inliers);
    });
    for (const auto& t : batch)
      if (t.valid && (!best.valid || t.cost < best.cost)) best = t;
    done += count;
    if (best.valid) {
      const double w = static_cast<double>(best.inliers) / n;
      const double w4 = w * w * w * w;
      if (w4 >= 1.0 - 1e-15) {
        needed = done;
      } else if (w4 > 0) {
        const double k = std::log(1.0 - 0.99) / std::log(1.0 - w4);
        needed = static_cast<int>(std::min<double>(max_trials, std::ceil(k)));
      }
    }
  }
  if (!best.valid) throw Error(ErrorCode::NoValidModel, "every MSAC sample was degenerate");

  Vec3 c = best.c;
  double r = best.r;
  std::vector<Vec3> inl;
  std::size_t prev_count = 0;
  for (int round = 0; round < 5; ++round) {
    inl.clear();
    for (const auto& p : pts)
      if (std::abs((p - c).norm() - r) < tau) inl.push_back(p);
    if (inl.size() < 4) break;
    if (round > 0 && inl.size() == prev_count) break;
    prev_count = inl.size();
    refine_sphere(inl, c, r);
  }
  SphereFit fit;
  fit.center = c;
  fit.radius = std::abs(r);
  fit.total = n;
  fit.inlier_threshold = tau;
  fit.trials = done;
  msac_cost(pts, c, fit.radius, tau2, &fit.inliers);
  return fit;
}

RadialError radial_error(const SphereFit& fit, double r_actual) {
  if (!(r_actual > 0)) throw Error(ErrorCode::InvalidArgument, "actual radius must be > 0");
  RadialError e;
  e.absolute_mm = std::abs(fit.radius - r_actual);
  e.relative = e.absolute_mm / r_actual;
  return e;
}

std::vector<double> cloud_to_mesh_brute_force(const PointCloud& cloud, const TriangleMesh& mesh) {
  std::vector<double> out(cloud.size());
  parallel_for(0, static_cast<int>(cloud.size()), [&](int i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) best = std::min(best, point_face_distance(mesh, f, cloud.points[i]));
    out[i] = best;
  });
  return out;
}

C2MReport cloud_to_mesh(const PointCloud& cloud, const TriangleMesh& mesh, int bins) {
  if (cloud.points.empty() || mesh.faces.empty()) throw Error(ErrorCode::InvalidArgument, "C2M needs non-empty inputs");
  if (bins < 1) throw Error(ErrorCode::InvalidArgument, "histogram needs at least one bin");
  const MeshBvh bvh(mesh);
  C2MReport r;
  r.distances.resize(cloud.size());
  parallel_for(0, static_cast<int>(cloud.size()), [&](int i) { r.distances[i] = bvh.distance(cloud.points[i]); });
  double sum = 0, ss = 0;
  for (double d : r.distances) {
    sum += d;
    ss += d * d;
    r.max = std::max(r.max, d);
  }
  r.mean = sum / r.distances.size();
  r.rms = std::sqrt(ss / r.distances.size());
  r.bin_edges.resize(bins + 1);
  for (int b = 0; b <= bins; ++b) r.bin_edges[b] = r.max * b / bins;
  r.bin_edges[bins] = r.max;
  r.counts.assign(bins, 0);
  for (double d : r.distances) {
    int b = r.max > 0 ? static_cast<int>(d / r.max * bins) : 0;
    ++r.counts[std::clamp(b, 0, bins - 1)];
  }
  return r;
}

nlohmann::json sphere_fit_to_json(const SphereFit& fit, double r_actual) {
  const auto e = radial_error(fit, r_actual);
  return {{"center_mm", {fit.center.x(), fit.center.y(), fit.center.z()}},
          {"radius_mm", fit.radius},
          {"inliers", fit.inliers},
          {"total", fit.total},
          {"inlier_fraction", fit.inlier_fraction()},
          {"inlier_threshold_mm", fit.inlier_threshold},
          {"trials", fit.trials},
          {"actual_radius_mm", r_actual},
          {"radial_error_mm", e.absolute_mm},
          {"relative_error", e.relative}};
}

nlohmann::json c2m_to_json(const C2MReport& r) {
  return {{"count", r.distances.size()}, {"mean_mm", r.mean},         {"rms_mm", r.rms},
          {"max_mm", r.max},             {"bin_edges_mm", r.bin_edges}, {"counts", r.counts}};
}

void write_histogram_csv(const std::filesystem::path& p, const C2MReport& r) {
  std::string s = "bin_lo_mm,bin_hi_mm,count\n";
  char buf[128];
  for (std::size_t b = 0; b < r.counts.size(); ++b) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g,%zu\n", r.bin_edges[b], r.bin_edges[b + 1], r.counts[b]);
    s += buf;
  }
  write_text_file(p, s);
}

}  // namespace vfpp
