#include "twin.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "error.hpp"
#include "io_util.hpp"
#include "scene.hpp"

namespace vfpp {

void CameraTransferSpec::validate() const {
  if (!(fx > 0 && fy > 0 && pixel_size_mm > 0) || width <= 0 || height <= 0)
    throw Error(ErrorCode::InvalidArgument, "camera transfer parameters must be positive");
}

SimCameraParams camera_params_to_sim(const CameraTransferSpec& spec) {
  spec.validate();
  return {0.5 * (spec.fx + spec.fy) * spec.pixel_size_mm, spec.width * spec.pixel_size_mm,
          spec.height * spec.pixel_size_mm};
}

ProjectedExtent projected_extent_at_distance(const Intrinsics& k, const RigidPose& pose, int res_u, int res_v,
                                             double z) {
  return projected_extent_at_distance(k, pose.matrix(), res_u, res_v, z);
}

ProjectedExtent projected_extent_at_distance(const Intrinsics& k, const Mat34& mext, int res_u, int res_v, double z) {
  if (!(z > 0)) throw Error(ErrorCode::InvalidArgument, "distance must be > 0");
  if (res_u <= 0 || res_v <= 0) throw Error(ErrorCode::InvalidArgument, "resolution must be positive");
  const Mat43 pinv = extrinsic_pseudo_inverse(mext);
  const Mat3 kinv = intrinsic_inverse(k);
  auto world = [&](double u, double v) -> Vec4 { return z * (pinv * (kinv * Vec3(u, v, 1.0))); };
  const Vec4 a = world(0, 0);
  const Vec4 b = world(res_u, res_v);
  return {std::abs(b[0] - a[0]), std::abs(b[1] - a[1]), z};
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.empty()) throw Error(ErrorCode::InvalidArgument, "line fit needs matching samples");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LineFit f;
  f.slope = sxx > 0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  double ss_res = 0, abs_res = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - f.at(x[i]);
    ss_res += r * r;
    abs_res += std::abs(r);
  }
  f.mae = abs_res / n;
  f.r2 = syy > 0 ? 1.0 - ss_res / syy : 1.0;
  return f;
}

ExtentSweep extent_linearity_sweep(const Intrinsics& k, const RigidPose& pose, int res_u, int res_v,
                                   std::span<const double> z_list) {
  return extent_linearity_sweep(k, pose.matrix(), res_u, res_v, z_list);
}

ExtentSweep extent_linearity_sweep(const Intrinsics& k, const Mat34& mext, int res_u, int res_v,
                                   std::span<const double> z_list) {
  if (z_list.empty()) throw Error(ErrorCode::InvalidArgument, "sweep needs at least one distance");
  ExtentSweep s;
  std::vector<double> w, h;
  for (double z : z_list) {
    s.rows.push_back(projected_extent_at_distance(k, mext, res_u, res_v, z));
    w.push_back(s.rows.back().width);
    h.push_back(s.rows.back().height);
  }
  s.width_fit = fit_line(z_list, w);
  s.height_fit = fit_line(z_list, h);
  return s;
}

ProjectorModel projector_model_from_json(const nlohmann::json& calibration) {
  try {
    const auto& p = calibration.at("projector");
    ProjectorModel m;
    m.k = intrinsics_from_json(p.at("intrinsics"));
    const auto& e = p.at("extrinsics");
    const auto& r = e.at("r");
    const auto& t = e.at("t");
    if (!r.is_array() || r.size() != 9 || !t.is_array() || t.size() != 3)
      throw Error(ErrorCode::ConfigError, "projector extrinsics need 9 'r' and 3 't' entries");
    const double scale = e.value("unit", std::string("mm")) == "m" ? 1000.0 : 1.0;
    for (int i = 0; i < 9; ++i) m.mext(i / 3, i % 3) = r[i].get<double>();
    for (int i = 0; i < 3; ++i) m.mext(i, 3) = scale * t[i].get<double>();
    return m;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::ConfigError, std::string("projector model: ") + ex.what());
  }
}

nlohmann::json sim_params_to_json(const SimCameraParams& p) {
  return {{"focal_length_mm", p.focal_mm},
          {"horizontal_aperture_mm", p.aperture_h_mm},
          {"vertical_aperture_mm", p.aperture_v_mm}};
}

nlohmann::json extent_to_json(const ProjectedExtent& e) {
  return {{"z_mm", e.z}, {"width_extent_mm", e.width}, {"height_extent_mm", e.height}};
}

static nlohmann::json fit_json(const LineFit& f) {
  return {{"slope", f.slope}, {"intercept_mm", f.intercept}, {"r2", f.r2}, {"mae_mm", f.mae}};
}

nlohmann::json sweep_to_json(const ExtentSweep& s) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : s.rows) rows.push_back(extent_to_json(r));
  return {{"rows", rows}, {"width_fit", fit_json(s.width_fit)}, {"height_fit", fit_json(s.height_fit)}};
}

void write_sweep_csv(const std::filesystem::path& p, const ExtentSweep& s) {
  std::string out = "z_mm,width_mm,height_mm,fit_residual_mm\n";
  char buf[160];
  for (const auto& r : s.rows) {
    const double res = std::max(std::abs(r.width - s.width_fit.at(r.z)), std::abs(r.height - s.height_fit.at(r.z)));
    std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g,%.3e\n", r.z, r.width, r.height, res);
    out += buf;
  }
  write_text_file(p, out);
}

}  // namespace vfpp
