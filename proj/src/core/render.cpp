#include "render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "error.hpp"
#include "io_util.hpp"
#include "parallel.hpp"

namespace vfpp {
namespace {

constexpr double kPi = std::numbers::pi;
// Shadow rays start this far (mm) from the surface to skip self-hits.
constexpr double kShadowEps = 1e-4;

std::optional<double> intersect_sphere(const Ray& ray, const SphereGeom& s, double tmin) {
  const Vec3 oc = ray.origin - s.center;
  const double b = oc.dot(ray.direction);
  const double c = oc.squaredNorm() - s.radius * s.radius;
  const double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  const double sq = std::sqrt(disc);
  // Numerically stable root pair.
  const double q = b > 0.0 ? -(b + sq) : -(b - sq);
  double t0 = q;
  double t1 = q != 0.0 ? c / q : -b;
  if (t0 > t1) std::swap(t0, t1);
  if (t0 > tmin) return t0;
  if (t1 > tmin) return t1;
  return std::nullopt;
}

std::optional<std::pair<double, Vec2>> intersect_plane(const Ray& ray, const PlaneGeom& p, double tmin) {
  const Vec3 ol = p.placement.R.transpose() * (ray.origin - p.placement.t);
  const Vec3 dl = p.placement.R.transpose() * ray.direction;
  if (std::abs(dl.z()) < 1e-12) return std::nullopt;
  const double t = -ol.z() / dl.z();
  if (!(t > tmin)) return std::nullopt;
  const double x = ol.x() + t * dl.x();
  const double y = ol.y() + t * dl.y();
  if (x < 0.0 || y < 0.0 || x > p.width || y > p.height) return std::nullopt;
  return std::make_pair(t, Vec2(x, y));
}

double sample_texture(const GrayImage16& tex, double x, double y) {
  // Clamp-to-edge bilinear.
  x = std::clamp(x, 0.0, static_cast<double>(tex.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(tex.height - 1));
  const int x0 = std::min(static_cast<int>(x), tex.width - 1);
  const int y0 = std::min(static_cast<int>(y), tex.height - 1);
  const int x1 = std::min(x0 + 1, tex.width - 1);
  const int y1 = std::min(y0 + 1, tex.height - 1);
  const double ax = x - x0, ay = y - y0;
  const double top = (1 - ax) * tex.at(x0, y0) + ax * tex.at(x1, y0);
  const double bot = (1 - ax) * tex.at(x0, y1) + ax * tex.at(x1, y1);
  return ((1 - ay) * top + ay * bot) / 65535.0;
}

double surface_albedo(const SceneObject& obj, const SurfaceHit& hit) {
  const auto* p = std::get_if<PlaneGeom>(&obj.geometry);
  if (!p || !p->texture) return obj.material.albedo;
  const auto& tex = *p->texture;
  const double tx = hit.uv.x() / p->width * tex.width - 0.5;
  const double ty = hit.uv.y() / p->height * tex.height - 0.5;
  return obj.material.albedo * sample_texture(tex, tx, ty);
}

// Uniform in [lo, hi) from the top 53 bits; identical on every platform.
double uniform(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
  return lo + (hi - lo) * u;
}

}  // namespace

SceneTracer::SceneTracer(const Scene& scene) : scene_(scene) {
  bvh_.resize(scene.objects.size());
  for (std::size_t i = 0; i < scene.objects.size(); ++i)
    if (const auto* m = std::get_if<MeshGeom>(&scene.objects[i].geometry))
      if (m->mesh) bvh_[i] = std::make_unique<MeshBvh>(*m->mesh);
}

SceneTracer::~SceneTracer() = default;

std::optional<SurfaceHit> SceneTracer::intersect(const Ray& ray, double tmin) const {
  std::optional<SurfaceHit> best;
  double best_t = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scene_.objects.size(); ++i) {
    const auto& obj = scene_.objects[i];
    SurfaceHit h;
    h.object = static_cast<int>(i);
    if (const auto* s = std::get_if<SphereGeom>(&obj.geometry)) {
      const auto t = intersect_sphere(ray, *s, tmin);
      if (!t || *t >= best_t) continue;
      h.t = *t;
      h.point = ray.at(*t);
      h.normal = (h.point - s->center) / s->radius;
    } else if (const auto* p = std::get_if<PlaneGeom>(&obj.geometry)) {
      const auto r = intersect_plane(ray, *p, tmin);
      if (!r || r->first >= best_t) continue;
      h.t = r->first;
      h.point = ray.at(h.t);
      h.normal = p->placement.R.col(2);
      h.uv = r->second;
    } else {
      if (!bvh_[i]) continue;
      const auto th = bvh_[i]->intersect(ray.origin, ray.direction, tmin, best_t);
      if (!th || th->t >= best_t) continue;
      h.t = th->t;
      h.point = ray.at(h.t);
      h.normal = std::get<MeshGeom>(obj.geometry).mesh->face_normal(th->face);
    }
    if (h.normal.dot(ray.direction) > 0.0) h.normal = -h.normal;
    best_t = h.t;
    best = h;
  }
  return best;
}

bool SceneTracer::occluded(const Vec3& origin, const Vec3& dir, double tmin, double tmax) const {
  const Ray ray{origin, dir};
  for (std::size_t i = 0; i < scene_.objects.size(); ++i) {
    const auto& obj = scene_.objects[i];
    if (const auto* s = std::get_if<SphereGeom>(&obj.geometry)) {
      const auto t = intersect_sphere(ray, *s, tmin);
      if (t && *t < tmax) return true;
    } else if (const auto* p = std::get_if<PlaneGeom>(&obj.geometry)) {
      const auto r = intersect_plane(ray, *p, tmin);
      if (r && r->first < tmax) return true;
    } else if (bvh_[i] && bvh_[i]->occluded(origin, dir, tmin, tmax)) {
      return true;
    }
  }
  return false;
}

std::optional<SurfaceHit> intersect_scene(const Ray& ray, const Scene& scene) {
  return SceneTracer(scene).intersect(ray);
}

double specular_exponent(double roughness) {
  const double r = std::max(roughness, 1e-3);
  return std::max(0.0, 2.0 / (r * r * r * r) - 2.0);
}

double shade_brdf(const Material& m, double albedo, const Vec3& n, const Vec3& l, const Vec3& v) {
  const double nl = n.dot(l);
  if (nl <= 0.0) return 0.0;
  const Vec3 h = (l + v).normalized();
  const double nh = std::max(0.0, n.dot(h));
  const double e = specular_exponent(m.roughness);
  // Energy-normalized Blinn-Phong lobe.
  const double lobe = (e + 8.0) / (8.0 * kPi) * std::pow(nh, e);
  const double dielectric = albedo + m.specular * lobe;
  const double metal = albedo * lobe;
  return ((1.0 - m.metallic) * dielectric + m.metallic * metal) * nl;
}

FrameTransport::FrameTransport(const Scene& scene) {
  scene.validate();
  const auto& cam = scene.camera;
  width_ = cam.intrinsics.width;
  height_ = cam.intrinsics.height;
  ss_ = scene.render.supersample;
  proj_w_ = scene.projector.intrinsics.width;
  proj_h_ = scene.projector.intrinsics.height;
  const int per_pixel = ss_ * ss_;
  samples_.assign(static_cast<std::size_t>(width_) * height_ * per_pixel, Sample{});
  pixel_object_.assign(static_cast<std::size_t>(width_) * height_, -1);

  const SceneTracer tracer(scene);
  const auto& proj = scene.projector;
  const Vec3 proj_center = proj.pose.center();
  const auto mp = compose_projection(proj.intrinsics, proj.pose, DeviceRole::Projector);

  struct PanelSample {
    Vec3 pos;
    Vec3 normal;
    double power;
  };
  std::vector<PanelSample> panel_samples;
  double sky = 0.0;
  for (const auto& a : scene.ambients) {
    if (a.kind == AmbientKind::UniformSky) {
      sky += a.intensity;
      continue;
    }
    const Vec3 n = a.placement.R.col(2);
    for (int j = 0; j < a.samples; ++j)
      for (int i = 0; i < a.samples; ++i) {
        const Vec3 local(((i + 0.5) / a.samples - 0.5) * a.width, ((j + 0.5) / a.samples - 0.5) * a.height, 0.0);
        panel_samples.push_back({a.placement.R * local + a.placement.t, n, a.intensity / (a.samples * a.samples)});
      }
  }

  parallel_for(0, height_, [&](int y) {
    for (int x = 0; x < width_; ++x) {
      for (int sj = 0; sj < ss_; ++sj) {
        for (int si = 0; si < ss_; ++si) {
          const double u = ss_ == 1 ? x : x + (si + 0.5) / ss_ - 0.5;
          const double v = ss_ == 1 ? y : y + (sj + 0.5) / ss_ - 0.5;
          Sample& s = samples_[(static_cast<std::size_t>(y) * width_ + x) * per_pixel + sj * ss_ + si];
          const Ray ray = pixel_ray(cam.intrinsics, cam.pose, u, v);
          const auto hit = tracer.intersect(ray);
          if (!hit) continue;
          if (sj == ss_ / 2 && si == ss_ / 2) pixel_object_[static_cast<std::size_t>(y) * width_ + x] = hit->object;
          const auto& obj = scene.objects[hit->object];
          const double albedo = surface_albedo(obj, *hit);
          const Vec3 view = -ray.direction;

          double amb = sky * albedo * (1.0 - 0.5 * obj.material.ao_to_diffuse);
          for (const auto& ps : panel_samples) {
            Vec3 d = ps.pos - hit->point;
            const double dist = d.norm();
            d /= dist;
            const double emit_cos = -ps.normal.dot(d);
            if (emit_cos <= 0.0) continue;
            const double f = shade_brdf(obj.material, albedo, hit->normal, d, view);
            if (f <= 0.0) continue;
            if (tracer.occluded(hit->point, d, kShadowEps, dist - kShadowEps)) continue;
            amb += ps.power * emit_cos * f;
          }
          s.ambient = amb;

          const Vec3 xp = proj.pose.apply(hit->point);
          if (xp.z() <= 0.0) continue;
          const Vec2 uvp = project_point(mp, hit->point);
          if (uvp.x() < -0.5 || uvp.y() < -0.5 || uvp.x() > proj_w_ - 0.5 || uvp.y() > proj_h_ - 0.5) continue;
          Vec3 l = proj_center - hit->point;
          const double dist = l.norm();
          l /= dist;
          const double f = shade_brdf(obj.material, albedo, hit->normal, l, view);
          if (f <= 0.0) continue;
          if (tracer.occluded(hit->point, l, kShadowEps, dist - kShadowEps)) continue;
          double falloff = 1.0;
          if (proj.falloff == Falloff::InverseSquare) {
            const double r = proj.falloff_reference_mm / dist;
            falloff = r * r;
          }
          s.weight = proj.intensity * falloff * f;
          s.up = uvp.x();
          s.vp = uvp.y();
        }
      }
    }
  });
}

RasterF64 FrameTransport::radiance(const GrayImage16* pattern) const {
  if (pattern && (pattern->width != proj_w_ || pattern->height != proj_h_))
    throw Error(ErrorCode::DimensionMismatch, "pattern size differs from projector resolution");
  RasterF64 out(width_, height_);
  const int per_pixel = ss_ * ss_;
  parallel_for(0, height_, [&](int y) {
    for (int x = 0; x < width_; ++x) {
      const std::size_t base = (static_cast<std::size_t>(y) * width_ + x) * per_pixel;
      double acc = 0.0;
      for (int k = 0; k < per_pixel; ++k) {
        const Sample& s = samples_[base + k];
        double v = s.ambient;
        if (pattern && s.weight > 0.0) v += s.weight * sample_texture(*pattern, s.up, s.vp);
        acc += v;
      }
      out.data[static_cast<std::size_t>(y) * width_ + x] = acc / per_pixel;
    }
  });
  return out;
}

GrayImage16 FrameTransport::render(const GrayImage16* pattern) const {
  const auto r = radiance(pattern);
  GrayImage16 img(width_, height_);
  for (std::size_t i = 0; i < r.data.size(); ++i)
    img.data[i] = static_cast<std::uint16_t>(std::lround(std::clamp(r.data[i], 0.0, 1.0) * 65535.0));
  return img;
}

GrayImage16 render_frame(const Scene& scene, const GrayImage16* pattern) {
  if (pattern && (pattern->width != scene.projector.intrinsics.width ||
                  pattern->height != scene.projector.intrinsics.height))
    throw Error(ErrorCode::DimensionMismatch, "pattern size differs from projector resolution");
  return FrameTransport(scene).render(pattern);
}

void PoseProtocol::validate() const {
  if (count < 1) throw Error(ErrorCode::ConfigError, "pose count must be >= 1");
  if (translation_mm < 0 || tilt_min_deg < 0 || tilt_max_deg < tilt_min_deg || distance_mm <= 0)
    throw Error(ErrorCode::ConfigError, "pose bounds must be non-negative and ordered");
}

std::vector<RigidPose> generate_board_poses(const PoseProtocol& protocol, const CalibBoardSpec& spec) {
  protocol.validate();
  const auto report = board_report(spec);
  const double pitch = report.d_centers_sim_m * 1000.0;
  const Vec3 board_center((spec.cols - 1) * pitch / 4.0, (spec.rows - 1) * pitch / 2.0, 0.0);
  std::mt19937_64 rng(protocol.seed);
  std::vector<RigidPose> poses;
  const double deg = kPi / 180.0;
  for (int i = 0; i < protocol.count; ++i) {
    const double tx = uniform(rng, -protocol.translation_mm, protocol.translation_mm);
    const double ty = uniform(rng, -protocol.translation_mm, protocol.translation_mm);
    const double mag_x = uniform(rng, protocol.tilt_min_deg, protocol.tilt_max_deg);
    const double mag_y = uniform(rng, protocol.tilt_min_deg, protocol.tilt_max_deg);
    // Cycle through x-only, y-only and combined tilts with alternating signs
    // so the set spans both axes in both directions.
    const int mode = i % 3;
    const double sx = ((i / 3) % 2) ? -1.0 : 1.0;
    const double sy = ((i / 2) % 2) ? -1.0 : 1.0;
    const double ax = mode == 1 ? 0.0 : sx * mag_x * deg;
    const double ay = mode == 0 ? 0.0 : sy * mag_y * deg;
    RigidPose p;
    p.R = rotation_y(ay) * rotation_x(ax);
    p.t = Vec3(tx, ty, protocol.distance_mm) - p.R * board_center;
    poses.push_back(p);
  }
  return poses;
}

void place_board(SceneObject& board_object, const BoardReport& report, const RigidPose& board_to_world) {
  auto* plane = std::get_if<PlaneGeom>(&board_object.geometry);
  if (!plane) throw Error(ErrorCode::InvalidArgument, "board object must be a plane");
  RigidPose plane_to_board;
  plane_to_board.t = Vec3(-report.first_center_x_mm, -report.first_center_y_mm, 0.0);
  plane->placement = board_to_world * plane_to_board;
}

SceneObject make_board_object(const CalibBoardSpec& spec, const CalibBoard& board, const RigidPose& board_to_world,
                              const Material& material) {
  SceneObject obj;
  obj.name = "board";
  obj.material = material;
  PlaneGeom g;
  g.width = spec.plane_w_m * 1000.0;
  g.height = spec.plane_h_m * 1000.0;
  g.texture = std::make_shared<GrayImage16>(board.texture);
  obj.geometry = g;
  place_board(obj, board.report, board_to_world);
  return obj;
}

bool board_in_view(const Scene& scene, const CalibBoardSpec& spec, const RigidPose& board_to_world) {
  const auto& k = scene.camera.intrinsics;
  const auto m = compose_projection(k, scene.camera.pose);
  const double radius = board_report(spec).d_circle_sim_m * 1000.0 / 2.0;
  for (const auto& p : board_object_points(spec)) {
    const Vec3 w = board_to_world.apply(p);
    const double z = scene.camera.pose.apply(w).z();
    if (z <= 0.0) return false;
    const Vec2 uv = project_point(m, w);
    const double margin = k.fx * radius / z + 2.0;
    if (uv.x() < margin || uv.y() < margin || uv.x() > k.width - 1 - margin || uv.y() > k.height - 1 - margin)
      return false;
  }
  return true;
}

void capture_frames(const Scene& scene, std::span<const PatternEntry> patterns, const BoardPlacement* placement,
                    const FrameSink& sink, std::vector<std::string>* warnings) {
  if (patterns.empty()) throw Error(ErrorCode::InvalidArgument, "capture needs at least one pattern");
  const int n_poses = placement ? static_cast<int>(placement->poses.size()) : 1;
  if (placement && (placement->object < 0 || placement->object >= static_cast<int>(scene.objects.size())))
    throw Error(ErrorCode::InvalidArgument, "board object index out of range");
  for (int pose = 0; pose < n_poses; ++pose) {
    Scene posed = scene;
    if (placement) {
      place_board(posed.objects[placement->object], placement->report, placement->poses[pose]);
      if (warnings && !board_in_view(posed, placement->spec, placement->poses[pose]))
        warnings->push_back("PoseOutOfView: pose " + std::to_string(pose) + " leaves the camera frame");
    }
    const FrameTransport transport(posed);
    for (std::size_t i = 0; i < patterns.size(); ++i) sink(pose, i, transport.render(&patterns[i].image));
  }
}

std::vector<CaptureRecord> run_capture_session(const Scene& scene, std::span<const PatternEntry> patterns,
                                               const BoardPlacement* placement, const std::filesystem::path& out_dir,
                                               ImageFormat format, std::vector<std::string>* warnings) {
  std::filesystem::create_directories(out_dir);
  const char* ext = format == ImageFormat::Png ? ".png" : ".pgm";
  std::vector<CaptureRecord> records;
  std::string manifest;
  capture_frames(
      scene, patterns, placement,
      [&](int pose, std::size_t i, const GrayImage16& frame) {
        char dir[32];
        std::snprintf(dir, sizeof dir, "pose_%02d", pose);
        CaptureRecord rec{pose, patterns[i].id, std::string(dir) + "/" + patterns[i].id + ext,
                          hex64(image_hash(frame))};
        write_image(out_dir / rec.file, frame);
        nlohmann::json j = {{"pose", rec.pose}, {"pattern", rec.pattern}, {"file", rec.file}, {"hash", rec.hash}};
        manifest += j.dump() + "\n";
        records.push_back(std::move(rec));
      },
      warnings);
  write_text_file(out_dir / "manifest.jsonl", manifest);
  return records;
}

std::vector<CaptureRecord> read_capture_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + manifest.string());
  std::vector<CaptureRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("pose").get<int>(), j.at("pattern").get<std::string>(), j.at("file").get<std::string>(),
                     j.value("hash", std::string())});
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::IoError, manifest.string() + ": " + e.what());
    }
  }
  return out;
}

}  // namespace vfpp
