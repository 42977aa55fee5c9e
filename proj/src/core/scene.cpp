#include "scene.hpp"

#include <fstream>

#include "error.hpp"
#include "io_util.hpp"
#include "ply.hpp"

namespace vfpp {

using nlohmann::json;

namespace {

void check_unit_range(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0))
    throw Error(ErrorCode::InvalidArgument, std::string("material ") + name + " must be in [0, 1]");
}

Vec3 vec3_from(const json& j, double scale) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::ConfigError, "expected a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>()) * scale;
}

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

double unit_scale(const json& j, double inherited) {
  if (!j.contains("unit")) return inherited;
  const auto u = j.at("unit").get<std::string>();
  if (u == "mm") return 1.0;
  if (u == "m") return 1000.0;
  throw Error(ErrorCode::ConfigError, "unknown unit '" + u + "' (expected mm or m)");
}

/// Accepts {"r","t"} or {"position","look_at"[,"down"]}.
RigidPose device_pose_from(const json& j, double scale) {
  if (j.contains("position")) {
    const Vec3 down = j.contains("down") ? vec3_from(j["down"], 1.0) : Vec3(0, 1, 0);
    return look_at_pose(vec3_from(j["position"], scale), vec3_from(j.at("look_at"), scale), down);
  }
  return pose_from_json(j, scale);
}

/// Placements map local to world. Given as {"r","t"} or as a look-at frame
/// whose local +z faces `look_at`.
RigidPose placement_from(const json& j, double scale) {
  if (j.contains("position")) return device_pose_from(j, scale).inverse();
  return pose_from_json(j, scale);
}

Material material_from(const json& j) {
  Material m;
  m.albedo = j.value("albedo", m.albedo);
  m.roughness = j.value("roughness", m.roughness);
  m.specular = j.value("specular", m.specular);
  m.metallic = j.value("metallic", m.metallic);
  m.ao_to_diffuse = j.value("ao_to_diffuse", m.ao_to_diffuse);
  m.validate();
  return m;
}

json material_json(const Material& m) {
  return {{"albedo", m.albedo},
          {"roughness", m.roughness},
          {"specular", m.specular},
          {"metallic", m.metallic},
          {"ao_to_diffuse", m.ao_to_diffuse}};
}

}  // namespace

void Material::validate() const {
  check_unit_range(albedo, "albedo");
  check_unit_range(roughness, "roughness");
  check_unit_range(specular, "specular");
  check_unit_range(metallic, "metallic");
  check_unit_range(ao_to_diffuse, "ao_to_diffuse");
}

void AmbientLight::validate() const {
  if (!(intensity >= 0.0)) throw Error(ErrorCode::InvalidArgument, "ambient intensity must be >= 0");
  if (kind == AmbientKind::RectPanel) {
    if (samples < 1) throw Error(ErrorCode::InvalidArgument, "rect panel samples must be >= 1");
    if (!(width > 0.0 && height > 0.0)) throw Error(ErrorCode::InvalidArgument, "rect panel extents must be > 0");
    placement.validate();
  }
}

void Scene::validate() const {
  camera.intrinsics.validate();
  camera.pose.validate();
  projector.intrinsics.validate();
  projector.pose.validate();
  if (!(projector.intensity >= 0.0)) throw Error(ErrorCode::InvalidArgument, "projector intensity must be >= 0");
  if (objects.empty()) throw Error(ErrorCode::InvalidArgument, "scene has no objects");
  if (render.supersample < 1) throw Error(ErrorCode::InvalidArgument, "supersample must be >= 1");
  for (const auto& a : ambients) a.validate();
  for (const auto& o : objects) {
    o.material.validate();
    if (const auto* s = std::get_if<SphereGeom>(&o.geometry)) {
      if (!(s->radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "sphere radius must be > 0");
    } else if (const auto* p = std::get_if<PlaneGeom>(&o.geometry)) {
      p->placement.validate();
      if (!(p->width > 0.0 && p->height > 0.0)) throw Error(ErrorCode::InvalidArgument, "plane extents must be > 0");
    } else {
      const auto& m = std::get<MeshGeom>(o.geometry);
      if (!m.mesh) throw Error(ErrorCode::InvalidArgument, "mesh object without mesh data");
      m.mesh->validate();
    }
  }
}

int Scene::find_object(const std::string& name) const {
  for (std::size_t i = 0; i < objects.size(); ++i)
    if (objects[i].name == name) return static_cast<int>(i);
  return -1;
}

RigidPose look_at_pose(const Vec3& position, const Vec3& target, const Vec3& down) {
  const Vec3 z = (target - position).normalized();
  Vec3 x = down.cross(z);
  if (x.norm() < 1e-9) throw Error(ErrorCode::InvalidArgument, "look-at direction parallel to the down vector");
  x.normalize();
  const Vec3 y = z.cross(x);
  RigidPose p;
  p.R.row(0) = x.transpose();
  p.R.row(1) = y.transpose();
  p.R.row(2) = z.transpose();
  p.t = -p.R * position;
  return p;
}

json intrinsics_to_json(const Intrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"ox", k.ox}, {"oy", k.oy}, {"width", k.width}, {"height", k.height}};
}

Intrinsics intrinsics_from_json(const json& j) {
  Intrinsics k;
  k.fx = j.at("fx").get<double>();
  k.fy = j.at("fy").get<double>();
  k.ox = j.at("ox").get<double>();
  k.oy = j.at("oy").get<double>();
  k.width = j.at("width").get<int>();
  k.height = j.at("height").get<int>();
  if (j.contains("distortion")) {
    for (const auto& d : j["distortion"])
      if (d.get<double>() != 0.0) throw Error(ErrorCode::ConfigError, "lens distortion coefficients must be zero");
  }
  k.validate();
  return k;
}

json pose_to_json(const RigidPose& p) {
  json r = json::array();
  for (int i = 0; i < 3; ++i)
    for (int c = 0; c < 3; ++c) r.push_back(p.R(i, c));
  return {{"r", r}, {"t", vec3_json(p.t)}, {"unit", "mm"}};
}

RigidPose pose_from_json(const json& j, double scale) {
  RigidPose p;
  const auto& r = j.at("r");
  if (!r.is_array() || r.size() != 9) throw Error(ErrorCode::ConfigError, "pose 'r' must have 9 entries");
  for (int i = 0; i < 9; ++i) p.R(i / 3, i % 3) = r[i].get<double>();
  p.t = vec3_from(j.at("t"), unit_scale(j, scale));
  p.validate();
  return p;
}

Scene scene_from_json(const json& j, const std::filesystem::path& base_dir) {
  try {
    const double s = unit_scale(j, 1.0);
    Scene sc;
    if (j.contains("camera")) {
      const auto& c = j["camera"];
      sc.camera.intrinsics = intrinsics_from_json(c.at("intrinsics"));
      if (c.contains("pose")) sc.camera.pose = device_pose_from(c["pose"], s);
    }
    if (j.contains("projector")) {
      const auto& p = j["projector"];
      if (p.contains("intrinsics")) sc.projector.intrinsics = intrinsics_from_json(p["intrinsics"]);
      if (p.contains("pose")) sc.projector.pose = device_pose_from(p["pose"], s);
      sc.projector.intensity = p.value("intensity", sc.projector.intensity);
      const auto fo = p.value("falloff", std::string("none"));
      if (fo == "none")
        sc.projector.falloff = Falloff::None;
      else if (fo == "inverse_square")
        sc.projector.falloff = Falloff::InverseSquare;
      else
        throw Error(ErrorCode::ConfigError, "unknown falloff '" + fo + "'");
      if (p.contains("falloff_reference")) sc.projector.falloff_reference_mm = p["falloff_reference"].get<double>() * s;
    }
    for (const auto& a : j.value("ambients", json::array())) {
      AmbientLight al;
      const auto kind = a.at("kind").get<std::string>();
      al.intensity = a.value("intensity", al.intensity);
      if (kind == "uniform_sky") {
        al.kind = AmbientKind::UniformSky;
      } else if (kind == "rect_panel") {
        al.kind = AmbientKind::RectPanel;
        al.placement = placement_from(a.at("pose"), s);
        al.width = a.at("width").get<double>() * s;
        al.height = a.at("height").get<double>() * s;
        al.samples = a.value("samples", al.samples);
      } else {
        throw Error(ErrorCode::ConfigError, "unknown ambient kind '" + kind + "'");
      }
      sc.ambients.push_back(al);
    }
    for (const auto& o : j.value("objects", json::array())) {
      SceneObject obj;
      obj.name = o.value("name", std::string("object") + std::to_string(sc.objects.size()));
      if (o.contains("material")) obj.material = material_from(o["material"]);
      if (o.contains("sphere")) {
        SphereGeom g;
        g.center = vec3_from(o["sphere"].at("center"), s);
        g.radius = o["sphere"].at("radius").get<double>() * s;
        obj.geometry = g;
      } else if (o.contains("plane")) {
        const auto& pj = o["plane"];
        PlaneGeom g;
        g.placement = placement_from(pj.at("pose"), s);
        g.width = pj.at("width").get<double>() * s;
        g.height = pj.at("height").get<double>() * s;
        if (pj.contains("texture")) {
          g.texture_path = pj["texture"].get<std::string>();
          g.texture = std::make_shared<GrayImage16>(read_image(resolve_path(base_dir, g.texture_path)));
        }
        obj.geometry = g;
      } else if (o.contains("mesh")) {
        const auto& mj = o["mesh"];
        MeshGeom g;
        g.mesh_path = mj.at("ply").get<std::string>();
        auto mesh = read_ply_mesh(resolve_path(base_dir, g.mesh_path));
        const double ms = unit_scale(mj, 1.0);
        for (auto& v : mesh.vertices) v *= ms;
        g.mesh = std::make_shared<TriangleMesh>(std::move(mesh));
        obj.geometry = g;
      } else {
        throw Error(ErrorCode::ConfigError, "object '" + obj.name + "' has no sphere, plane or mesh geometry");
      }
      sc.objects.push_back(std::move(obj));
    }
    if (j.contains("render")) sc.render.supersample = j["render"].value("supersample", 1);
    return sc;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("scene: ") + e.what());
  }
}

json scene_to_json(const Scene& sc) {
  json j;
  j["version"] = 1;
  j["unit"] = "mm";
  j["camera"] = {{"intrinsics", intrinsics_to_json(sc.camera.intrinsics)}, {"pose", pose_to_json(sc.camera.pose)}};
  j["projector"] = {{"intrinsics", intrinsics_to_json(sc.projector.intrinsics)},
                    {"pose", pose_to_json(sc.projector.pose)},
                    {"intensity", sc.projector.intensity},
                    {"falloff", sc.projector.falloff == Falloff::None ? "none" : "inverse_square"},
                    {"falloff_reference", sc.projector.falloff_reference_mm}};
  j["ambients"] = json::array();
  for (const auto& a : sc.ambients) {
    json aj = {{"intensity", a.intensity}};
    if (a.kind == AmbientKind::UniformSky) {
      aj["kind"] = "uniform_sky";
    } else {
      aj["kind"] = "rect_panel";
      aj["pose"] = pose_to_json(a.placement);
      aj["width"] = a.width;
      aj["height"] = a.height;
      aj["samples"] = a.samples;
    }
    j["ambients"].push_back(aj);
  }
  j["objects"] = json::array();
  for (const auto& o : sc.objects) {
    json oj = {{"name", o.name}, {"material", material_json(o.material)}};
    if (const auto* s = std::get_if<SphereGeom>(&o.geometry)) {
      oj["sphere"] = {{"center", vec3_json(s->center)}, {"radius", s->radius}};
    } else if (const auto* p = std::get_if<PlaneGeom>(&o.geometry)) {
      oj["plane"] = {{"pose", pose_to_json(p->placement)}, {"width", p->width}, {"height", p->height}};
      if (!p->texture_path.empty()) oj["plane"]["texture"] = p->texture_path;
    } else {
      oj["mesh"] = {{"ply", std::get<MeshGeom>(o.geometry).mesh_path}};
    }
    j["objects"].push_back(oj);
  }
  j["render"] = {{"supersample", sc.render.supersample}};
  return j;
}

Scene load_scene(const std::filesystem::path& path) {
  return scene_from_json(read_json_file(path), path.parent_path());
}

void save_scene(const std::filesystem::path& path, const Scene& scene) { write_json_file(path, scene_to_json(scene)); }

Scene default_rig(int camera_size) {
  Scene sc;
  // Horizontal field of view of a 50 mm lens on a 20.9995 mm aperture.
  const double f = camera_size * 50.0 / 20.9995;
  const double c = (camera_size - 1) / 2.0;
  sc.camera.intrinsics = Intrinsics{f, f, c, c, camera_size, camera_size};
  sc.camera.pose = RigidPose::identity();
  sc.projector.pose = look_at_pose(Vec3(-125.0, 100.0, 0.0), Vec3(0.0, 0.0, 500.0));
  sc.projector.intensity = 0.8;
  sc.ambients.push_back(AmbientLight{AmbientKind::UniformSky, 0.02, {}, 0, 0, 1});
  return sc;
}

}  // namespace vfpp
