#include "featfuse/scene_io.hpp"

#include <cstdio>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "featfuse/binary_io.hpp"

namespace featfuse::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path ManifestPath(const fs::path& p) {
  return fs::is_directory(p) ? p / kSceneManifestName : p;
}

json ParseJson(const fs::path& path) {
  try {
    return json::parse(ReadText(path));
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

template <typename T>
T Field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ValidationError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(where + ": field '" + key + "': " + e.what());
  }
}

}  // namespace

Scene LoadScene(const fs::path& manifest_or_dir, double coordinate_scale) {
  const fs::path manifest = ManifestPath(manifest_or_dir);
  const fs::path root = fs::absolute(manifest).parent_path();
  const json j = ParseJson(manifest);
  const std::string where = manifest.string();

  Scene scene;
  scene.num_objects = Field<int>(j, "num_objects", where);
  scene.object_instance_ids = Field<std::vector<int>>(j, "object_instance_ids", where);
  if (j.contains("object_features")) scene.object_features_path = (root / j["object_features"].get<std::string>()).string();
  if (j.contains("bank")) scene.bank_path = (root / j["bank"].get<std::string>()).string();

  const json& views = j.at("views");
  for (const json& jv : views) {
    const std::string vwhere = where + " view";
    View view;
    view.id = Field<int>(jv, "id", vwhere);
    const json& ji = jv.at("intrinsics");
    view.intrinsics.fx = Field<double>(ji, "fx", vwhere);
    view.intrinsics.fy = Field<double>(ji, "fy", vwhere);
    view.intrinsics.cx = Field<double>(ji, "cx", vwhere);
    view.intrinsics.cy = Field<double>(ji, "cy", vwhere);
    view.intrinsics.width = Field<int>(ji, "width", vwhere);
    view.intrinsics.height = Field<int>(ji, "height", vwhere);
    view.intrinsics.Validate();
    const auto pose = Field<std::vector<double>>(jv, "pose", vwhere);
    view.pose = Pose::FromRowMajor(pose);

    const int w = view.intrinsics.width;
    const int h = view.intrinsics.height;
    const std::size_t count = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    view.depth = DepthMap(w, h, ReadRawArray<float>(root / Field<std::string>(jv, "depth", vwhere), count));
    view.mask = InstanceMask(w, h, ReadRawArray<std::uint16_t>(root / Field<std::string>(jv, "mask", vwhere), count));
    if (jv.contains("rgb")) view.rgb_path = (root / jv["rgb"].get<std::string>()).string();
    if (jv.contains("dense_features")) {
      view.dense_features_path = (root / jv["dense_features"].get<std::string>()).string();
    }
    scene.views.push_back(std::move(view));
  }
  scene.Validate();
  UpscaleScene(scene, coordinate_scale);
  return scene;
}

namespace {

std::string Relative(const std::optional<std::string>& path, const fs::path& root) {
  const fs::path p(*path);
  if (p.is_relative()) return p.generic_string();
  return p.lexically_relative(fs::absolute(root)).generic_string();
}

}  // namespace

void SaveScene(const Scene& scene, const fs::path& dir) {
  scene.Validate();
  fs::create_directories(dir / "views");
  json j;
  j["num_objects"] = scene.num_objects;
  j["object_instance_ids"] = scene.object_instance_ids;
  if (scene.object_features_path) j["object_features"] = Relative(scene.object_features_path, dir);
  if (scene.bank_path) j["bank"] = Relative(scene.bank_path, dir);
  j["views"] = json::array();
  for (const View& view : scene.views) {
    char stem[32];
    std::snprintf(stem, sizeof(stem), "views/%03d", view.id);
    const std::string depth_rel = std::string(stem) + "_depth.f32";
    const std::string mask_rel = std::string(stem) + "_mask.u16";
    WriteRawArray<float>(dir / depth_rel, view.depth.data());
    WriteRawArray<std::uint16_t>(dir / mask_rel, view.mask.data());

    json jv;
    jv["id"] = view.id;
    jv["intrinsics"] = {{"fx", view.intrinsics.fx}, {"fy", view.intrinsics.fy},
                        {"cx", view.intrinsics.cx}, {"cy", view.intrinsics.cy},
                        {"width", view.intrinsics.width}, {"height", view.intrinsics.height}};
    const auto pose = view.pose.ToRowMajor();
    jv["pose"] = std::vector<double>(pose.begin(), pose.end());
    jv["depth"] = depth_rel;
    jv["mask"] = mask_rel;
    if (view.rgb_path) jv["rgb"] = Relative(view.rgb_path, dir);
    if (view.dense_features_path) jv["dense_features"] = Relative(view.dense_features_path, dir);
    j["views"].push_back(std::move(jv));
  }
  WriteText(dir / kSceneManifestName, j.dump(2) + "\n");
}

void WritePointsBinary(const fs::path& path, const PointCloud& cloud) {
  std::vector<float> flat;
  flat.reserve(cloud.size() * 3);
  for (const auto& p : cloud.points) {
    flat.push_back(static_cast<float>(p.x()));
    flat.push_back(static_cast<float>(p.y()));
    flat.push_back(static_cast<float>(p.z()));
  }
  WriteRawArray<float>(path, flat);
}

PointCloud ReadPointsBinary(const fs::path& path) {
  const auto bytes = ReadBytes(path);
  if (bytes.size() % (3 * sizeof(float)) != 0) throw IoError(path.string() + ": not an M x 3 float32 file");
  const auto flat = ReadRawArray<float>(path, bytes.size() / sizeof(float));
  PointCloud cloud;
  for (std::size_t i = 0; i + 2 < flat.size(); i += 3) cloud.points.emplace_back(flat[i], flat[i + 1], flat[i + 2]);
  return cloud;
}

void WritePly(const fs::path& path, const PointCloud& cloud,
              std::span<const std::array<std::uint8_t, 3>> colors) {
  if (colors.empty() && cloud.has_colors()) colors = cloud.colors;
  if (!colors.empty() && colors.size() != cloud.size()) throw StructuralError("PLY color count differs from point count");
  std::ostringstream out;
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n";
  if (!colors.empty()) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";
  out.precision(std::numeric_limits<float>::max_digits10);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    out << static_cast<float>(p.x()) << ' ' << static_cast<float>(p.y()) << ' ' << static_cast<float>(p.z());
    if (!colors.empty()) {
      out << ' ' << int(colors[i][0]) << ' ' << int(colors[i][1]) << ' ' << int(colors[i][2]);
    }
    out << '\n';
  }
  WriteText(path, out.str());
}

void WriteLabels(const fs::path& path, std::span<const int> labels) {
  std::vector<std::uint16_t> raw;
  raw.reserve(labels.size());
  for (int l : labels) {
    if (l < 0 || l > std::numeric_limits<std::uint16_t>::max()) throw ParameterError("label does not fit uint16");
    raw.push_back(static_cast<std::uint16_t>(l));
  }
  WriteRawArray<std::uint16_t>(path, raw);
}

std::vector<int> ReadLabels(const fs::path& path) {
  const auto bytes = ReadBytes(path);
  if (bytes.size() % 2 != 0) throw IoError(path.string() + ": odd size for uint16 labels");
  const auto raw = ReadRawArray<std::uint16_t>(path, bytes.size() / 2);
  return {raw.begin(), raw.end()};
}

}  // namespace featfuse::io
