#include "featfuse/feature_io.hpp"

#include <cmath>

#include "featfuse/binary_io.hpp"

namespace featfuse::io {

namespace fs = std::filesystem;

namespace {

std::uint32_t CheckedU32(std::size_t value, const char* what) {
  if (value > 0xffffffffu) throw StructuralError(std::string(what) + " does not fit in uint32");
  return static_cast<std::uint32_t>(value);
}

}  // namespace

void WriteDenseFeatures(const fs::path& path, const DenseFeatureMap& map) {
  ByteWriter w;
  w.Put<std::uint32_t>(CheckedU32(static_cast<std::size_t>(map.grid_height), "H_f"));
  w.Put<std::uint32_t>(CheckedU32(static_cast<std::size_t>(map.grid_width), "W_f"));
  w.Put<std::uint32_t>(CheckedU32(static_cast<std::size_t>(map.dim), "C"));
  w.PutArray<float>(map.data);
  WriteBytes(path, w.bytes());
}

DenseFeatureMap ReadDenseFeatures(const fs::path& path) {
  const auto bytes = ReadBytes(path);
  ByteReader r(bytes, path.string());
  const auto gh = r.Get<std::uint32_t>();
  const auto gw = r.Get<std::uint32_t>();
  const auto c = r.Get<std::uint32_t>();
  if (gh == 0 || gw == 0 || c == 0) throw IoError(path.string() + ": empty dense feature header");
  DenseFeatureMap map;
  map.grid_height = static_cast<int>(gh);
  map.grid_width = static_cast<int>(gw);
  map.dim = static_cast<int>(c);
  map.data = r.GetArray<float>(static_cast<std::size_t>(gh) * gw * c);
  r.ExpectEnd();
  return map;
}

void WriteObjectFeatures(const fs::path& path, const ObjectFeatures& features) {
  ByteWriter w;
  w.Put<std::uint32_t>(CheckedU32(static_cast<std::size_t>(features.num_views()), "V"));
  w.Put<std::uint32_t>(CheckedU32(static_cast<std::size_t>(features.num_objects()), "N"));
  w.Put<std::uint32_t>(CheckedU32(static_cast<std::size_t>(features.dim()), "C"));
  const auto& valid = features.raw_valid();
  std::vector<std::uint8_t> bitmap((valid.size() + 7) / 8, 0);
  for (std::size_t j = 0; j < valid.size(); ++j) {
    if (valid[j]) bitmap[j / 8] |= static_cast<std::uint8_t>(1u << (j % 8));
  }
  w.PutArray<std::uint8_t>(bitmap);
  w.PutArray<float>(features.raw_data());
  WriteBytes(path, w.bytes());
}

ObjectFeatures ReadObjectFeatures(const fs::path& path) {
  const auto bytes = ReadBytes(path);
  ByteReader r(bytes, path.string());
  const int v = static_cast<int>(r.Get<std::uint32_t>());
  const int n = static_cast<int>(r.Get<std::uint32_t>());
  const int c = static_cast<int>(r.Get<std::uint32_t>());
  if (c == 0) throw IoError(path.string() + ": zero feature dim");
  const std::size_t slots = static_cast<std::size_t>(v) * n;
  const auto bitmap = r.GetArray<std::uint8_t>((slots + 7) / 8);
  const auto data = r.GetArray<float>(slots * c);
  r.ExpectEnd();
  ObjectFeatures out(v, n, c);
  for (int vi = 0; vi < v; ++vi) {
    for (int ni = 1; ni <= n; ++ni) {
      const std::size_t j = static_cast<std::size_t>(vi) * n + (ni - 1);
      if (!(bitmap[j / 8] & (1u << (j % 8)))) continue;
      out.Set(vi, ni, std::span<const float>(data.data() + j * c, static_cast<std::size_t>(c)));
    }
  }
  return out;
}

void WriteFeatureCloud(const fs::path& path, const FeatureCloud& cloud) {
  cloud.Validate();
  ByteWriter w;
  w.Put<std::uint32_t>(CheckedU32(cloud.size(), "M"));
  w.Put<std::uint32_t>(CheckedU32(static_cast<std::size_t>(cloud.dim), "C"));
  for (const auto& p : cloud.cloud.points) {
    w.Put<float>(static_cast<float>(p.x()));
    w.Put<float>(static_cast<float>(p.y()));
    w.Put<float>(static_cast<float>(p.z()));
  }
  w.PutArray<float>(cloud.features);
  w.PutArray<std::uint8_t>(cloud.flags);
  WriteBytes(path, w.bytes());
}

FeatureCloud ReadFeatureCloud(const fs::path& path, Provenance provenance) {
  const auto bytes = ReadBytes(path);
  ByteReader r(bytes, path.string());
  const std::size_t m = r.Get<std::uint32_t>();
  const int c = static_cast<int>(r.Get<std::uint32_t>());
  if (c == 0) throw IoError(path.string() + ": zero feature dim");
  const auto xyz = r.GetArray<float>(m * 3);
  PointCloud cloud;
  cloud.points.reserve(m);
  for (std::size_t i = 0; i < m; ++i) cloud.points.emplace_back(xyz[3 * i], xyz[3 * i + 1], xyz[3 * i + 2]);
  FeatureCloud out(std::move(cloud), c, provenance);
  out.features = r.GetArray<float>(m * static_cast<std::size_t>(c));
  out.flags = r.GetArray<std::uint8_t>(m);
  r.ExpectEnd();
  out.Validate();
  return out;
}

}  // namespace featfuse::io
