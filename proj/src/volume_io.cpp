#include "tvs/volume_io.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace tvs {
namespace {

void write_file(const std::string& path, const char* data, std::size_t size, bool binary) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, binary ? std::ios::binary : std::ios::out);
    if (!out) throw ValidationError("cannot write " + tmp);
    out.write(data, static_cast<std::streamsize>(size));
    if (!out) throw ValidationError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void write_sidecar(const std::string& path, const std::array<int, 3>& dims, const Vec3& origin,
                   const Vec3& spacing, const char* kind) {
  nlohmann::json j;
  j["kind"] = kind;
  j["dims"] = {dims[0], dims[1], dims[2]};
  j["origin_mm"] = {origin.x(), origin.y(), origin.z()};
  j["spacing_mm"] = {spacing.x(), spacing.y(), spacing.z()};
  j["dtype"] = "uint8";
  j["order"] = "x-fastest";
  atomic_write_text(path, j.dump(2) + "\n");
}

}  // namespace

void atomic_write_text(const std::string& path, const std::string& content) {
  write_file(path, content.data(), content.size(), false);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_label_grid(const LabelGrid& grid, const std::string& base_path) {
  write_file(base_path + ".raw", reinterpret_cast<const char*>(grid.labels.data()),
             grid.labels.size(), true);
  write_sidecar(base_path + ".json", grid.dims, grid.origin_mm, grid.spacing_mm, "tissue_labels");
}

void write_label_volume(const LabelVolume& vol, const std::string& base_path) {
  write_file(base_path + ".raw", reinterpret_cast<const char*>(vol.occ.data()), vol.occ.size(),
             true);
  write_sidecar(base_path + ".json", vol.dims, vol.origin_mm, vol.spacing_mm, "binary_occupancy");
}

void write_intensity_volume(const IntensityVolume& vol, const std::string& base_path) {
  write_file(base_path + ".raw", reinterpret_cast<const char*>(vol.values.data()),
             vol.values.size(), true);
  write_sidecar(base_path + ".json", vol.dims, vol.origin_mm, vol.spacing_mm, "mean_intensity");
}

void write_pgm(const Image8& img, const std::string& path) {
  std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                       "\n255\n";
  std::string blob = header;
  blob.append(reinterpret_cast<const char*>(img.data.data()), img.data.size());
  write_file(path, blob.data(), blob.size(), true);
}

}  // namespace tvs
