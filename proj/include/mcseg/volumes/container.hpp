#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mcseg/core/common.hpp"
#include "mcseg/volumes/types.hpp"

// Volume container: a text header file (the given path) plus a raw payload
// sidecar at <path>.raw holding little-endian float32 voxels in x-fastest
// order. One canonical layout keeps golden files unambiguous and the
// write -> read round trip bit-exact.

namespace mcseg {

namespace detail {

inline std::string payload_path(const std::string& header_path) {
  return header_path + ".raw";
}

inline std::uint32_t to_le_bits(float v) {
  std::uint32_t u = std::bit_cast<std::uint32_t>(v);
  if constexpr (std::endian::native == std::endian::big)
    u = __builtin_bswap32(u);
  return u;
}

inline float from_le_bits(std::uint32_t u) {
  if constexpr (std::endian::native == std::endian::big)
    u = __builtin_bswap32(u);
  return std::bit_cast<float>(u);
}

inline std::string format_double(double v) {
  std::ostringstream oss;
  oss.precision(17);
  oss << v;
  return oss.str();
}

}  // namespace detail

struct ContainerHeader {
  Dim3 shape;
  Spacing3 spacing;
  std::string dtype = "f32";
  std::string order = "le-xfastest";
};

inline void write_container(const std::string& path, const Dim3& shape,
                            const Spacing3& spacing, const float* payload,
                            std::int64_t count) {
  check_dims_positive(shape);
  check_spacing_positive(spacing);
  require(count == shape.voxels(), "payload has ", count, " values, shape needs ",
          shape.voxels());
  for (std::int64_t i = 0; i < count; ++i)
    require(std::isfinite(payload[i]), "refusing to write non-finite voxel at index ", i);

  std::ofstream hdr(path, std::ios::trunc);
  require(hdr.good(), "cannot open ", path, " for writing");
  hdr << "mcseg-volume v1\n";
  hdr << "shape = " << shape.x << " " << shape.y << " " << shape.z << "\n";
  hdr << "spacing = " << detail::format_double(spacing.x) << " "
      << detail::format_double(spacing.y) << " " << detail::format_double(spacing.z) << "\n";
  hdr << "dtype = f32\n";
  hdr << "order = le-xfastest\n";
  hdr.close();
  require(hdr.good(), "failed writing header ", path);

  std::ofstream raw(detail::payload_path(path), std::ios::trunc | std::ios::binary);
  require(raw.good(), "cannot open ", detail::payload_path(path), " for writing");
  std::vector<std::uint32_t> le(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) le[i] = detail::to_le_bits(payload[i]);
  raw.write(reinterpret_cast<const char*>(le.data()), count * 4);
  raw.close();
  require(raw.good(), "failed writing payload ", detail::payload_path(path));
}

inline ContainerHeader read_container_header(const std::string& path) {
  std::ifstream hdr(path);
  require(hdr.good(), "cannot open container header ", path);
  std::string magic;
  std::getline(hdr, magic);
  require(magic == "mcseg-volume v1", path, ": not a volume container (bad magic line)");

  ContainerHeader out;
  bool saw_shape = false, saw_spacing = false, saw_dtype = false, saw_order = false;
  std::string line;
  while (std::getline(hdr, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, path, ": malformed header line '", line, "'");
    std::istringstream key_s(line.substr(0, eq));
    std::string key;
    key_s >> key;
    std::istringstream val(line.substr(eq + 1));
    if (key == "shape") {
      val >> out.shape.x >> out.shape.y >> out.shape.z;
      require(!val.fail(), path, ": malformed shape");
      saw_shape = true;
    } else if (key == "spacing") {
      val >> out.spacing.x >> out.spacing.y >> out.spacing.z;
      require(!val.fail(), path, ": malformed spacing");
      saw_spacing = true;
    } else if (key == "dtype") {
      val >> out.dtype;
      saw_dtype = true;
    } else if (key == "order") {
      val >> out.order;
      saw_order = true;
    } else {
      fail(path, ": unknown header key '", key, "'");
    }
  }
  require(saw_shape && saw_spacing && saw_dtype && saw_order,
          path, ": header missing one of shape/spacing/dtype/order");
  require(out.dtype == "f32", path, ": unsupported dtype '", out.dtype, "'");
  require(out.order == "le-xfastest", path, ": unsupported order '", out.order, "'");
  check_dims_positive(out.shape);
  check_spacing_positive(out.spacing);
  return out;
}

inline Volume read_volume(const std::string& path) {
  const ContainerHeader h = read_container_header(path);
  const std::string rawp = detail::payload_path(path);
  std::ifstream raw(rawp, std::ios::binary | std::ios::ate);
  require(raw.good(), "cannot open payload ", rawp);
  const std::int64_t bytes = static_cast<std::int64_t>(raw.tellg());
  const std::int64_t expected = h.shape.voxels() * 4;
  require(bytes == expected, rawp, ": payload length ", bytes, " bytes, header shape needs ",
          expected);
  raw.seekg(0);

  Volume v(h.shape, h.spacing);
  std::vector<std::uint32_t> le(static_cast<std::size_t>(h.shape.voxels()));
  raw.read(reinterpret_cast<char*>(le.data()), expected);
  require(raw.good(), "failed reading payload ", rawp);
  for (std::size_t i = 0; i < le.size(); ++i) {
    v.data[i] = detail::from_le_bits(le[i]);
    require(std::isfinite(v.data[i]), rawp, ": non-finite voxel at index ", i);
  }
  return v;
}

inline void write_volume(const Volume& v, const std::string& path) {
  v.validate();
  write_container(path, v.dims, v.spacing, v.data.data(), static_cast<std::int64_t>(v.data.size()));
}

inline LabelMask read_mask(const std::string& path) {
  const Volume v = read_volume(path);
  LabelMask m(v.dims, v.spacing);
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    const float f = v.data[i];
    require(f == 0.0f || f == 1.0f, path, ": mask voxel ", i, " is ", f, ", expected 0 or 1");
    m.data[i] = static_cast<std::uint8_t>(f);
  }
  return m;
}

inline void write_mask(const LabelMask& m, const std::string& path) {
  m.validate();
  std::vector<float> f(m.data.size());
  for (std::size_t i = 0; i < m.data.size(); ++i) f[i] = static_cast<float>(m.data[i]);
  write_container(path, m.dims, m.spacing, f.data(), static_cast<std::int64_t>(f.size()));
}

inline ProbabilityMap read_probability_map(const std::string& path,
                                           MapRole role = MapRole::ensemble) {
  const Volume v = read_volume(path);
  ProbabilityMap p(v.dims, role, v.spacing);
  p.data = v.data;
  p.validate();
  return p;
}

inline void write_probability_map(const ProbabilityMap& p, const std::string& path) {
  p.validate();
  write_container(path, p.dims, p.spacing, p.data.data(), static_cast<std::int64_t>(p.data.size()));
}

}  // namespace mcseg
