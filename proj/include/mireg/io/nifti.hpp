#pragma once

// Minimal single-file NIfTI-1 (.nii / .nii.gz) support: axis-aligned grids,
// uint8 / int16 / float32 voxels, 3D scalar images and 5D vector fields.

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "mireg/image.hpp"

namespace mireg::io {

inline constexpr int kNiftiHeaderSize = 348;
inline constexpr int kNiftiVoxOffset = 352;
inline constexpr std::int16_t kDtUint8 = 2;
inline constexpr std::int16_t kDtInt16 = 4;
inline constexpr std::int16_t kDtFloat32 = 16;
inline constexpr std::int16_t kIntentVector = 1007;

struct NiftiHeaderSubset {
  std::array<std::int16_t, 8> dim{};
  std::int16_t datatype = kDtFloat32;
  std::int16_t intent_code = 0;
  std::array<float, 8> pixdim{};
  float vox_offset = kNiftiVoxOffset;
  float scl_slope = 0.0f;
  float scl_inter = 0.0f;
  std::int16_t qform_code = 0;
  std::int16_t sform_code = 0;
  std::array<float, 3> quatern{};  ///< b, c, d
  std::array<float, 3> qoffset{};
  std::array<std::array<float, 4>, 3> srow{};
  bool byte_swapped = false;
};

namespace detail {

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline std::vector<unsigned char> read_all(const std::string& path) {
  gzFile f = gzopen(path.c_str(), "rb");  // transparently reads uncompressed files too
  if (f == nullptr) throw Error(Errc::IoFailure, "cannot open " + path);
  std::vector<unsigned char> buf;
  std::array<unsigned char, 1 << 16> chunk{};
  int n = 0;
  while ((n = gzread(f, chunk.data(), static_cast<unsigned>(chunk.size()))) > 0)
    buf.insert(buf.end(), chunk.begin(), chunk.begin() + n);
  const bool failed = n < 0;
  gzclose(f);
  if (failed) throw Error(Errc::Malformed, "corrupt compressed stream in " + path);
  return buf;
}

/// Writes to a sibling temp file and renames it into place.
inline void write_all(const std::string& path, const std::vector<unsigned char>& bytes) {
  const std::string tmp = path + ".tmp";
  bool ok = false;
  if (ends_with(path, ".gz")) {
    gzFile f = gzopen(tmp.c_str(), "wb6");
    if (f != nullptr) {
      ok = gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size())) == static_cast<int>(bytes.size());
      ok = (gzclose(f) == Z_OK) && ok;
    }
  } else {
    std::ofstream os(tmp, std::ios::binary);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    ok = static_cast<bool>(os);
  }
  std::error_code ec;
  if (ok) std::filesystem::rename(tmp, path, ec);
  if (!ok || ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(Errc::IoFailure, "cannot write " + path);
  }
}

template <class T>
T load(const unsigned char* p, bool swap) {
  std::array<unsigned char, sizeof(T)> b;
  std::memcpy(b.data(), p, sizeof(T));
  if (swap != (std::endian::native == std::endian::big)) std::reverse(b.begin(), b.end());
  T v;
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

/// Stores little-endian regardless of host order.
template <class T>
void store(unsigned char* p, T v) {
  std::array<unsigned char, sizeof(T)> b;
  std::memcpy(b.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  std::memcpy(p, b.data(), sizeof(T));
}

inline NiftiHeaderSubset parse_header(const std::vector<unsigned char>& buf) {
  if (buf.size() < kNiftiHeaderSize) throw Error(Errc::Malformed, "file shorter than a NIfTI-1 header");
  const unsigned char* p = buf.data();
  NiftiHeaderSubset h;
  const auto size_le = load<std::int32_t>(p, false);
  const auto dim0_le = load<std::int16_t>(p + 40, false);
  if (size_le == kNiftiHeaderSize && dim0_le >= 1 && dim0_le <= 7) {
    h.byte_swapped = false;
  } else if (load<std::int32_t>(p, true) == kNiftiHeaderSize) {
    h.byte_swapped = true;
    const auto dim0 = load<std::int16_t>(p + 40, true);
    if (dim0 < 1 || dim0 > 7) throw Error(Errc::Malformed, "dim[0] out of range");
  } else {
    throw Error(Errc::Malformed, "sizeof_hdr is not 348");
  }
  const bool sw = h.byte_swapped;
  if (std::memcmp(p + 344, "n+1\0", 4) != 0) throw Error(Errc::Malformed, "magic is not n+1");
  for (int i = 0; i < 8; ++i) h.dim[i] = load<std::int16_t>(p + 40 + 2 * i, sw);
  h.intent_code = load<std::int16_t>(p + 68, sw);
  h.datatype = load<std::int16_t>(p + 70, sw);
  for (int i = 0; i < 8; ++i) h.pixdim[i] = load<float>(p + 76 + 4 * i, sw);
  h.vox_offset = load<float>(p + 108, sw);
  h.scl_slope = load<float>(p + 112, sw);
  h.scl_inter = load<float>(p + 116, sw);
  h.qform_code = load<std::int16_t>(p + 252, sw);
  h.sform_code = load<std::int16_t>(p + 254, sw);
  for (int i = 0; i < 3; ++i) h.quatern[i] = load<float>(p + 256 + 4 * i, sw);
  for (int i = 0; i < 3; ++i) h.qoffset[i] = load<float>(p + 268 + 4 * i, sw);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) h.srow[r][c] = load<float>(p + 280 + 16 * r + 4 * c, sw);
  return h;
}

inline GridSpec grid_from_header(const NiftiHeaderSubset& h) {
  GridSpec g;
  for (int a = 0; a < 3; ++a) {
    g.dims[a] = h.dim[a + 1];
    g.spacing[a] = h.pixdim[a + 1];
    if (!(g.spacing[a] > 0.0)) throw Error(Errc::Malformed, "pixdim must be positive");
  }
  if (h.sform_code >= 1) {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        if (r != c && h.srow[r][c] != 0.0f)
          throw Error(Errc::UnsupportedOrientation, "sform contains rotation or shear");
        if (r == c && !(h.srow[r][c] > 0.0f))
          throw Error(Errc::UnsupportedOrientation, "sform flips or collapses an axis");
      }
    for (int a = 0; a < 3; ++a) g.origin[a] = h.srow[a][3];
  } else if (h.qform_code >= 1) {
    if (h.quatern[0] != 0.0f || h.quatern[1] != 0.0f || h.quatern[2] != 0.0f || h.pixdim[0] < 0.0f)
      throw Error(Errc::UnsupportedOrientation, "qform contains rotation or a flip");
    for (int a = 0; a < 3; ++a) g.origin[a] = h.qoffset[a];
  }
  if (g.dims[0] < 2 || g.dims[1] < 2 || g.dims[2] < 2) throw Error(Errc::Malformed, "spatial dims must be >= 2");
  return g;
}

struct RawImage {
  NiftiHeaderSubset header;
  GridSpec grid;
  int components = 1;
  std::vector<double> data;  ///< scaled values, component-major
};

inline RawImage read_raw(const std::string& path) {
  const auto buf = read_all(path);
  RawImage img;
  img.header = parse_header(buf);
  const auto& h = img.header;
  img.grid = grid_from_header(h);
  const int nd = h.dim[0];
  if (nd == 3) {
    img.components = 1;
  } else if (nd == 5 && h.dim[4] == 1 && h.dim[5] >= 1) {
    img.components = h.dim[5];
  } else if (nd == 4 && h.dim[4] == 1) {
    img.components = 1;
  } else {
    throw Error(Errc::Malformed, "unsupported dimensionality " + std::to_string(nd));
  }
  int bytes = 0;
  switch (h.datatype) {
    case kDtUint8: bytes = 1; break;
    case kDtInt16: bytes = 2; break;
    case kDtFloat32: bytes = 4; break;
    default: throw Error(Errc::UnsupportedDatatype, "datatype " + std::to_string(h.datatype));
  }
  const std::size_t count = img.grid.size() * static_cast<std::size_t>(img.components);
  const auto offset = static_cast<std::size_t>(h.vox_offset);
  if (offset < kNiftiHeaderSize || buf.size() < offset + count * bytes)
    throw Error(Errc::Malformed, "voxel payload truncated");
  const bool scale = h.scl_slope != 0.0f && std::isfinite(h.scl_slope);
  const double slope = h.scl_slope, inter = h.scl_inter;
  img.data.resize(count);
  const unsigned char* p = buf.data() + offset;
  for (std::size_t i = 0; i < count; ++i) {
    double v = 0.0;
    switch (h.datatype) {
      case kDtUint8: v = p[i]; break;
      case kDtInt16: v = load<std::int16_t>(p + 2 * i, h.byte_swapped); break;
      default: v = load<float>(p + 4 * i, h.byte_swapped); break;
    }
    if (scale) v = v * slope + inter;
    if (!std::isfinite(v)) throw Error(Errc::Malformed, "non-finite voxel value");
    img.data[i] = v;
  }
  return img;
}

inline std::vector<unsigned char> encode(const GridSpec& g, int components, std::span<const std::vector<double>> data) {
  std::vector<unsigned char> buf(kNiftiVoxOffset + g.size() * components * 4, 0);
  unsigned char* p = buf.data();
  store<std::int32_t>(p, kNiftiHeaderSize);
  const bool vec = components > 1;
  const std::array<std::int16_t, 8> dim{static_cast<std::int16_t>(vec ? 5 : 3),
                                        static_cast<std::int16_t>(g.dims[0]),
                                        static_cast<std::int16_t>(g.dims[1]),
                                        static_cast<std::int16_t>(g.dims[2]),
                                        1,
                                        static_cast<std::int16_t>(vec ? components : 1),
                                        1,
                                        1};
  for (int i = 0; i < 8; ++i) store<std::int16_t>(p + 40 + 2 * i, dim[i]);
  store<std::int16_t>(p + 68, vec ? kIntentVector : 0);
  store<std::int16_t>(p + 70, kDtFloat32);
  store<std::int16_t>(p + 72, 32);
  const std::array<float, 8> pixdim{1.0f, float(g.spacing[0]), float(g.spacing[1]), float(g.spacing[2]), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) store<float>(p + 76 + 4 * i, pixdim[i]);
  store<float>(p + 108, float(kNiftiVoxOffset));
  store<float>(p + 112, 0.0f);
  store<float>(p + 116, 0.0f);
  p[123] = 2;  // xyzt_units: mm
  store<std::int16_t>(p + 252, 1);
  store<std::int16_t>(p + 254, 1);
  for (int a = 0; a < 3; ++a) store<float>(p + 268 + 4 * a, float(g.origin[a]));
  for (int r = 0; r < 3; ++r) {
    store<float>(p + 280 + 16 * r + 4 * r, float(g.spacing[r]));
    store<float>(p + 280 + 16 * r + 12, float(g.origin[r]));
  }
  std::memcpy(p + 344, "n+1\0", 4);
  unsigned char* out = p + kNiftiVoxOffset;
  for (const auto& comp : data)
    for (double v : comp) {
      store<float>(out, static_cast<float>(v));
      out += 4;
    }
  return buf;
}

}  // namespace detail

inline NiftiHeaderSubset read_nifti_header(const std::string& path) {
  return detail::parse_header(detail::read_all(path));
}

inline Volume read_volume(const std::string& path) {
  auto raw = detail::read_raw(path);
  if (raw.components != 1) throw Error(Errc::Malformed, path + " is not a scalar image");
  return Volume(raw.grid, std::move(raw.data));
}

inline LabelMap read_labels(const std::string& path) {
  auto raw = detail::read_raw(path);
  if (raw.components != 1) throw Error(Errc::Malformed, path + " is not a label image");
  std::vector<std::int32_t> labels(raw.data.size());
  for (std::size_t i = 0; i < raw.data.size(); ++i) {
    const double v = raw.data[i];
    if (v < 0.0 || v != std::round(v) || v > 2147483647.0)
      throw Error(Errc::Malformed, path + " holds non-integer or negative labels");
    labels[i] = static_cast<std::int32_t>(v);
  }
  return LabelMap(raw.grid, std::move(labels));
}

/// Reads a 5D (X, Y, Z, 1, 3) vector image as a displacement field in mm.
inline DisplacementField read_displacement(const std::string& path) {
  auto raw = detail::read_raw(path);
  if (raw.header.dim[0] != 5 || raw.components != 3)
    throw Error(Errc::Malformed, path + " is not a 3-component displacement field");
  DisplacementField d(raw.grid);
  const std::size_t n = raw.grid.size();
  for (int a = 0; a < 3; ++a) std::copy_n(raw.data.begin() + a * n, n, d.comp[a].begin());
  return d;
}

/// Float32, no scaling, vox_offset 352; gzip when the path ends in .gz.
inline void write_volume(const std::string& path, const Volume& vol) {
  const std::array<std::vector<double>, 1> ch{vol.data};
  detail::write_all(path, detail::encode(vol.grid, 1, ch));
}

inline void write_labels(const std::string& path, const LabelMap& labels) {
  std::array<std::vector<double>, 1> ch;
  ch[0].assign(labels.data.begin(), labels.data.end());
  detail::write_all(path, detail::encode(labels.grid, 1, ch));
}

template <class Tag>
void write_field(const std::string& path, const VectorField<Tag>& d) {
  detail::write_all(path, detail::encode(d.grid, 3, d.comp));
}

}  // namespace mireg::io
