#pragma once

// Plain-text formats: 256-entry LUT files and x,y,z landmark CSVs.

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "mireg/augment.hpp"
#include "mireg/image.hpp"
#include "mireg/io/nifti.hpp"

namespace mireg::io {

namespace detail {

inline std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::IoFailure, "cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  write_all(path, std::vector<unsigned char>(text.begin(), text.end()));
}

/// Splits on '\n'; the text must end with a newline and contain no '\r'.
inline std::vector<std::string_view> split_lines(std::string_view text, const std::string& what) {
  if (text.empty() || text.back() != '\n') throw Error(Errc::Malformed, what + ": missing final line feed");
  if (text.find('\r') != std::string_view::npos) throw Error(Errc::Malformed, what + ": carriage return found");
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t end = text.find('\n', start);
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& what) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
    throw Error(Errc::Malformed, what + ": bad number '" + std::string(s) + "'");
  return v;
}

}  // namespace detail

inline constexpr std::string_view kLutMagic = "LUT256 1";

inline std::string format_lut(const IntensityLut& lut) {
  std::string out(kLutMagic);
  out += '\n';
  for (int v = 0; v < 256; ++v) {
    out += std::to_string(static_cast<int>(lut.table[v]));
    out += '\n';
  }
  return out;
}

inline IntensityLut parse_lut(std::string_view text) {
  const auto lines = detail::split_lines(text, "LUT");
  if (lines.size() != 257 || lines[0] != kLutMagic) throw Error(Errc::Malformed, "LUT: expected header + 256 lines");
  IntensityLut lut;
  for (int v = 0; v < 256; ++v) {
    const auto s = lines[v + 1];
    int x = -1;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || x < 0 || x > 255 ||
        (s.size() > 1 && s[0] == '0'))
      throw Error(Errc::Malformed, "LUT: bad entry on line " + std::to_string(v + 2));
    lut.table[v] = static_cast<std::uint8_t>(x);
  }
  if (lut.table[0] != 0 || lut.table[255] != 255) throw Error(Errc::Malformed, "LUT must map 0->0 and 255->255");
  return lut;
}

inline void write_lut(const std::string& path, const IntensityLut& lut) { detail::write_text(path, format_lut(lut)); }
inline IntensityLut read_lut(const std::string& path) { return parse_lut(detail::slurp(path)); }

/// `x,y,z` header, one landmark per line, shortest round-trip decimals.
inline std::string format_landmarks(const LandmarkSet& lm) {
  std::string out = "x,y,z\n";
  for (const auto& p : lm.points) {
    out += detail::format_double(p[0]) + "," + detail::format_double(p[1]) + "," + detail::format_double(p[2]);
    out += '\n';
  }
  return out;
}

inline LandmarkSet parse_landmarks(std::string_view text) {
  const auto lines = detail::split_lines(text, "landmarks");
  if (lines[0] != "x,y,z") throw Error(Errc::Malformed, "landmarks: header must be x,y,z");
  LandmarkSet lm;
  for (std::size_t n = 1; n < lines.size(); ++n) {
    const auto l = lines[n];
    const auto c1 = l.find(','), c2 = l.find(',', c1 == std::string_view::npos ? c1 : c1 + 1);
    if (c1 == std::string_view::npos || c2 == std::string_view::npos || l.find(',', c2 + 1) != std::string_view::npos)
      throw Error(Errc::Malformed, "landmarks: line " + std::to_string(n + 1) + " needs three fields");
    const std::string what = "landmarks line " + std::to_string(n + 1);
    lm.points.push_back({detail::parse_double(l.substr(0, c1), what), detail::parse_double(l.substr(c1 + 1, c2 - c1 - 1), what),
                         detail::parse_double(l.substr(c2 + 1), what)});
  }
  return lm;
}

inline void write_landmarks(const std::string& path, const LandmarkSet& lm) {
  detail::write_text(path, format_landmarks(lm));
}
inline LandmarkSet read_landmarks(const std::string& path) { return parse_landmarks(detail::slurp(path)); }

}  // namespace mireg::io
