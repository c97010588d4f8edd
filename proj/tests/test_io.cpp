#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <fstream>

#include "mireg/io/nifti.hpp"
#include "mireg/io/text_formats.hpp"
#include "support.hpp"

using namespace mireg;
using namespace mireg::testing;

namespace {

static_assert(std::endian::native == std::endian::little, "hand-built headers below assume a little-endian host");

template <class T>
void put(std::vector<unsigned char>& b, std::size_t off, T v) {
  std::memcpy(b.data() + off, &v, sizeof v);
}

// Minimal single-file NIfTI-1 header built field by field.
std::vector<unsigned char> header(std::array<std::int16_t, 8> dim, std::int16_t datatype, std::int16_t bitpix) {
  std::vector<unsigned char> b(352, 0);
  put<std::int32_t>(b, 0, 348);
  for (int i = 0; i < 8; ++i) put<std::int16_t>(b, 40 + 2 * i, dim[i]);
  put<std::int16_t>(b, 70, datatype);
  put<std::int16_t>(b, 72, bitpix);
  for (int i = 0; i < 8; ++i) put<float>(b, 76 + 4 * i, 1.0f);
  put<float>(b, 108, 352.0f);
  std::memcpy(b.data() + 344, "n+1\0", 4);
  return b;
}

void save(const std::filesystem::path& p, const std::vector<unsigned char>& b) {
  std::ofstream os(p, std::ios::binary);
  os.write(reinterpret_cast<const char*>(b.data()), std::streamsize(b.size()));
}

std::vector<unsigned char> slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::InvalidArgument;  // sentinel: nothing thrown
}

// Values exactly representable as float so a float32 file can hold them.
Volume float_volume(const GridSpec& g, Rng& rng) {
  Volume v(g);
  for (auto& x : v.data) x = double(float(rng.uniform(-100.0, 300.0)));
  return v;
}

}  // namespace

TEST(Nifti, VolumeRoundTripPlainAndGzip) {
  const auto dir = scratch_dir("io_volume");
  const GridSpec g = make_grid(8, 8, 8, {1.5, 0.75, 2.0}, {-10.5, 3.25, 0.0});
  Rng rng(1);
  const Volume v = float_volume(g, rng);
  for (const char* name : {"v.nii", "v.nii.gz"}) {
    const auto path = (dir / name).string();
    io::write_volume(path, v);
    const Volume r = io::read_volume(path);
    EXPECT_EQ(r.data, v.data);
    EXPECT_EQ(r.grid.dims, g.dims);
    EXPECT_EQ(r.grid.spacing, g.spacing);
    EXPECT_EQ(r.grid.origin, g.origin);
  }
  const auto plain = slurp(dir / "v.nii");
  std::int32_t sizeof_hdr = 0;
  std::memcpy(&sizeof_hdr, plain.data(), 4);
  EXPECT_EQ(sizeof_hdr, 348);
  EXPECT_EQ(plain.size(), 352u + 4u * g.size());
  EXPECT_EQ(std::memcmp(plain.data() + 344, "n+1\0", 4), 0);
  const auto h = io::read_nifti_header((dir / "v.nii").string());
  EXPECT_EQ(h.datatype, io::kDtFloat32);
  EXPECT_EQ(h.scl_slope, 0.0f);
  EXPECT_EQ(h.vox_offset, 352.0f);
}

TEST(Nifti, DisplacementAndLabelsRoundTrip) {
  const auto dir = scratch_dir("io_field");
  const GridSpec g = make_grid(5, 6, 7, {1.0, 2.0, 0.5});
  Rng rng(2);
  DisplacementField d(g);
  for (auto& c : d.comp)
    for (auto& x : c) x = double(float(rng.uniform(-3.0, 3.0)));
  io::write_field((dir / "d.nii.gz").string(), d);
  const auto r = io::read_displacement((dir / "d.nii.gz").string());
  for (int a = 0; a < 3; ++a) EXPECT_EQ(r.comp[a], d.comp[a]);
  const auto h = io::read_nifti_header((dir / "d.nii.gz").string());
  EXPECT_EQ(h.dim[0], 5);
  EXPECT_EQ(h.dim[4], 1);
  EXPECT_EQ(h.dim[5], 3);
  LabelMap m(g);
  for (auto& x : m.data) x = std::int32_t(rng.below(5));
  io::write_labels((dir / "l.nii").string(), m);
  EXPECT_EQ(io::read_labels((dir / "l.nii").string()).data, m.data);
  EXPECT_THROW(io::read_displacement((dir / "l.nii").string()), Error);
}

TEST(Nifti, Uint8WithScaling) {
  const auto dir = scratch_dir("io_uint8");
  auto b = header({3, 2, 2, 2, 1, 1, 1, 1}, 2, 8);
  put<float>(b, 112, 2.0f);
  put<float>(b, 116, 1.0f);
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<unsigned char>(10 + i));
  save(dir / "u8.nii", b);
  const Volume v = io::read_volume((dir / "u8.nii").string());
  EXPECT_EQ(v.data[0], 21.0);
  EXPECT_EQ(v.data[7], 35.0);
}

TEST(Nifti, Int16AndByteSwapped) {
  const auto dir = scratch_dir("io_int16");
  auto b = header({3, 2, 2, 2, 1, 1, 1, 1}, 4, 16);
  for (int i = 0; i < 8; ++i) {
    const auto v = std::int16_t(-300 + 100 * i);
    b.push_back(static_cast<unsigned char>(v & 0xff));
    b.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
  }
  save(dir / "i16.nii", b);
  const Volume v = io::read_volume((dir / "i16.nii").string());
  EXPECT_EQ(v.data[0], -300.0);
  EXPECT_EQ(v.data[7], 400.0);

  // the same float image written big-endian
  auto be = header({3, 2, 2, 2, 1, 1, 1, 1}, 16, 32);
  for (int i = 0; i < 8; ++i) be.resize(be.size() + 4);
  for (int i = 0; i < 8; ++i) put<float>(be, 352 + 4 * std::size_t(i), float(i) * 0.5f);
  auto swap_at = [&](std::size_t off, std::size_t n) { std::reverse(be.begin() + long(off), be.begin() + long(off + n)); };
  swap_at(0, 4);
  for (int i = 0; i < 8; ++i) swap_at(40 + 2 * std::size_t(i), 2);
  swap_at(70, 2);
  swap_at(72, 2);
  for (int i = 0; i < 8; ++i) swap_at(76 + 4 * std::size_t(i), 4);
  swap_at(108, 4);
  for (int i = 0; i < 8; ++i) swap_at(352 + 4 * std::size_t(i), 4);
  save(dir / "be.nii", be);
  const Volume w = io::read_volume((dir / "be.nii").string());
  for (int i = 0; i < 8; ++i) EXPECT_EQ(w.data[std::size_t(i)], i * 0.5);
}

TEST(Nifti, RejectsRotationAndBadFiles) {
  const auto dir = scratch_dir("io_reject");
  auto b = header({3, 2, 2, 2, 1, 1, 1, 1}, 16, 32);
  b.resize(352 + 32, 0);
  put<std::int16_t>(b, 254, 1);
  // 90 degree rotation about z in the sform rows
  put<float>(b, 280 + 4, -1.0f);
  put<float>(b, 296 + 0, 1.0f);
  put<float>(b, 312 + 8, 1.0f);
  save(dir / "rot.nii", b);
  EXPECT_EQ(code_of([&] { io::read_volume((dir / "rot.nii").string()); }), Errc::UnsupportedOrientation);

  auto q = header({3, 2, 2, 2, 1, 1, 1, 1}, 16, 32);
  q.resize(352 + 32, 0);
  put<std::int16_t>(q, 252, 1);
  put<float>(q, 264, 0.7071068f);  // quatern_d
  save(dir / "qrot.nii", q);
  EXPECT_EQ(code_of([&] { io::read_volume((dir / "qrot.nii").string()); }), Errc::UnsupportedOrientation);

  auto magic = header({3, 2, 2, 2, 1, 1, 1, 1}, 16, 32);
  magic.resize(352 + 32, 0);
  std::memcpy(magic.data() + 344, "ni1\0", 4);
  save(dir / "magic.nii", magic);
  EXPECT_EQ(code_of([&] { io::read_volume((dir / "magic.nii").string()); }), Errc::Malformed);

  auto f64 = header({3, 2, 2, 2, 1, 1, 1, 1}, 64, 64);
  f64.resize(352 + 64, 0);
  save(dir / "f64.nii", f64);
  EXPECT_EQ(code_of([&] { io::read_volume((dir / "f64.nii").string()); }), Errc::UnsupportedDatatype);

  auto truncated = header({3, 4, 4, 4, 1, 1, 1, 1}, 16, 32);
  save(dir / "short.nii", truncated);
  EXPECT_EQ(code_of([&] { io::read_volume((dir / "short.nii").string()); }), Errc::Malformed);

  EXPECT_EQ(code_of([&] { io::read_volume((dir / "missing.nii").string()); }), Errc::IoFailure);
}

TEST(LutFile, BitExactFormatAndRoundTrip) {
  const auto dir = scratch_dir("io_lut");
  const auto lut = build_lut(sample_curve(3, 6));
  const auto path = (dir / "a.txt").string();
  io::write_lut(path, lut);
  const auto bytes = slurp(path);
  std::string expected = "LUT256 1\n";
  for (int v = 0; v < 256; ++v) expected += std::to_string(lut.table[v]) + "\n";
  EXPECT_EQ(std::string(bytes.begin(), bytes.end()), expected);
  EXPECT_EQ(io::read_lut(path), lut);
}

TEST(LutFile, RejectsMalformedText) {
  std::string good = "LUT256 1\n";
  for (int v = 0; v < 256; ++v) good += std::to_string(v) + "\n";
  EXPECT_EQ(io::parse_lut(good), IntensityLut::identity());
  EXPECT_THROW(io::parse_lut(good.substr(0, good.size() - 1)), Error);
  auto trailing = good;
  trailing.insert(trailing.find("\n", 10), " ");
  EXPECT_THROW(io::parse_lut(trailing), Error);
  auto range = good;
  range.replace(range.find("\n200\n") + 1, 3, "256");
  EXPECT_THROW(io::parse_lut(range), Error);
  EXPECT_THROW(io::parse_lut("LUT256 2\n"), Error);
}

TEST(LandmarkFile, RoundTripIsBitwise) {
  const auto dir = scratch_dir("io_landmarks");
  Rng rng(4);
  LandmarkSet lm;
  for (int i = 0; i < 20; ++i) lm.points.push_back({rng.uniform(-100, 100), rng.uniform(-1, 1), rng.uniform(0, 1e4)});
  const auto path = (dir / "lm.csv").string();
  io::write_landmarks(path, lm);
  const auto back = io::read_landmarks(path);
  ASSERT_EQ(back.points.size(), lm.points.size());
  for (std::size_t i = 0; i < lm.points.size(); ++i) EXPECT_EQ(back.points[i], lm.points[i]);
  const auto text = slurp(path);
  EXPECT_EQ(std::string(text.begin(), text.begin() + 6), "x,y,z\n");
  io::write_landmarks(path, back);
  EXPECT_EQ(slurp(path), text);
  EXPECT_THROW(io::parse_landmarks("x,y\n1,2\n"), Error);
  EXPECT_THROW(io::parse_landmarks("x,y,z\n1,2\n"), Error);
  EXPECT_EQ(io::parse_landmarks("x,y,z\n").points.size(), 0u);
}
