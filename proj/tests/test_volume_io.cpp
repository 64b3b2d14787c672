#include <gtest/gtest.h>
#include <zlib.h>

#include <cstring>
#include <fstream>

#include "synthetic.hpp"
#include "volseg/io.hpp"

using namespace volseg;
using volseg::testing::TempDir;

namespace {

// Minimal NIfTI-1 writer independent of the library, for header fields the
// library never writes itself (scaling, integer types).
std::string handmade_nifti(const Dims& d, int16_t datatype, int16_t bitpix, const std::string& payload, float slope,
                           float inter, int16_t ndim = 3) {
  std::string buf(352, '\0');
  auto put = [&](size_t off, auto v) { std::memcpy(buf.data() + off, &v, sizeof v); };
  put(0, int32_t{348});
  put(40, ndim);
  put(42, static_cast<int16_t>(d.x));
  put(44, static_cast<int16_t>(d.y));
  put(46, static_cast<int16_t>(d.z));
  put(48, int16_t{1});
  put(70, datatype);
  put(72, bitpix);
  put(76, 1.0f);
  put(80, 2.0f);
  put(84, 3.0f);
  put(88, 4.0f);
  put(108, 352.0f);
  put(112, slope);
  put(116, inter);
  std::memcpy(buf.data() + 344, "n+1\0", 4);
  return buf + payload;
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(Volume, DimsAndIndexing) {
  Volume v({3, 4, 5}, 0.0f);
  EXPECT_EQ(v.size(), 60u);
  v.at(2, 3, 4) = 7.0f;
  EXPECT_EQ(v[59], 7.0f);
  EXPECT_EQ(unravel(v.dims(), 59), (Index3{2, 3, 4}));
  EXPECT_EQ(linear_index(v.dims(), 1, 0, 0), 1u);
  EXPECT_EQ(linear_index(v.dims(), 0, 1, 0), 3u);
  EXPECT_EQ(linear_index(v.dims(), 0, 0, 1), 12u);
}

TEST(Volume, RejectsBadShapes) {
  EXPECT_THROW(Volume({0, 1, 1}), Error);
  EXPECT_THROW(Volume({2, 2, 2}, std::vector<float>(7)), Error);
  Volume v({2, 1, 1}, std::vector<float>{1.0f, std::numeric_limits<float>::quiet_NaN()});
  EXPECT_THROW(v.check_finite(), Error);
}

TEST(Volume, MaskFromVolumeUsesStrictHalf) {
  Volume v({3, 1, 1}, std::vector<float>{0.5f, 0.50001f, 1.0f});
  BinaryMask m = BinaryMask::from_volume(v);
  EXPECT_FALSE(m[0]);
  EXPECT_TRUE(m[1]);
  EXPECT_TRUE(m[2]);
  EXPECT_EQ(m.count(), 2u);
}

TEST(Io, RawAllOnes) {
  TempDir dir("io_ones");
  const Volume v({4, 4, 4}, 1.0f);
  save_volume(v, dir.path() / "ones.json");
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "ones.raw"));
  const Volume back = load_volume(dir.path() / "ones.json");
  EXPECT_EQ(back.dims(), (Dims{4, 4, 4}));
  for (size_t i = 0; i < back.size(); ++i) EXPECT_EQ(back[i], 1.0f);
}

TEST(Io, RoundTripBitIdentical) {
  TempDir dir("io_rt");
  Rng rng(3);
  std::vector<float> values(9 * 7 * 5);
  for (float& f : values) f = static_cast<float>(rng.uniform01() * 2000.0 - 1000.0);
  const Volume v({9, 7, 5}, values, {0.5, 1.25, 3.0});
  for (const char* name : {"v.json", "v.nii", "v.nii.gz"}) {
    save_volume(v, dir.path() / name);
    const Volume back = load_volume(dir.path() / name);
    EXPECT_EQ(back.dims(), v.dims()) << name;
    EXPECT_EQ(back.spacing(), v.spacing()) << name;
    EXPECT_EQ(0, std::memcmp(back.values().data(), v.values().data(), v.size() * sizeof(float))) << name;
  }
}

TEST(Io, MaskRoundTrip) {
  TempDir dir("io_mask");
  Rng rng(5);
  const BinaryMask m = volseg::testing::random_mask({6, 5, 4}, 0.3, rng);
  save_mask(m, dir.path() / "m.nii.gz");
  EXPECT_EQ(load_mask(dir.path() / "m.nii.gz"), m);
}

TEST(Io, NiftiScalingApplied) {
  TempDir dir("io_scale");
  int16_t stored = 3;
  const std::string payload(reinterpret_cast<const char*>(&stored), 2);
  write_bytes(dir.path() / "s.nii", handmade_nifti({1, 1, 1}, 4, 16, payload, 2.0f, 1.0f));
  const Volume v = load_volume(dir.path() / "s.nii");
  EXPECT_FLOAT_EQ(v[0], 7.0f);
  EXPECT_EQ(v.spacing(), (Spacing{2.0, 3.0, 4.0}));
}

TEST(Io, NiftiZeroSlopeMeansIdentity) {
  TempDir dir("io_noscale");
  const std::string payload = {'\x05', '\x09'};
  write_bytes(dir.path() / "u.nii", handmade_nifti({2, 1, 1}, 2, 8, payload, 0.0f, 0.0f));
  const Volume v = load_volume(dir.path() / "u.nii");
  EXPECT_EQ(v[0], 5.0f);
  EXPECT_EQ(v[1], 9.0f);
}

TEST(Io, NiftiGzipReadable) {
  TempDir dir("io_gz");
  float values[2] = {1.5f, -2.5f};
  const std::string bytes =
      handmade_nifti({2, 1, 1}, 16, 32, std::string(reinterpret_cast<const char*>(values), 8), 1.0f, 0.0f);
  gzFile f = gzopen((dir.path() / "g.nii.gz").c_str(), "wb");
  gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
  gzclose(f);
  const Volume v = load_volume(dir.path() / "g.nii.gz");
  EXPECT_EQ(v[0], 1.5f);
  EXPECT_EQ(v[1], -2.5f);
}

TEST(Io, NiftiErrors) {
  TempDir dir("io_err");
  write_bytes(dir.path() / "four.nii", handmade_nifti({1, 1, 1}, 16, 32, std::string(4, '\0'), 1.0f, 0.0f, 4));
  write_bytes(dir.path() / "type.nii", handmade_nifti({1, 1, 1}, 128, 24, std::string(3, '\0'), 1.0f, 0.0f));
  write_bytes(dir.path() / "short.nii", handmade_nifti({4, 4, 4}, 16, 32, std::string(8, '\0'), 1.0f, 0.0f));
  write_bytes(dir.path() / "tiny.nii", "n+1");
  for (const char* name : {"four.nii", "type.nii", "short.nii", "tiny.nii"}) {
    try {
      load_volume(dir.path() / name);
      ADD_FAILURE() << name << " loaded";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::Format) << name << ": " << e.what();
    }
  }
  try {
    load_volume(dir.path() / "missing.nii");
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Io);
  }
  EXPECT_THROW(load_volume(dir.path() / "x.txt"), Error);
}

TEST(Io, RawHeaderErrors) {
  Dims d;
  Spacing s;
  EXPECT_NO_THROW(raw::parse_header(R"({"dims":[2,3,4],"spacing":[1,1,2],"dtype":"f32"})", d, s));
  EXPECT_EQ(d, (Dims{2, 3, 4}));
  EXPECT_EQ(s.z, 2.0);
  EXPECT_THROW(raw::parse_header("{", d, s), Error);
  EXPECT_THROW(raw::parse_header(R"({"dims":[2,3],"dtype":"f32"})", d, s), Error);
  EXPECT_THROW(raw::parse_header(R"({"dims":[2,3,4],"dtype":"u8"})", d, s), Error);
  EXPECT_THROW(raw::parse_header(R"({"dims":[0,3,4],"dtype":"f32"})", d, s), Error);
  EXPECT_THROW(raw::decode_blob(std::string(7, '\0'), 2), Error);
}

TEST(Io, ExtractCopiesBox) {
  Volume v({4, 4, 4});
  for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i);
  const Volume e = extract(v, {1, 2, 3}, {2, 2, 1});
  EXPECT_EQ(e.dims(), (Dims{2, 2, 1}));
  EXPECT_EQ(e[0], v.at(1, 2, 3));
  EXPECT_EQ(e[3], v.at(2, 3, 3));
  EXPECT_THROW(extract(v, {3, 0, 0}, {2, 1, 1}), Error);
}
