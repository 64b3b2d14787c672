#include "volseg/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include "json.hpp"
#include <sstream>

namespace volseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int32_t kNiftiHeaderSize = 348;
constexpr int32_t kNiftiVoxOffset = 352;

enum NiftiType : int16_t {
  kUint8 = 2,
  kInt16 = 4,
  kFloat32 = 16,
  kFloat64 = 64,
};

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

template <typename T>
T byteswap_value(T v) {
  std::array<unsigned char, sizeof(T)> b;
  std::memcpy(b.data(), &v, sizeof(T));
  std::reverse(b.begin(), b.end());
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

template <typename T>
T read_at(const std::string& buf, size_t offset, bool swap) {
  T v;
  std::memcpy(&v, buf.data() + offset, sizeof(T));
  return swap ? byteswap_value(v) : v;
}

template <typename T>
void write_at(std::string& buf, size_t offset, T v) {
  if constexpr (std::endian::native == std::endian::big) v = byteswap_value(v);
  std::memcpy(buf.data() + offset, &v, sizeof(T));
}

// gzread transparently passes through uncompressed input.
std::string read_file_maybe_gz(const fs::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (!f) fail(ErrorKind::Io, "cannot open " + path.string());
  std::string out;
  std::array<char, 1 << 16> chunk;
  while (true) {
    const int n = gzread(f, chunk.data(), static_cast<unsigned>(chunk.size()));
    if (n < 0) {
      int errnum = 0;
      const std::string msg = gzerror(f, &errnum);
      gzclose(f);
      fail(ErrorKind::Io, "read error in " + path.string() + ": " + msg);
    }
    if (n == 0) break;
    out.append(chunk.data(), static_cast<size_t>(n));
  }
  gzclose(f);
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes, bool gz) {
  if (gz) {
    gzFile f = gzopen(path.string().c_str(), "wb");
    if (!f) fail(ErrorKind::Io, "cannot write " + path.string());
    const int n = gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
    gzclose(f);
    if (n != static_cast<int>(bytes.size())) fail(ErrorKind::Io, "short write to " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "short write to " + path.string());
}

Volume parse_nifti(const std::string& buf, const fs::path& path) {
  if (buf.size() < static_cast<size_t>(kNiftiHeaderSize))
    fail(ErrorKind::Format, path.string() + ": truncated NIfTI header");
  bool swap = false;
  const auto hdr_size = read_at<int32_t>(buf, 0, false);
  if (hdr_size != kNiftiHeaderSize) {
    if (byteswap_value(hdr_size) != kNiftiHeaderSize)
      fail(ErrorKind::Format, path.string() + ": not a NIfTI-1 file (sizeof_hdr=" +
                                  std::to_string(hdr_size) + ")");
    swap = true;
  }
  if (std::memcmp(buf.data() + 344, "n+1", 4) != 0)
    fail(ErrorKind::Format, path.string() + ": unsupported NIfTI magic (single-file n+1 only)");

  const auto ndim = read_at<int16_t>(buf, 40, swap);
  if (ndim != 3)
    fail(ErrorKind::Format, path.string() + ": expected 3 dimensions, found " + std::to_string(ndim));
  Dims dims{read_at<int16_t>(buf, 42, swap), read_at<int16_t>(buf, 44, swap),
            read_at<int16_t>(buf, 46, swap)};
  if (!dims.valid()) fail(ErrorKind::Format, path.string() + ": invalid dims " + to_string(dims));

  const auto datatype = read_at<int16_t>(buf, 70, swap);
  Spacing spacing{std::fabs(read_at<float>(buf, 80, swap)), std::fabs(read_at<float>(buf, 84, swap)),
                  std::fabs(read_at<float>(buf, 88, swap))};
  if (!(spacing.x > 0)) spacing.x = 1.0;
  if (!(spacing.y > 0)) spacing.y = 1.0;
  if (!(spacing.z > 0)) spacing.z = 1.0;
  const auto vox_offset = static_cast<size_t>(read_at<float>(buf, 108, swap));
  float slope = read_at<float>(buf, 112, swap);
  const float inter = read_at<float>(buf, 116, swap);
  const bool scaled = slope != 0.0f && std::isfinite(slope);
  if (!scaled) slope = 1.0f;

  size_t bytes_per = 0;
  switch (datatype) {
    case kUint8: bytes_per = 1; break;
    case kInt16: bytes_per = 2; break;
    case kFloat32: bytes_per = 4; break;
    case kFloat64: bytes_per = 8; break;
    default:
      fail(ErrorKind::Format, path.string() + ": unsupported NIfTI datatype " + std::to_string(datatype));
  }
  const size_t n = dims.count();
  if (buf.size() < vox_offset + n * bytes_per)
    fail(ErrorKind::Format, path.string() + ": truncated voxel data");

  std::vector<float> values(n);
  const size_t base = vox_offset;
  for (size_t i = 0; i < n; ++i) {
    double raw = 0.0;
    switch (datatype) {
      case kUint8: raw = static_cast<unsigned char>(buf[base + i]); break;
      case kInt16: raw = read_at<int16_t>(buf, base + 2 * i, swap); break;
      case kFloat32: raw = read_at<float>(buf, base + 4 * i, swap); break;
      case kFloat64: raw = read_at<double>(buf, base + 8 * i, swap); break;
    }
    values[i] = scaled ? static_cast<float>(raw * slope + inter) : static_cast<float>(raw);
  }
  Volume v(dims, std::move(values), spacing);
  v.check_finite();
  return v;
}

std::string build_nifti(const Volume& v) {
  std::string buf(static_cast<size_t>(kNiftiVoxOffset) + v.size() * 4, '\0');
  const Dims& d = v.dims();
  for (int64_t e : {d.x, d.y, d.z})
    if (e > INT16_MAX) fail(ErrorKind::InvalidArgument, "dims exceed NIfTI-1 limit");
  write_at<int32_t>(buf, 0, kNiftiHeaderSize);
  const std::array<int16_t, 8> dim{3, static_cast<int16_t>(d.x), static_cast<int16_t>(d.y),
                                   static_cast<int16_t>(d.z), 1, 1, 1, 1};
  for (size_t i = 0; i < dim.size(); ++i) write_at<int16_t>(buf, 40 + 2 * i, dim[i]);
  write_at<int16_t>(buf, 70, kFloat32);
  write_at<int16_t>(buf, 72, 32);
  const Spacing& s = v.spacing();
  const std::array<float, 8> pixdim{1.0f, static_cast<float>(s.x), static_cast<float>(s.y),
                                    static_cast<float>(s.z), 0.0f, 0.0f, 0.0f, 0.0f};
  for (size_t i = 0; i < pixdim.size(); ++i) write_at<float>(buf, 76 + 4 * i, pixdim[i]);
  write_at<float>(buf, 108, static_cast<float>(kNiftiVoxOffset));
  write_at<float>(buf, 112, 1.0f);
  write_at<float>(buf, 116, 0.0f);
  buf[123] = 2;                       // xyzt_units: mm
  write_at<int16_t>(buf, 254, 1);     // sform_code: scanner
  write_at<float>(buf, 280, static_cast<float>(s.x));
  write_at<float>(buf, 296 + 4, static_cast<float>(s.y));
  write_at<float>(buf, 312 + 8, static_cast<float>(s.z));
  std::memcpy(buf.data() + 344, "n+1", 4);
  for (size_t i = 0; i < v.size(); ++i) write_at<float>(buf, kNiftiVoxOffset + 4 * i, v[i]);
  return buf;
}

fs::path raw_blob_path(const fs::path& header_path) {
  fs::path p = header_path;
  p.replace_extension(".raw");
  return p;
}

}  // namespace

VolumeFormat detect_format(const fs::path& path) {
  const std::string name = path.filename().string();
  if (ends_with(name, ".nii.gz")) return VolumeFormat::NiftiGz;
  if (ends_with(name, ".nii")) return VolumeFormat::Nifti;
  if (ends_with(name, ".json")) return VolumeFormat::Raw;
  fail(ErrorKind::Format, "unrecognized volume file extension: " + name);
}

namespace raw {

std::string header_json(const Dims& dims, const Spacing& spacing) {
  json j;
  j["dims"] = {dims.x, dims.y, dims.z};
  j["spacing"] = {spacing.x, spacing.y, spacing.z};
  j["dtype"] = "f32";
  return j.dump();
}

void parse_header(const std::string& text, Dims& dims, Spacing& spacing) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("raw header is not valid JSON: ") + e.what());
  }
  try {
    if (!j.is_object()) fail(ErrorKind::Format, "raw header must be a JSON object");
    if (!j.contains("dims") || !j["dims"].is_array() || j["dims"].size() != 3)
      fail(ErrorKind::Format, "raw header needs dims:[nx,ny,nz]");
    dims = {j["dims"][0].get<int64_t>(), j["dims"][1].get<int64_t>(), j["dims"][2].get<int64_t>()};
    if (!dims.valid()) fail(ErrorKind::Format, "raw header dims must be positive");
    spacing = {};
    if (j.contains("spacing")) {
      if (!j["spacing"].is_array() || j["spacing"].size() != 3)
        fail(ErrorKind::Format, "raw header spacing must have 3 entries");
      spacing = {j["spacing"][0].get<double>(), j["spacing"][1].get<double>(),
                 j["spacing"][2].get<double>()};
      if (!(spacing.x > 0 && spacing.y > 0 && spacing.z > 0))
        fail(ErrorKind::Format, "raw header spacing must be positive");
    }
    const std::string dtype = j.value("dtype", std::string("f32"));
    if (dtype != "f32") fail(ErrorKind::Format, "unsupported raw dtype '" + dtype + "'");
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, std::string("raw header field error: ") + e.what());
  }
}

std::string encode_blob(std::span<const float> values) {
  std::string out(values.size() * 4, '\0');
  for (size_t i = 0; i < values.size(); ++i) write_at<float>(out, 4 * i, values[i]);
  return out;
}

std::vector<float> decode_blob(std::string_view bytes, size_t expected_count) {
  if (bytes.size() != expected_count * 4)
    fail(ErrorKind::Format, "blob holds " + std::to_string(bytes.size()) + " bytes, expected " +
                                std::to_string(expected_count * 4));
  std::vector<float> out(expected_count);
  const bool swap = std::endian::native == std::endian::big;
  for (size_t i = 0; i < expected_count; ++i) {
    float v;
    std::memcpy(&v, bytes.data() + 4 * i, 4);
    out[i] = swap ? byteswap_value(v) : v;
  }
  return out;
}

}  // namespace raw

Volume load_volume(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorKind::Io, "no such file: " + path.string());
  switch (detect_format(path)) {
    case VolumeFormat::Nifti:
    case VolumeFormat::NiftiGz:
      return parse_nifti(read_file_maybe_gz(path), path);
    case VolumeFormat::Raw: {
      Dims dims;
      Spacing spacing;
      const std::string header = read_file(path);
      raw::parse_header(header, dims, spacing);
      fs::path blob = raw_blob_path(path);
      const json j = json::parse(header);
      if (j.contains("data") && j["data"].is_string()) blob = path.parent_path() / j["data"].get<std::string>();
      Volume v(dims, raw::decode_blob(read_file(blob), dims.count()), spacing);
      v.check_finite();
      return v;
    }
  }
  fail(ErrorKind::Format, "unreachable");
}

BinaryMask load_mask(const fs::path& path) { return BinaryMask::from_volume(load_volume(path), 0.5f); }

void save_volume(const Volume& v, const fs::path& path) {
  switch (detect_format(path)) {
    case VolumeFormat::Nifti:
      write_file(path, build_nifti(v), false);
      return;
    case VolumeFormat::NiftiGz:
      write_file(path, build_nifti(v), true);
      return;
    case VolumeFormat::Raw:
      write_file(raw_blob_path(path), raw::encode_blob(v.values()), false);
      write_file(path, raw::header_json(v.dims(), v.spacing()) + "\n", false);
      return;
  }
}

void save_mask(const BinaryMask& m, const fs::path& path) { save_volume(m.to_volume(), path); }

}  // namespace volseg
