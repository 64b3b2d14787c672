#pragma once

#include <filesystem>

#include "volseg/volume.hpp"

namespace volseg {

/// Supported on-disk formats. Detected from the file name:
///   *.nii, *.nii.gz  NIfTI-1 single file
///   *.json           raw format header; samples live in a sibling blob
enum class VolumeFormat { Nifti, NiftiGz, Raw };

VolumeFormat detect_format(const std::filesystem::path& path);

/// Loads an image. NIfTI scl_slope/scl_inter are applied; a slope of zero
/// means "no scaling" as in the NIfTI-1 standard.
Volume load_volume(const std::filesystem::path& path);

/// Loads a label file; foreground is value > 0.5.
BinaryMask load_mask(const std::filesystem::path& path);

/// Writes float32 samples. For the raw format the blob goes to
/// `<stem>.raw` next to the header.
void save_volume(const Volume& v, const std::filesystem::path& path);
void save_mask(const BinaryMask& m, const std::filesystem::path& path);

namespace raw {

/// Header JSON for the raw format, e.g.
/// {"dims":[4,4,4],"spacing":[1,1,1],"dtype":"f32"}.
std::string header_json(const Dims& dims, const Spacing& spacing);

/// Parses a header; throws Format on anything malformed.
void parse_header(const std::string& text, Dims& dims, Spacing& spacing);

/// Little-endian float32, x-fastest.
std::string encode_blob(std::span<const float> values);
std::vector<float> decode_blob(std::string_view bytes, size_t expected_count);

}  // namespace raw

}  // namespace volseg
