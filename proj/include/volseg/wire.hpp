#pragma once

#include <span>
#include <string>
#include <string_view>

#include "volseg/segmenter.hpp"

// Line-delimited JSON messages exchanged with external segmenters:
//
//   request  {"id":"w3","dims":[wx,wy,wz],"channels":3,"dtype":"f32le",
//             "data":"<base64>","origin":[x,y,z],"volume_dims":[nx,ny,nz]}
//   response {"id":"w3","dims":[wx,wy,wz],"channels":1,"dtype":"f32le",
//             "data":"<base64>"}
//
// `data` is little-endian float32, channel-major, x-fastest. `origin` and
// `volume_dims` are informational and may be absent. Any mismatch in dtype,
// dims or payload size is a protocol error.
namespace volseg::wire {

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

std::string encode_request(const PatchRequest& req);
PatchRequest decode_request(std::string_view line);

std::string encode_response(const PatchResponse& resp);
PatchResponse decode_response(std::string_view line);

/// Extracts only the id; used to route out-of-order responses.
std::string peek_id(std::string_view line);

}  // namespace volseg::wire
