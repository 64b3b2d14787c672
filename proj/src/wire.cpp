#include "volseg/wire.hpp"

#include <sodium.h>

#include "json.hpp"
#include "volseg/io.hpp"

namespace volseg::wire {

using nlohmann::json;

namespace {

constexpr int kVariant = sodium_base64_VARIANT_ORIGINAL;

json parse(std::string_view line) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    fail(ErrorKind::Protocol, std::string("malformed JSON message: ") + e.what());
  }
}

Dims read_dims(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != 3)
    fail(ErrorKind::Protocol, std::string("field '") + key + "' must be [x,y,z]");
  Dims d{j[key][0].get<int64_t>(), j[key][1].get<int64_t>(), j[key][2].get<int64_t>()};
  if (!d.valid()) fail(ErrorKind::Protocol, std::string("field '") + key + "' must be positive");
  return d;
}

std::vector<float> read_payload(const json& j, size_t expected_count) {
  if (j.value("dtype", std::string()) != "f32le")
    fail(ErrorKind::Protocol, "dtype must be \"f32le\"");
  if (!j.contains("data") || !j["data"].is_string()) fail(ErrorKind::Protocol, "missing base64 field 'data'");
  const std::string bytes = base64_decode(j["data"].get<std::string>());
  if (bytes.size() != expected_count * 4)
    fail(ErrorKind::Protocol, "payload holds " + std::to_string(bytes.size()) + " bytes, expected " +
                                  std::to_string(expected_count * 4));
  return raw::decode_blob(bytes, expected_count);
}

std::string read_id(const json& j) {
  if (!j.is_object() || !j.contains("id") || !j["id"].is_string()) fail(ErrorKind::Protocol, "missing string field 'id'");
  return j["id"].get<std::string>();
}

}  // namespace

std::string base64_encode(std::string_view bytes) {
  if (sodium_init() < 0) fail(ErrorKind::Backend, "libsodium initialisation failed");
  std::string out(sodium_base64_encoded_len(bytes.size(), kVariant), '\0');
  sodium_bin2base64(out.data(), out.size(), reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(),
                    kVariant);
  out.resize(out.size() - 1);  // trailing NUL
  return out;
}

std::string base64_decode(std::string_view text) {
  if (sodium_init() < 0) fail(ErrorKind::Backend, "libsodium initialisation failed");
  std::string out(text.size() / 4 * 3 + 3, '\0');
  size_t len = 0;
  const char* end = nullptr;
  if (sodium_base642bin(reinterpret_cast<unsigned char*>(out.data()), out.size(), text.data(), text.size(), nullptr,
                        &len, &end, kVariant) != 0 ||
      end != text.data() + text.size())
    fail(ErrorKind::Protocol, "invalid base64 payload");
  out.resize(len);
  return out;
}

std::string encode_request(const PatchRequest& req) {
  json j;
  j["id"] = req.id;
  j["dims"] = {req.dims.x, req.dims.y, req.dims.z};
  j["channels"] = req.channels;
  j["dtype"] = "f32le";
  j["data"] = base64_encode(raw::encode_blob(req.data));
  if (req.origin) j["origin"] = {req.origin->x, req.origin->y, req.origin->z};
  if (req.volume_dims) j["volume_dims"] = {req.volume_dims->x, req.volume_dims->y, req.volume_dims->z};
  return j.dump();
}

PatchRequest decode_request(std::string_view line) {
  const json j = parse(line);
  try {
    PatchRequest req;
    req.id = read_id(j);
    req.dims = read_dims(j, "dims");
    req.channels = j.value("channels", 0);
    if (req.channels < 1) fail(ErrorKind::Protocol, "channels must be >= 1");
    req.data = read_payload(j, req.dims.count() * static_cast<size_t>(req.channels));
    if (j.contains("origin")) {
      const json& o = j["origin"];
      if (!o.is_array() || o.size() != 3) fail(ErrorKind::Protocol, "origin must be [x,y,z]");
      req.origin = Index3{o[0].get<int64_t>(), o[1].get<int64_t>(), o[2].get<int64_t>()};
    }
    if (j.contains("volume_dims")) req.volume_dims = read_dims(j, "volume_dims");
    return req;
  } catch (const json::exception& e) {
    fail(ErrorKind::Protocol, std::string("request field error: ") + e.what());
  }
}

std::string encode_response(const PatchResponse& resp) {
  json j;
  j["id"] = resp.id;
  j["dims"] = {resp.dims.x, resp.dims.y, resp.dims.z};
  j["channels"] = 1;
  j["dtype"] = "f32le";
  j["data"] = base64_encode(raw::encode_blob(resp.data));
  return j.dump();
}

PatchResponse decode_response(std::string_view line) {
  const json j = parse(line);
  try {
    PatchResponse resp;
    resp.id = read_id(j);
    resp.dims = read_dims(j, "dims");
    if (j.value("channels", 0) != 1) fail(ErrorKind::Protocol, "response must carry exactly 1 channel");
    resp.data = read_payload(j, resp.dims.count());
    return resp;
  } catch (const json::exception& e) {
    fail(ErrorKind::Protocol, std::string("response field error: ") + e.what());
  }
}

std::string peek_id(std::string_view line) { return read_id(parse(line)); }

}  // namespace volseg::wire
