#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "volseg/random.hpp"
#include "volseg/volume.hpp"

namespace volseg {

/// Fixed channel layout of every window handed to a segmenter.
inline constexpr int kImageChannel = 0;
inline constexpr int kTumorChannel = 1;
inline constexpr int kBackgroundChannel = 2;
inline constexpr int kModelChannels = 3;

struct PatchRequest {
  std::string id;
  Dims dims;
  int channels = kModelChannels;
  std::vector<float> data;  // channel-major, x-fastest within a channel

  // Where the window sits in the full volume. Sent on the wire when known.
  std::optional<Index3> origin;
  std::optional<Dims> volume_dims;

  // In-process only: the full-volume channels the window was cut from.
  // Never serialized.
  std::span<const Volume> full_channels;

  std::span<const float> channel(int c) const {
    const size_t n = dims.count();
    return std::span<const float>(data).subspan(static_cast<size_t>(c) * n, n);
  }
};

struct PatchResponse {
  std::string id;
  Dims dims;
  std::vector<float> data;  // probabilities, one channel
};

/// Throws Protocol on malformed requests (sizes, non-finite values).
void validate_request(const PatchRequest& req);

/// Throws Protocol unless the response matches the request id and dims and
/// every probability lies in [0, 1].
void validate_response(const PatchRequest& req, const PatchResponse& resp);

/// Prediction backend. Implementations must be safe to call concurrently.
class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual PatchResponse predict(const PatchRequest& req) const = 0;
  virtual std::string name() const = 0;
};

/// Predicts the same probability everywhere.
class ConstantSegmenter final : public Segmenter {
 public:
  explicit ConstantSegmenter(float value);
  PatchResponse predict(const PatchRequest& req) const override;
  std::string name() const override { return "constant"; }

 private:
  float value_;
};

/// Echoes the image channel, clamped to [0, 1].
class PassThroughSegmenter final : public Segmenter {
 public:
  PatchResponse predict(const PatchRequest& req) const override;
  std::string name() const override { return "passthrough"; }
};

/// Hard 0/1 prediction: image > threshold.
class ThresholdSegmenter final : public Segmenter {
 public:
  explicit ThresholdSegmenter(float threshold = 0.5f) : threshold_(threshold) {}
  PatchResponse predict(const PatchRequest& req) const override;
  std::string name() const override { return "threshold"; }

 private:
  float threshold_;
};

/// Returns the ground-truth label for the requested window, ignoring
/// guidance. Requires the window origin.
class OracleSegmenter final : public Segmenter {
 public:
  explicit OracleSegmenter(BinaryMask label);
  PatchResponse predict(const PatchRequest& req) const override;
  std::string name() const override { return "oracle"; }

 private:
  BinaryMask label_;
};

struct ClickResponsiveOptions {
  int suppressed_components = 3;
  int fp_blobs = 3;
  int min_blob_radius = 2;
  int max_blob_radius = 4;
  uint64_t seed = 0;
};

/// Label-derived segmenter that reacts to guidance like an ideal
/// interactive model. It predicts the label minus a fixed set of suppressed
/// connected components, plus spurious spherical blobs placed away from the
/// label. A tumor-guidance voxel inside a suppressed component restores that
/// whole component; a background-guidance voxel inside a blob removes the
/// blob. Both effects are global: when the full channel stack is available
/// a click anywhere in the volume counts, not just inside the window.
///
/// Stateless: the prediction is a pure function of the request.
class ClickResponsiveOracle final : public Segmenter {
 public:
  ClickResponsiveOracle(BinaryMask label, const ClickResponsiveOptions& opts);

  PatchResponse predict(const PatchRequest& req) const override;
  std::string name() const override { return "click_responsive"; }

  /// Full-volume prediction for a guidance pair; used by tests.
  BinaryMask predict_volume(const Volume& tumor_guidance, const Volume& background_guidance) const;

  size_t component_count() const noexcept { return component_voxels_.size(); }
  const std::vector<int>& suppressed() const noexcept { return suppressed_; }
  size_t blob_count() const noexcept { return blob_voxels_.size(); }
  const std::vector<size_t>& blob_voxels(size_t b) const { return blob_voxels_[b]; }
  const std::vector<size_t>& component_voxels(size_t c) const { return component_voxels_[c]; }

 private:
  struct Active {
    std::vector<bool> restored;  // per suppressed entry
    std::vector<bool> removed;   // per blob
  };
  template <typename Lookup>
  Active resolve(Lookup guidance_at) const;
  bool predicted(size_t voxel, const Active& a) const;

  BinaryMask label_;
  std::vector<int32_t> component_of_;  // -1 outside label
  std::vector<std::vector<size_t>> component_voxels_;
  std::vector<int> suppressed_;         // component ids
  std::vector<int32_t> suppressed_slot_;  // component id -> index in suppressed_, or -1
  std::vector<int32_t> blob_of_;         // -1 outside blobs
  std::vector<std::vector<size_t>> blob_voxels_;
};

/// 6-connected component labelling. Returns per-voxel ids (-1 background)
/// and the component count.
std::vector<int32_t> connected_components(const BinaryMask& m, int& count);

}  // namespace volseg
