#pragma once

#include <memory>
#include <string>
#include <vector>

#include "volseg/external_segmenter.hpp"
#include "volseg/segmenter.hpp"

namespace volseg {

/// Declarative backend choice, as written in experiment configs and
/// session requests.
///   oracle            ground truth, ignores guidance
///   click_responsive  ClickResponsiveOracle
///   threshold         image > threshold
///   constant          fixed probability
///   passthrough       echoes the image channel
///   process           external model over stdin/stdout
///   http              external model over HTTP POST
struct SegmenterSpec {
  std::string type = "click_responsive";
  float threshold = 0.5f;
  float value = 0.5f;
  ClickResponsiveOptions oracle;  // seed is derived per volume
  std::vector<std::string> command;
  std::string url;
  ExternalOptions external;

  void validate() const;
  bool needs_label() const { return type == "oracle" || type == "click_responsive"; }
};

/// Builds a backend. `label` is required for the label-driven types;
/// `seed` feeds the click-responsive oracle's component and blob choices.
std::shared_ptr<const Segmenter> make_segmenter(const SegmenterSpec& spec, const BinaryMask* label, uint64_t seed);

}  // namespace volseg
