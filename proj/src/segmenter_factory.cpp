#include "volseg/segmenter_factory.hpp"

namespace volseg {

void SegmenterSpec::validate() const {
  static const char* kTypes[] = {"oracle", "click_responsive", "threshold", "constant", "passthrough", "process", "http"};
  bool known = false;
  for (const char* t : kTypes) known |= type == t;
  if (!known) fail(ErrorKind::Config, "unknown segmenter type '" + type + "'");
  if (type == "process" && command.empty()) fail(ErrorKind::Config, "process segmenter needs a command");
  if (type == "http" && url.empty()) fail(ErrorKind::Config, "http segmenter needs a url");
}

std::shared_ptr<const Segmenter> make_segmenter(const SegmenterSpec& spec, const BinaryMask* label, uint64_t seed) {
  spec.validate();
  if (spec.needs_label() && !label)
    fail(ErrorKind::Backend, "segmenter '" + spec.type + "' needs a ground-truth label");
  if (spec.type == "oracle") return std::make_shared<OracleSegmenter>(*label);
  if (spec.type == "click_responsive") {
    ClickResponsiveOptions o = spec.oracle;
    o.seed = seed;
    return std::make_shared<ClickResponsiveOracle>(*label, o);
  }
  if (spec.type == "threshold") return std::make_shared<ThresholdSegmenter>(spec.threshold);
  if (spec.type == "constant") return std::make_shared<ConstantSegmenter>(spec.value);
  if (spec.type == "passthrough") return std::make_shared<PassThroughSegmenter>();
  if (spec.type == "process")
    return std::make_shared<ExternalSegmenter>(make_process_transport(spec.command), spec.external);
  return std::make_shared<ExternalSegmenter>(make_http_transport(spec.url), spec.external);
}

}  // namespace volseg
