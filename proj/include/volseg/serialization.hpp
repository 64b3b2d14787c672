#pragma once

#include "json.hpp"
#include "volseg/guidance.hpp"
#include "volseg/segmenter_factory.hpp"
#include "volseg/strategy.hpp"
#include "volseg/windowing.hpp"

// nlohmann::json conversions for the types that appear in configs, reports
// and the REST API. Parsing failures throw volseg::Error(Config) through
// `from_json_checked`.
namespace volseg {

void to_json(nlohmann::json& j, const Dims& d);
void from_json(const nlohmann::json& j, Dims& d);
void to_json(nlohmann::json& j, const Index3& p);
void from_json(const nlohmann::json& j, Index3& p);
void to_json(nlohmann::json& j, const Spacing& s);
void from_json(const nlohmann::json& j, Spacing& s);

/// "window" accepts a single edge length or [wx,wy,wz].
void to_json(nlohmann::json& j, const WindowConfig& c);
void from_json(const nlohmann::json& j, WindowConfig& c);
void to_json(nlohmann::json& j, const WindowGrid& g);

void to_json(nlohmann::json& j, const StoppingCriterion& c);
void from_json(const nlohmann::json& j, StoppingCriterion& c);

/// {"pos":[x,y,z],"cls":"tumor","iteration":k}
void to_json(nlohmann::json& j, const Click& c);
void from_json(const nlohmann::json& j, Click& c);
void to_json(nlohmann::json& j, const ClickSet& s);
void from_json(const nlohmann::json& j, ClickSet& s);

void to_json(nlohmann::json& j, const SegmenterSpec& s);
void from_json(const nlohmann::json& j, SegmenterSpec& s);

void to_json(nlohmann::json& j, const IterationRecord& r);
void to_json(nlohmann::json& j, const Trajectory& t);

template <typename T>
T from_json_checked(const nlohmann::json& j, const char* what) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string(what) + ": " + e.what());
  }
}

}  // namespace volseg
