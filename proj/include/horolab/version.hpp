#pragma once

namespace horolab {

inline constexpr const char* kEngineVersion = "0.1.0";

}  // namespace horolab
