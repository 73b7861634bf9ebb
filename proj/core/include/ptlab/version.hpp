#pragma once

namespace ptlab {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace ptlab
