#pragma once

namespace relabund {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace relabund
