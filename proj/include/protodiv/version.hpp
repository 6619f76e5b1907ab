#pragma once

namespace protodiv {

inline constexpr const char* kToolName = "protodiv";
inline constexpr const char* kVersion = "0.1.0";

}  // namespace protodiv
