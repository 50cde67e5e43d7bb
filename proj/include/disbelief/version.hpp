#pragma once

namespace disbelief {

inline constexpr const char* kVersion = "0.1.0";

} // namespace disbelief
