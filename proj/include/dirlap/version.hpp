#pragma once

namespace dirlap {

inline constexpr const char* version = "0.1.0";

}  // namespace dirlap
