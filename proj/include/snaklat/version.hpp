#pragma once

namespace snaklat {

inline constexpr const char* version = "0.1.0";

}  // namespace snaklat
