#pragma once

namespace cota {

inline constexpr const char* kVersion = "cota 0.1.0";

}  // namespace cota
