#pragma once

namespace uwmmse {

inline constexpr const char* kVersion = "uwmmse 0.1.0";

}  // namespace uwmmse
