#pragma once

namespace ordstab {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace ordstab
