#pragma once

namespace vfpp {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace vfpp
