#pragma once

namespace tsforge {

inline constexpr const char* kVersionString = "tsforge 1.0.0";

}  // namespace tsforge
