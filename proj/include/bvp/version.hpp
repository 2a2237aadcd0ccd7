#pragma once

namespace bvp {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace bvp
