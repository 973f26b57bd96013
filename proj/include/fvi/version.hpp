#pragma once

namespace fvi {

inline constexpr const char *library_version = "0.1.0";

}  // namespace fvi
