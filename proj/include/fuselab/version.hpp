#pragma once

namespace fuselab {
inline constexpr const char* kVersion = "0.3.0";
}
