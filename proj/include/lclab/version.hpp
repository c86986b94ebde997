// version.hpp - library version string used by the CLI and run manifests.
#pragma once

namespace lclab {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace lclab
