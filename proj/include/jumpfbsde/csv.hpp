#pragma once

#include <cstdio>
#include <string>

namespace jumpfbsde {

/// Shortest round-trip-safe decimal form used in every CSV output.
inline std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace jumpfbsde
