#pragma once
#include <charconv>
#include <string>

namespace giope {

/// Shortest round-trip decimal form of a double. Deterministic, so emitted
/// tables and rule strings are byte-stable across runs.
inline std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

} // namespace giope
