#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace vdr {

// Error taxonomy mapped to CLI exit codes: usage(1), data(2), numeric(3).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-fatal diagnostics (skipped volumes, metric fallbacks, ...).
using WarningSink = std::vector<std::string>;

inline void warn(WarningSink* sink, std::string msg) {
    if (sink) sink->push_back(std::move(msg));
}

inline int64_t idiv_ceil(int64_t a, int64_t b) { return (a + b - 1) / b; }

}  // namespace vdr
