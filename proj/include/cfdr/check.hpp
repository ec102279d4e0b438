#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace cfdr {

// All recoverable failures surface as cfdr::error; callers decide whether to
// abort the realization or the whole run.
struct error : std::runtime_error {
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw error(msg); }

}  // namespace cfdr

#define CFDR_CHECK(cond, msg)                          \
    do {                                               \
        if (!(cond)) {                                 \
            std::ostringstream oss_;                   \
            oss_ << msg;                               \
            ::cfdr::fail(oss_.str());                  \
        }                                              \
    } while (0)
