#pragma once

#include <stdexcept>
#include <string>

namespace aird {

// Base for everything thrown by the library.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad tunables or malformed configuration. The CLI maps this to exit code 2.
struct config_error : error {
    using error::error;
};

// File-format and ingestion problems (bad magic, truncation, count mismatch).
struct io_error : error {
    using error::error;
};

} // namespace aird
