#pragma once

#include <stdexcept>
#include <string>

namespace pdseg {

/// File missing, unreadable, unwritable or malformed.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A requested target could not be reached (for example a degradation level).
class Unreachable : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace pdseg
