#pragma once

#include <stdexcept>
#include <string>

namespace lot {

// Malformed, truncated or unreadable input. Maps to exit status 1.
class input_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input parsed fine but breaks a structural invariant or an analysis
// precondition. Maps to exit status 2.
class invariant_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace lot
