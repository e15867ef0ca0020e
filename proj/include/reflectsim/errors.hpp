#pragma once

#include <stdexcept>
#include <string>

namespace reflectsim {

/// Configuration values that cannot describe a valid scene, array or run.
class InvalidConfiguration : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A caller passed an argument outside the operation's domain.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Source and focal directions cancel; no mirror normal exists.
class DegenerateBisector : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Internal protocol misuse (stale caches, unprepared buffers).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Checkpoint does not match the configuration it is used with.
class IncompatibleCheckpoint : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace reflectsim
