#ifndef HARDBALL_ERRORS_HPP
#define HARDBALL_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace hardball {

/// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Parameter / input validation.
struct DomainError : Error { using Error::Error; };
struct RangeError : Error { using Error::Error; };

// Core numerics.
struct ZeroVelocity : Error { using Error::Error; };

// Dynamics.
struct NotApproaching : Error { using Error::Error; };
struct ConservationDrift : Error { using Error::Error; };
struct AccumulationSuspected : Error { using Error::Error; };
struct UnsupportedMultiplicity : Error { using Error::Error; };

// Neutral-space analysis.
struct SingularSegment : Error { using Error::Error; };
struct DegenerateCollision : Error { using Error::Error; };
struct TopologyChange : Error { using Error::Error; };

// Tangent propagation.
struct GrazingEvent : Error { using Error::Error; };

// Sampling.
struct RejectionOverflow : Error { using Error::Error; };

// Files and configuration.
struct IoError : Error { using Error::Error; };

struct ConfigError : Error {
    ConfigError(const std::string& msg, int line, int column)
        : Error(msg + " (line " + std::to_string(line) + ", column " +
                std::to_string(column) + ")"),
          line(line), column(column) {}
    explicit ConfigError(const std::string& msg) : Error(msg), line(0), column(0) {}
    int line;
    int column;
};

} // namespace hardball

#endif
