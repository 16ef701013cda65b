#pragma once

#include <stdexcept>
#include <string>

namespace lorachain {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// An exact integer cost evaluation left the representable range.
class OverflowError : public Error {
public:
    using Error::Error;
};

/// Variant is known to the cost model but has no executable graph (B6-B8).
class UnsupportedVariantError : public Error {
public:
    using Error::Error;
};

/// A non-finite value showed up where finite inputs were expected.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Timing could not be trusted (clock went backwards, zero resolution,
/// concurrent session).
class MeasurementError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace lorachain
