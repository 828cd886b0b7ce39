#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mf {

/// Base of every error raised by the library. The CLI maps subclasses to
/// exit codes (usage 1, data 2, numeric 3).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or input shapes disagree with what a layer or model declares.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// An index (token id, bin, offset) is outside its valid range.
class RangeError : public Error {
public:
    using Error::Error;
};

/// An operation was called in the wrong lifecycle state.
class StateError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf reached a place that requires finite numbers.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Caller-supplied data violates a precondition.
class InputError : public Error {
public:
    using Error::Error;
};

/// A document could not be tokenized/parsed; carries the byte offset.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// A well-formed document lacks a required field or has a wrong type.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// A persisted artifact does not match the running build or pipeline.
class CompatibilityError : public Error {
public:
    using Error::Error;
};

/// Models or pipelines assembled in an unsupported way.
class ConfigurationError : public Error {
public:
    using Error::Error;
};

/// A metric is mathematically undefined for the given input.
class UndefinedMetricError : public Error {
public:
    using Error::Error;
};

/// The synthetic corpus specification cannot be realized.
class GenerationError : public Error {
public:
    using Error::Error;
};

}  // namespace mf
