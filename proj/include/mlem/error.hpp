#pragma once

#include <stdexcept>
#include <string>

namespace mlem {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input data violates a schema or shape contract.
class ValidationError : public Error {
public:
    using Error::Error;
};

class AlignmentError : public Error {
public:
    AlignmentError(std::string what, std::size_t expected, std::size_t actual)
        : Error(std::move(what)), expected_(expected), actual_(actual) {}
    std::size_t expected() const { return expected_; }
    std::size_t actual() const { return actual_; }

private:
    std::size_t expected_;
    std::size_t actual_;
};

/// Malformed on-disk artifact (bad magic, truncated payload, bad header).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Missing or unreadable input path.
class IoError : public Error {
public:
    using Error::Error;
};

/// A correlation whose inputs have zero variance.
class UndefinedCorrelation : public Error {
public:
    using Error::Error;
};

class GenerationError : public Error {
public:
    using Error::Error;
};

/// Signature files compared together were built from different feature schemas.
class SchemaMismatch : public Error {
public:
    using Error::Error;
};

}  // namespace mlem
