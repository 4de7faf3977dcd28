#pragma once

#include <stdexcept>
#include <string>

namespace skewstream {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A value violates the documented range of an operation or type.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// A buffer, canvas or packet would exceed its configured size.
class CapacityError : public Error {
public:
    using Error::Error;
};

/// An operation was invoked out of order (e.g. finalizing an incomplete stack).
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// Stack metadata is missing or disagrees with the data on disk.
class MetadataError : public Error {
public:
    MetadataError(const std::string& what, std::string field = {})
        : Error(what), field_(std::move(field)) {}

    /// Name of the offending metadata field, empty when not field specific.
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed image file or wire packet.
class FormatError : public Error {
public:
    using Error::Error;
};

class SourceClosedError : public Error {
public:
    using Error::Error;
};

/// The frame source cannot perform the requested action (e.g. stage moves on a file replay).
class UnsupportedError : public Error {
public:
    using Error::Error;
};

class InsufficientDataError : public Error {
public:
    using Error::Error;
};

}  // namespace skewstream
