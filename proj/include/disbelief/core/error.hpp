#pragma once

#include <stdexcept>
#include <string>

namespace disbelief {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes or widths that do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf produced somewhere in a computation.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Bad argument outside shape checks (nonpositive std, non-binary target, ...).
class ValueError : public Error {
public:
    using Error::Error;
};

/// Malformed file content; message carries the byte offset or line.
class ParseError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace disbelief
