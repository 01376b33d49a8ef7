#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace flowsentry {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller violated an operation's precondition (bad config, bad shape).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Input data cannot be used (malformed capture, class shortfall, ...).
class DataError : public Error {
public:
    using Error::Error;
};

/// A Zeek log could not be parsed. line() is 0 for file-level problems.
class ParseError : public DataError {
public:
    ParseError(std::size_t line, const std::string& what)
        : DataError(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }
    bool file_level() const noexcept { return line_ == 0; }

private:
    std::size_t line_;
};

}  // namespace flowsentry
