#pragma once

#include <stdexcept>
#include <string>

namespace coxforge {

// Categories map one-to-one onto the C API status codes and CLI exit codes.
enum class ErrorKind {
    io = 1,
    config = 2,
    numeric = 3,
    dimension = 4,
    parameter = 5,
    degenerate = 6,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool ok, ErrorKind kind, const std::string& what) {
    if (!ok) throw Error(kind, what);
}

}  // namespace coxforge
