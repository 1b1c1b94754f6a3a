#pragma once

#include <stdexcept>
#include <string>

namespace ssga {

// Maps one-to-one onto process exit codes in the CLI.
enum class ErrorKind { config = 1, numerical = 2, io = 3 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline Error config_error(const std::string& what) { return Error(ErrorKind::config, what); }
inline Error numerical_error(const std::string& what) { return Error(ErrorKind::numerical, what); }
inline Error io_error(const std::string& what) { return Error(ErrorKind::io, what); }

}  // namespace ssga
