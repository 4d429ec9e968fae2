#pragma once

#include <stdexcept>
#include <string>

namespace isokit {

enum class ErrorKind {
    domain,
    numeric,
    accuracy,
    accounting,
    non_convergence,
    config,
    io,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct DomainError : Error {
    explicit DomainError(const std::string& what) : Error(ErrorKind::domain, what) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

// Raised when an integrator or solver leaves its accuracy envelope.
struct AccuracyError : Error {
    explicit AccuracyError(const std::string& what) : Error(ErrorKind::accuracy, what) {}
};

struct AccountingError : Error {
    explicit AccountingError(const std::string& what) : Error(ErrorKind::accounting, what) {}
};

struct NonConvergenceError : Error {
    explicit NonConvergenceError(const std::string& what)
        : Error(ErrorKind::non_convergence, what) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

struct IoError : Error {
    explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

inline int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::config: return 2;
        case ErrorKind::domain: return 3;
        case ErrorKind::numeric: return 4;
        case ErrorKind::accuracy: return 5;
        case ErrorKind::accounting: return 6;
        case ErrorKind::non_convergence: return 7;
        case ErrorKind::io: return 8;
    }
    return 1;
}

inline const char* kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::config: return "config";
        case ErrorKind::domain: return "domain";
        case ErrorKind::numeric: return "numeric";
        case ErrorKind::accuracy: return "accuracy";
        case ErrorKind::accounting: return "accounting";
        case ErrorKind::non_convergence: return "non-convergence";
        case ErrorKind::io: return "io";
    }
    return "unknown";
}

}  // namespace isokit
