#pragma once

#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>

namespace antidote {

/// Root of every error raised by the library. CLI exit codes are derived from
/// the concrete subclass (see exit_code()).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class EmptyInput : public Error {
public:
    using Error::Error;
};

class IncompatibleSignatures : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

// Request or response body does not match the role schema.
class ContractError : public Error {
public:
    using Error::Error;
};

// Transient transport failure; retried by the gateway, never escapes call().
class TransportError : public Error {
public:
    using Error::Error;
};

class BackendError : public Error {
public:
    BackendError(std::string role, std::size_t attempts, const std::string& last_error)
        : Error("backend '" + role + "' failed after " + std::to_string(attempts) +
                " attempt(s): " + last_error),
          role_(std::move(role)),
          attempts_(attempts) {}

    const std::string& role() const noexcept { return role_; }
    std::size_t attempts() const noexcept { return attempts_; }

private:
    std::string role_;
    std::size_t attempts_;
};

class RewriteFailed : public Error {
public:
    using Error::Error;
};

// Backend answered with the REJECT sentinel.
class CaptionRejected : public Error {
public:
    using Error::Error;
};

class InsufficientData : public Error {
public:
    explicit InsufficientData(std::map<std::string, std::size_t> shortfall)
        : Error(describe(shortfall)), shortfall_(std::move(shortfall)) {}

    const std::map<std::string, std::size_t>& shortfall() const noexcept { return shortfall_; }

private:
    static std::string describe(const std::map<std::string, std::size_t>& shortfall) {
        std::string msg = "insufficient data:";
        for (const auto& [kind, missing] : shortfall) {
            msg += " " + kind + " short by " + std::to_string(missing) + ";";
        }
        return msg;
    }

    std::map<std::string, std::size_t> shortfall_;
};

class InvalidToken : public Error {
public:
    using Error::Error;
};

class Diverged : public Error {
public:
    explicit Diverged(std::size_t step)
        : Error("training diverged: non-finite loss at step " + std::to_string(step)), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

class StageOrderError : public Error {
public:
    using Error::Error;
};

/// Process exit code for an error: 2 config, 3 backend, 4 data shortfall, 1 otherwise.
inline int exit_code(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const StageOrderError*>(&e) ||
        dynamic_cast<const ContractError*>(&e)) {
        return 2;
    }
    if (dynamic_cast<const BackendError*>(&e)) return 3;
    if (dynamic_cast<const InsufficientData*>(&e)) return 4;
    return 1;
}

}  // namespace antidote
