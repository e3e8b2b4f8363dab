#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cforge {

// Exit-code aligned error hierarchy. The CLI maps these to process exit codes:
//   config 2, precondition 3, numeric 4, strict-mode 5.
class Error : public std::runtime_error {
public:
    enum class Code : int { Config = 2, Precondition = 3, Numeric = 4, StrictMode = 5 };

    Error(Code code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    Code code() const { return code_; }
    int exit_code() const { return static_cast<int>(code_); }

private:
    Code code_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(Code::Config, msg) {}
};

class PreconditionError : public Error {
public:
    explicit PreconditionError(const std::string& msg) : Error(Code::Precondition, msg) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(Code::Numeric, msg) {}
};

class StrictModeError : public Error {
public:
    explicit StrictModeError(const std::string& msg) : Error(Code::StrictMode, msg) {}
};

inline void require(bool cond, Error::Code code, const std::string& msg) {
    if (!cond) {
        switch (code) {
            case Error::Code::Config: throw ConfigError(msg);
            case Error::Code::Precondition: throw PreconditionError(msg);
            case Error::Code::Numeric: throw NumericError(msg);
            case Error::Code::StrictMode: throw StrictModeError(msg);
        }
    }
}

inline void require_pre(bool cond, const std::string& msg) {
    if (!cond) throw PreconditionError(msg);
}

}  // namespace cforge
