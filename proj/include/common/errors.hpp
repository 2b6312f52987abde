#pragma once

#include <stdexcept>
#include <string>

namespace common {

// Error taxonomy shared by every module. The CLI maps these onto exit codes:
// ConfigError -> 2, IoError -> 3, everything else derived from Error -> 4.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

class ContractError : public Error {
public:
    explicit ContractError(const std::string& msg) : Error(msg) {}
};

class InputError : public Error {
public:
    explicit InputError(const std::string& msg) : Error(msg) {}
};

class StateError : public Error {
public:
    explicit StateError(const std::string& msg) : Error(msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// Raised by route planning when the destination is unreachable; callers
// resample endpoints rather than aborting.
class NoRouteError : public Error {
public:
    explicit NoRouteError(const std::string& msg) : Error(msg) {}
};

}  // namespace common
