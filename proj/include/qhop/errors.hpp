#pragma once

#include <stdexcept>
#include <string>

namespace qhop {

// Invalid configuration or request shape. CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A pipeline stage failed mid-run. CLI maps this to exit code 3.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& what)
        : std::runtime_error("[" + stage + "] " + what), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

namespace kms {

class InsufficientKeys : public std::runtime_error {
public:
    explicit InsufficientKeys(const std::string& what = "insufficient keys")
        : std::runtime_error(what) {}
};

class UnknownKey : public std::runtime_error {
public:
    explicit UnknownKey(const std::string& what = "unknown or consumed key_ID")
        : std::runtime_error(what) {}
};

class InvalidRequest : public std::runtime_error {
public:
    explicit InvalidRequest(const std::string& what) : std::runtime_error(what) {}
};

class CapacityExceeded : public std::runtime_error {
public:
    explicit CapacityExceeded(const std::string& what = "key store capacity exceeded")
        : std::runtime_error(what) {}
};

} // namespace kms
} // namespace qhop
