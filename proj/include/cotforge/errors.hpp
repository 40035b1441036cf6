#pragma once

#include <stdexcept>
#include <string>

namespace cotforge {

// Error hierarchy. Every failure surfaced to callers derives from Error so the
// CLI can map categories to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

// Malformed input data (bad JSON line, bad template file).
class ParseError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Endpoint communication failed after exhausting retries.
class TransportError : public Error {
public:
    using Error::Error;
};

// Replay transport has no cached entry for a request hash.
class CacheMissError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

// Pipeline stage invoked before the artifacts it depends on exist.
class DependencyError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

} // namespace cotforge
