#pragma once
// Exception hierarchy shared by all activeqc modules.

#include <stdexcept>
#include <string>

namespace aqc {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Caller broke a documented precondition (shape mismatch, empty set, ...).
class ContractViolation : public Error {
public:
    using Error::Error;
};

// Signal has (numerically) zero variance; R^2 is undefined.
class DegenerateSignalError : public Error {
public:
    using Error::Error;
};

// Fewer than two usable per-bias fits to build a loop from.
class InsufficientFitsError : public Error {
public:
    using Error::Error;
};

// Cholesky failed even after jitter escalation.
class IllConditionedError : public Error {
public:
    using Error::Error;
};

// Every hyperparameter candidate failed to factorize.
class SelectionFailureError : public Error {
public:
    using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, int epoch) : Error(what), epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

class DegenerateNormalizationError : public Error {
public:
    using Error::Error;
};

class RegionConfigError : public Error {
public:
    using Error::Error;
};

class SplitError : public Error {
public:
    using Error::Error;
};

class AlreadyMeasuredError : public Error {
public:
    using Error::Error;
};

// Malformed configuration or file header.
class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace aqc
