#pragma once

#include <stdexcept>
#include <string>

namespace ivpower {

// Exit codes used by the command-line front end. Every error type below maps
// onto exactly one of them.
enum class ExitCode : int { ok = 0, config = 2, data = 3, numerical = 4 };

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual ExitCode exit_code() const noexcept { return ExitCode::numerical; }
};

class ConfigError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::config; }
};

class DataError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::data; }
};

class NumericalError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::numerical; }
};

// The CPS support at the evaluation point is a single value: the sign of the
// ATE is not identified and the IV-based bounds collapse to Manski's.
class IrrelevantInstruments : public DataError {
public:
    IrrelevantInstruments() : DataError("irrelevant instruments") {}
    explicit IrrelevantInstruments(const std::string& what) : DataError(what) {}
};

class SeparationError : public NumericalError {
public:
    explicit SeparationError(const std::string& what) : NumericalError("separation: " + what) {}
};

class ConvergenceError : public NumericalError {
public:
    explicit ConvergenceError(const std::string& what)
        : NumericalError("non-convergence: " + what) {}
};

}  // namespace ivpower
