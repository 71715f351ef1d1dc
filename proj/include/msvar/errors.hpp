#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace msvar {

/// One row of an optimizer trace. Solvers fill the terms they own and leave
/// the rest at zero (the level-set driver reports its length term in tv_term).
struct TraceRow {
    std::size_t iter = 0;
    double loss = 0.0;
    double data_term = 0.0;
    double tv_term = 0.0;
    double bias_tv_term = 0.0;
};

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numeric parameter is outside its documented range.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Malformed input data: shape mismatch, non-finite values, bad labels.
class InputError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// A solver stopped without meeting its tolerance. Carries the loss trace;
/// SolverFailure<R> additionally carries the last accepted state.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, std::vector<TraceRow> trace)
        : Error(what), trace_(std::move(trace)) {}

    const std::vector<TraceRow>& trace() const noexcept { return trace_; }

private:
    std::vector<TraceRow> trace_;
};

template <class Result>
class SolverFailure : public ConvergenceError {
public:
    SolverFailure(const std::string& what, Result result)
        : ConvergenceError(what, result.trace), result_(std::move(result)) {}

    const Result& result() const noexcept { return result_; }

private:
    Result result_;
};

}  // namespace msvar
