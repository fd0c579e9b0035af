#pragma once

#include <stdexcept>
#include <string>

namespace rcdlab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inconsistent dimensions or malformed structure; no report can be produced.
class StructuralError : public Error {
public:
    using Error::Error;
};

/// A precondition on an argument value was violated.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// An iterative solver failed to reach its contract.
class SolverError : public Error {
public:
    SolverError(const std::string& what, double achieved_gap)
        : Error(what), achieved_gap_(achieved_gap) {}
    double achieved_gap() const noexcept { return achieved_gap_; }

private:
    double achieved_gap_;
};

/// The relaxed intermediate-point set is empty for the requested slack.
class InfeasibleIntermediate : public Error {
public:
    InfeasibleIntermediate(const std::string& what, double minimal_epsilon)
        : Error(what), minimal_epsilon_(minimal_epsilon) {}
    double minimal_epsilon() const noexcept { return minimal_epsilon_; }

private:
    double minimal_epsilon_;
};

}  // namespace rcdlab
