#pragma once

#include <stdexcept>
#include <string>

namespace hwsched {

/// Bad user input: out-of-range parameters, malformed files, mismatched grids.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// The activity graph is not a tree, or an assignment breaks the state identities.
class StructureError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Row and column sums handed to the lifting map do not balance.
class BalanceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An iterative solver hit its iteration cap.
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace hwsched
