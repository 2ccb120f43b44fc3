#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace more {

// Shape, range, or configuration violation detected before any arithmetic.
class StructuralError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Iterative routine failed or a computation produced non-finite values.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what, std::size_t iterations = 0)
        : std::runtime_error(what), iterations_(iterations) {}

    std::size_t iterations() const noexcept { return iterations_; }

private:
    std::size_t iterations_;
};

}  // namespace more
