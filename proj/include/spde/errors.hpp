#pragma once

#include <stdexcept>
#include <string>

namespace spde {

// Invalid argument or configuration; the CLI maps this to exit code 2.
class validation_error : public std::runtime_error {
public:
    explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite state detected during a simulation; CLI exit code 3.
class blowup_error : public std::runtime_error {
public:
    blowup_error(const std::string& msg, double t, long path)
        : std::runtime_error(msg), time(t), path_index(path) {}

    double time = 0.0;
    long path_index = -1;
};

// Failure inside a numerical kernel (eigensolver did not converge, expm
// produced non-finite entries, singular linear solve).
class numerical_error : public std::runtime_error {
public:
    explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace spde
