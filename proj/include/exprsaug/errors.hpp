#pragma once

#include <stdexcept>

namespace exprsaug {

// Malformed or inconsistent input data (files, tables, labels).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration or command-line usage.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite values during training or scoring.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace exprsaug
