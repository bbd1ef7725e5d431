#pragma once

#include <stdexcept>
#include <string>

namespace fuselab {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Violated precondition on a value: non-positive field, bad index, schema mismatch.
class DomainError : public Error {
public:
    using Error::Error;
};

// Unreadable or malformed input files.
class DataError : public Error {
public:
    using Error::Error;
};

// Factorization failures and other numerical breakdowns.
class NumericError : public Error {
public:
    using Error::Error;
};

// Every restart of a fit failed; carries diagnostics in what().
class TrainingError : public NumericError {
public:
    using NumericError::NumericError;
};

}  // namespace fuselab
