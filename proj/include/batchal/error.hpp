#pragma once

#include <stdexcept>
#include <string>

namespace batchal {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Tensor or parameter dimensions disagree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Empty or inconsistent data passed to training or metrics.
class DataError : public Error {
public:
    using Error::Error;
};

/// Classification target outside {0, 1}.
class LabelError : public Error {
public:
    using Error::Error;
};

/// Physical argument outside the domain of a closed-form model.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Batch larger than the candidates available to choose from.
class BudgetError : public Error {
public:
    using Error::Error;
};

class EvaluationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace batchal
